"""
CSV ingestion, the bundled mortality case study and report emission.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .model import TimeSeriesData

__all__ = [
    "SCHEMA_VERSION",
    "CsvDataError",
    "ColumnMapping",
    "MortalityDataset",
    "load_csv",
    "read_columns",
    "load_mortality",
    "mortality_csv_path",
    "build_mortality_design",
    "render_fit_text",
    "fit_to_json",
    "fit_from_json",
    "emit_report",
]

SCHEMA_VERSION = 1


class CsvDataError(ValueError):
    """Malformed CSV input; ``row`` is the 1-based data row (header excluded)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass
class ColumnMapping:
    response: str
    covariates: list = field(default_factory=list)
    skew_covariates: list = field(default_factory=list)
    intercept: bool = True
    time: str | None = None


def read_columns(path, columns) -> dict[str, np.ndarray]:
    """Read the named numeric columns of a headed UTF-8 CSV file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvDataError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise CsvDataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in columns}
        values = {c: [] for c in columns}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c, j in idx.items():
                cell = row[j].strip() if j < len(row) else ""
                if cell == "" or cell.upper() in ("NA", "NAN"):
                    raise CsvDataError(f"{path}: missing value in row {row_no}, column {c!r}", row_no, c)
                try:
                    x = float(cell)
                except ValueError:
                    raise CsvDataError(
                        f"{path}: cannot parse {cell!r} in row {row_no}, column {c!r}", row_no, c
                    ) from None
                if not math.isfinite(x):
                    raise CsvDataError(f"{path}: non-finite value in row {row_no}, column {c!r}", row_no, c)
                values[c].append(x)
    return {c: np.array(v, dtype=float) for c, v in values.items()}


def load_csv(path, mapping: ColumnMapping) -> TimeSeriesData:
    """Build a :class:`TimeSeriesData` from a CSV file.

    Responses must be strictly positive; the error names the offending row.
    """
    cols = [mapping.response, *mapping.covariates, *mapping.skew_covariates]
    if mapping.time:
        cols.append(mapping.time)
    cols = list(dict.fromkeys(cols))
    data = read_columns(path, cols)
    y = data[mapping.response]
    bad = np.flatnonzero(y <= 0)
    if bad.size:
        r = int(bad[0]) + 1
        raise CsvDataError(
            f"{path}: response {mapping.response!r} must be positive (row {r} has {y[bad[0]]:g})",
            r,
            mapping.response,
        )
    n = len(y)
    if n == 0:
        raise CsvDataError(f"{path}: no data rows")
    xs = [np.ones(n)] if mapping.intercept else []
    xs += [data[c] for c in mapping.covariates]
    if not xs:
        raise CsvDataError("the median model needs an intercept or at least one covariate")
    W = np.column_stack([np.ones(n)] + [data[c] for c in mapping.skew_covariates])
    time = data[mapping.time] if mapping.time else None
    return TimeSeriesData(y, np.column_stack(xs), W, time)


# mortality case study ------------------------------------------------------


def mortality_csv_path() -> Path:
    return Path(str(resources.files("lsarmax") / "data" / "mortality.csv"))


@dataclass
class MortalityDataset:
    """Weekly cardiovascular mortality, temperature (F) and particulates, LA County 1970-1979."""

    time: np.ndarray
    cmort: np.ndarray
    tempr: np.ndarray
    part: np.ndarray

    EXPECTED = {"n": 508, "min": 68.11, "median": 87.33, "mean": 88.699, "max": 132.04}

    def validate(self) -> None:
        c = self.cmort
        got = {
            "n": len(c),
            "min": float(c.min()),
            "median": float(np.median(c)),
            "mean": float(c.mean()),
            "max": float(c.max()),
        }
        if got["n"] != self.EXPECTED["n"]:
            raise ValueError(f"mortality data has {got['n']} rows, expected 508")
        for key in ("min", "median", "mean", "max"):
            if abs(got[key] - self.EXPECTED[key]) > 5e-3:
                raise ValueError(f"mortality {key} is {got[key]:.4f}, expected {self.EXPECTED[key]}")


def load_mortality(path=None) -> MortalityDataset:
    path = mortality_csv_path() if path is None else Path(path)
    cols = read_columns(path, ["time", "cmort", "tempr", "part"])
    ds = MortalityDataset(cols["time"], cols["cmort"], cols["tempr"], cols["part"])
    ds.validate()
    return ds


def build_mortality_design(
    raw: MortalityDataset, centered: bool = True, trend: str = "calendar"
) -> TimeSeriesData:
    """X = [1, trend, temp, temp**2, particulates] and W = [1].

    ``centered`` subtracts the mean temperature before squaring.  ``trend`` is
    ``"calendar"`` (fractional years) or ``"index"`` (week number 1..n).
    """
    n = len(raw.cmort)
    if trend == "calendar":
        tr = raw.time
    elif trend == "index":
        tr = np.arange(1, n + 1, dtype=float)
    else:
        raise ValueError("trend must be 'calendar' or 'index'")
    temp = raw.tempr - raw.tempr.mean() if centered else raw.tempr
    X = np.column_stack([np.ones(n), tr, temp, temp**2, raw.part])
    return TimeSeriesData(raw.cmort, X, np.ones((n, 1)), raw.time)


# reports -------------------------------------------------------------------


def _fmt(x, digits=4, bound=False):
    """Fixed-point with ``digits`` decimals; tiny values print as ``<0.0001`` when
    ``bound`` (standard errors) and in scientific notation otherwise (estimates)."""
    if x is None or not np.isfinite(x):
        return "NA"
    if x != 0 and abs(x) < 0.5 * 10**-digits:
        return f"<{10**-digits:.{digits}f}" if bound else f"{x:.{digits - 1}e}"
    return f"{x:.{digits}f}"


def _pval(p):
    if p is None or not np.isfinite(p):
        return ""
    return "<0.0001" if p < 1e-4 else f"{p:.4f}"


def render_fit_text(fit, title: str | None = None) -> str:
    """Estimates with SE in parentheses, beta p-values and RMSE/AIC/BIC."""
    spec = fit.spec
    kern = spec.kernel
    label = title or f"{kern.tag}-ARMAX({spec.p},{spec.q})"
    names = fit.param_names
    est = fit.theta_hat.to_flat()
    lines = [label]
    if kern.has_shape:
        lines.append(f"shape parameter: {kern.theta:g}")
    lines.append(f"{'parameter':<10} {'estimate (SE)':>24} {'p-value':>9}")
    for i, name in enumerate(names):
        pv = _pval(fit.p_values[i]) if name.startswith("beta") else ""
        cell = f"{_fmt(est[i])}({_fmt(fit.se[i], bound=True)})"
        lines.append(f"{name:<10} {cell:>24} {pv:>9}")
    lines.append(f"RMSE {fit.rmse:.4f}  AIC {fit.aic:.3f}  BIC {fit.bic:.3f}  loglik {fit.loglik_full:.3f}")
    lines.append(f"converged: {'yes' if fit.converged else 'no'} ({fit.iterations} iterations)")
    return "\n".join(lines) + "\n"


def fit_to_json(fit, extra: dict | None = None) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "fit", **fit.to_dict()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def fit_from_json(text_or_path):
    from .estimation import FitResult

    """Parse a fit document given as JSON text or a path; returns ``(FitResult, raw dict)``."""
    if isinstance(text_or_path, os.PathLike) or not str(text_or_path).lstrip().startswith("{"):
        text = Path(text_or_path).read_text(encoding="utf-8")
    else:
        text = str(text_or_path)
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind") != "fit":
        raise ValueError("not a fit document of a supported schema version")
    return FitResult.from_dict(doc), doc


def emit_report(result, fmt: str, path=None, extra: dict | None = None) -> str:
    """Render a fit, Monte Carlo table or residual report as ``json``, ``csv`` or ``text``.

    Writes to ``path`` when given and returns the rendered string.
    """
    from .diagnostics import ResidualReport
    from .estimation import FitResult
    from .simulation import McResultTable

    if isinstance(result, FitResult):
        if fmt == "json":
            out = fit_to_json(result, extra)
        elif fmt == "text":
            out = render_fit_text(result)
        elif fmt == "csv":
            rows = ["parameter,estimate,se,p_value"]
            est = result.theta_hat.to_flat()
            for i, name in enumerate(result.param_names):
                rows.append(f"{name},{float(est[i])!r},{float(result.se[i])!r},{float(result.p_values[i])!r}")
            out = "\n".join(rows) + "\n"
        else:
            raise ValueError(f"unknown format {fmt!r}")
    elif isinstance(result, McResultTable):
        if fmt == "csv":
            out = result.to_csv()
        elif fmt == "json":
            out = json.dumps({"schema_version": SCHEMA_VERSION, "kind": "monte_carlo", **result.to_dict(), **(extra or {})}, indent=2) + "\n"
        else:
            raise ValueError("Monte Carlo tables support csv and json")
    elif isinstance(result, ResidualReport):
        if fmt == "json":
            out = json.dumps({"schema_version": SCHEMA_VERSION, "kind": "diagnostics", **result.to_dict()}, indent=2) + "\n"
        elif fmt == "csv":
            lines = ["t,quantile_residual"] + [f"{i + 1},{float(x)!r}" for i, x in enumerate(result.rq)]
            out = "\n".join(lines) + "\n"
        else:
            raise ValueError("residual reports support csv and json")
    else:
        raise TypeError(f"cannot emit {type(result).__name__}")
    if path is not None:
        Path(path).write_text(out, encoding="utf-8")
    return out
