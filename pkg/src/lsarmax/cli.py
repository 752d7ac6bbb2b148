"""
Command line interface::

    lsarmax fit --config fit.toml
    lsarmax simulate --config sim.toml
    lsarmax mc --config mc.toml
    lsarmax diagnose --fit out/fit.json --data data.csv
    lsarmax theory --kappa 0.6 --zeta 0.3 --phi 1 --lags 10

Configs are flat TOML documents; unknown keys are rejected.  The output
directory defaults to ``$LSARMAX_OUTPUT_DIR`` (or the working directory).
Failures print one JSON line ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import io as lio
from .diagnostics import residual_report
from .estimation import FitOptions, fit, profile_theta
from .kernels import make_kernel
from .model import ModelSpec, ParamVector
from .simulation import McConfig, generate_dataset, run_monte_carlo
from .theory import ArmaPolynomials, check_stationarity, marginal_moments, psi_weights

OUTPUT_ENV = "LSARMAX_OUTPUT_DIR"

_NUM = (int, float)
_LIST = (list,)

FIT_KEYS = {
    "data": str,
    "design": str,  # "columns" or "mortality"
    "response": str,
    "covariates": _LIST,
    "skew_covariates": _LIST,
    "fit_intercept": bool,
    "temperature_centered": bool,
    "trend": str,
    "family": str,
    "kernel_param": _NUM,
    "kernel_grid": _LIST,
    "p": int,
    "q": int,
    "max_iter": int,
    "grad_tol": _NUM,
    "init_strategy": str,
    "seed": int,
    "output": str,
    "format": _LIST,
}

MODEL_KEYS = {
    "family": str,
    "kernel_param": _NUM,
    "p": int,
    "q": int,
    "beta": _LIST,
    "kappa": _LIST,
    "zeta": _LIST,
    "burnin": int,
    "covariate_rule": str,
    "covariates_file": str,
    "seed": int,
    "output": str,
}

SIM_KEYS = {**MODEL_KEYS, "tau": _LIST, "n": int}
MC_KEYS = {**MODEL_KEYS, "n_grid": _LIST, "phi_grid": _LIST, "replicates": int, "n_jobs": int}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def load_config(path, schema: dict) -> dict:
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    unknown = sorted(set(cfg) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, val in cfg.items():
        want = schema[key]
        if isinstance(val, dict):
            raise ConfigError(f"config must be flat; {key!r} is a table")
        if want is int and (isinstance(val, bool) or not isinstance(val, int)):
            raise ConfigError(f"{key!r} must be an integer")
        if want is _NUM and (isinstance(val, bool) or not isinstance(val, _NUM)):
            raise ConfigError(f"{key!r} must be a number")
        if want in (str, bool) and not isinstance(val, want):
            raise ConfigError(f"{key!r} must be of type {want.__name__}")
        if want is _LIST and not isinstance(val, list):
            raise ConfigError(f"{key!r} must be a list")
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def _resolve(cfg, key):
    p = Path(cfg[key])
    return p if p.is_absolute() else Path(cfg["_base"]) / p


def _outdir(args, cfg=None) -> Path:
    if getattr(args, "output", None):
        out = Path(args.output)
    elif cfg and "output" in cfg:
        out = _resolve(cfg, "output")
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg):
    if getattr(args, "seed", None) is not None:
        return args.seed
    return cfg.get("seed", 0)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _data_from_config(cfg, data_override=None):
    design = cfg.get("design", "columns")
    if design == "mortality":
        path = data_override or (_resolve(cfg, "data") if "data" in cfg else None)
        raw = lio.load_mortality(path)
        return lio.build_mortality_design(
            raw, centered=cfg.get("temperature_centered", True), trend=cfg.get("trend", "calendar")
        )
    if design != "columns":
        raise ConfigError("design must be 'columns' or 'mortality'")
    if "response" not in cfg:
        raise ConfigError("config needs 'response' (or design = 'mortality')")
    path = data_override or (_resolve(cfg, "data") if "data" in cfg else None)
    if path is None:
        raise ConfigError("config needs 'data'")
    mapping = lio.ColumnMapping(
        response=cfg["response"],
        covariates=list(cfg.get("covariates", [])),
        skew_covariates=list(cfg.get("skew_covariates", [])),
        intercept=cfg.get("fit_intercept", True),
    )
    return lio.load_csv(path, mapping)


def cmd_fit(args) -> int:
    cfg = load_config(args.config, FIT_KEYS)
    if args.uncentered:
        cfg["temperature_centered"] = False
    if args.trend:
        cfg["trend"] = args.trend
    out = _outdir(args, cfg)
    data = _data_from_config(cfg)
    param = cfg.get("kernel_param")
    if param is None and cfg.get("kernel_grid"):
        # the grid search overrides the shape; any grid value builds the spec
        param = cfg["kernel_grid"][0]
    kernel = make_kernel(cfg.get("family", "lognormal"), param)
    spec = ModelSpec(cfg.get("p", 0), cfg.get("q", 0), data.X.shape[1], data.W.shape[1], kernel)
    opts = FitOptions(
        max_iter=cfg.get("max_iter", 500),
        grad_tol=float(cfg.get("grad_tol", 1e-6)),
        init_strategy=cfg.get("init_strategy", "ols"),
        seed=_seed(args, cfg),
    )
    profile = None
    if "kernel_grid" in cfg:
        profile = profile_theta(spec, data, cfg["kernel_grid"], opts)
        result = profile.fits[profile.best]
    else:
        result = fit(spec, data, opts)
    source = {k: v for k, v in cfg.items() if k in ("design", "response", "covariates", "skew_covariates", "fit_intercept", "temperature_centered", "trend")}
    if "data" in cfg:
        source["data"] = str(_resolve(cfg, "data"))
    extra = {"data_source": source}
    formats = cfg.get("format", ["json", "text"])
    for fmt in formats:
        name = {"json": "fit.json", "text": "fit.txt", "csv": "fit.csv"}[fmt]
        lio.emit_report(result, fmt, out / name, extra=extra if fmt == "json" else None)
    if profile is not None:
        lines = ["kernel_param,loglik"] + [f"{float(th)!r},{float(ll)!r}" for th, ll in profile.table]
        (out / "profile.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    sys.stdout.write(lio.render_fit_text(result))
    return 0


def _model_from_config(cfg, need_tau=True):
    kernel = make_kernel(cfg.get("family", "lognormal"), cfg.get("kernel_param"))
    beta = np.asarray(cfg.get("beta", [0.0]), dtype=float)
    kappa = np.asarray(cfg.get("kappa", []), dtype=float)
    zeta = np.asarray(cfg.get("zeta", []), dtype=float)
    p = cfg.get("p", len(kappa))
    q = cfg.get("q", len(zeta))
    if p != len(kappa) or q != len(zeta):
        raise ConfigError("p and q must match the lengths of kappa and zeta")
    tau = np.asarray(cfg.get("tau", [0.0]), dtype=float)
    spec = ModelSpec(p, q, len(beta), len(tau), kernel)
    return spec, ParamVector(beta, tau, kappa, zeta)


def _covariates_file(cfg):
    if "covariates_file" not in cfg:
        return None
    path = _resolve(cfg, "covariates_file")
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    cols = lio.read_columns(path, [h.strip() for h in header])
    return np.column_stack(list(cols.values()))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, SIM_KEYS)
    out = _outdir(args, cfg)
    spec, theta = _model_from_config(cfg)
    data = generate_dataset(
        spec,
        theta,
        cfg.get("n", 500),
        covariate_rule=cfg.get("covariate_rule", "iid_standard_normal"),
        burnin=cfg.get("burnin", 200),
        seed=_seed(args, cfg),
        covariates=_covariates_file(cfg),
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    xn = [f"x{i}" for i in range(1, spec.n_beta)]
    wn = [f"w{i}" for i in range(1, spec.n_tau)]
    w.writerow(["t", "y", *xn, *wn])
    for t in range(data.n):
        w.writerow([t + 1, repr(float(data.y[t])), *map(repr, data.X[t, 1:].tolist()), *map(repr, data.W[t, 1:].tolist())])
    (out / "simulated.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(f"wrote {data.n} observations to {out / 'simulated.csv'}\n")
    return 0


def cmd_mc(args) -> int:
    cfg = load_config(args.config, MC_KEYS)
    out = _outdir(args, cfg)
    spec, theta = _model_from_config(cfg)
    mc = McConfig(
        kernel=spec.kernel,
        true_theta=theta,
        p=spec.p,
        q=spec.q,
        n_grid=tuple(int(n) for n in cfg.get("n_grid", [100, 300, 500])),
        phi_grid=tuple(float(x) for x in cfg.get("phi_grid", [0.5, 1.0, 2.0])),
        replicates=cfg.get("replicates", 500),
        burnin=cfg.get("burnin", 200),
        covariate_rule=cfg.get("covariate_rule", "iid_standard_normal"),
        seed=_seed(args, cfg),
        n_jobs=cfg.get("n_jobs", 1),
        covariates=_covariates_file(cfg),
    )
    table = run_monte_carlo(mc)
    lio.emit_report(table, "csv", out / "mc.csv")
    lio.emit_report(table, "json", out / "mc.json")
    sys.stdout.write(table.to_csv())
    return 0


def cmd_diagnose(args) -> int:
    result, doc = lio.fit_from_json(args.fit)
    source = dict(doc.get("data_source", {}))
    source["_base"] = str(Path(args.fit).resolve().parent)
    data = _data_from_config(source, data_override=args.data)
    spec = result.spec
    if data.X.shape[1] != spec.n_beta or data.W.shape[1] != spec.n_tau:
        raise ConfigError("data columns do not match the fitted model")
    out = _outdir(args)
    rep = residual_report(
        result,
        spec,
        data,
        lags=args.lags,
        envelope_B=args.envelope_b,
        level=args.level,
        seed=args.seed,
        refit=args.refit,
    )
    lio.emit_report(rep, "json", out / "diagnostics.json")
    lio.emit_report(rep, "csv", out / "residuals.csv")
    lines = ["lag,acf,pacf"] + [f"{k + 1},{float(a)!r},{float(p)!r}" for k, (a, p) in enumerate(zip(rep.acf, rep.pacf))]
    (out / "acf.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if rep.envelope is not None:
        env = rep.envelope
        srt = np.sort(rep.rq)
        lines = ["order,observed,lower,median,upper"] + [
            ",".join([str(i + 1)] + [repr(float(v[i])) for v in (srt, env.lower, env.median, env.upper)]) for i in range(len(srt))
        ]
        (out / "envelope.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    lb, lbp = rep.ljung_box
    sys.stdout.write(f"KS {rep.ks_stat:.4f} (p={rep.ks_pvalue:.4f})  Ljung-Box({rep.lags}) {lb:.3f} (p={lbp:.4f})\n")
    return 0


def cmd_theory(args) -> int:
    poly = ArmaPolynomials(args.kappa or (), args.zeta or ())
    kernel = make_kernel(args.family, args.kernel_param)
    st = check_stationarity(poly)
    psi = psi_weights(poly, args.lags)
    doc = {
        "kappa": list(poly.kappa),
        "zeta": list(poly.zeta),
        "stationary": st.stationary,
        "invertible": st.invertible,
        "ar_root_moduli": st.ar_root_moduli.tolist(),
        "ma_root_moduli": st.ma_root_moduli.tolist(),
        "psi": psi.tolist(),
    }
    if st.stationary:
        mm = marginal_moments(poly, args.phi, kernel)
        lags = np.arange(0, args.lags + 1)
        doc["variance"] = float(mm.var)
        doc["autocov"] = [float(mm.autocov(int(k))) for k in lags]
        doc["autocorr"] = [float(mm.autocorr(int(k))) for k in lags]
    if args.format == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        rows = ["lag,psi,autocov,autocorr"]
        for k in range(args.lags + 1):
            ac = doc.get("autocov", [float("nan")] * (args.lags + 1))[k]
            ar = doc.get("autocorr", [float("nan")] * (args.lags + 1))[k]
            rows.append(f"{k},{float(psi[k])!r},{float(ac)!r},{float(ar)!r}")
        text = "\n".join(rows) + "\n"
    if args.output:
        out = _outdir(args)
        (out / f"theory.{args.format}").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lsarmax", description="Log-symmetric ARMAX regression tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, func, helptext in (
        ("fit", cmd_fit, "fit a model described by a config file"),
        ("simulate", cmd_simulate, "simulate a series"),
        ("mc", cmd_mc, "run a Monte Carlo study"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output")
        if name == "fit":
            sp.add_argument("--uncentered", action="store_true", help="mortality design: raw temperature")
            sp.add_argument("--trend", choices=("calendar", "index"), help="mortality design trend scale")
        sp.set_defaults(func=func)

    sp = sub.add_parser("diagnose", help="quantile residual diagnostics for a saved fit")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--data")
    sp.add_argument("--lags", type=int, default=20)
    sp.add_argument("--envelope-b", type=int, default=100)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--refit", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("theory", help="psi weights, roots and marginal ACF")
    sp.add_argument("--kappa", type=float, nargs="*", default=[])
    sp.add_argument("--zeta", type=float, nargs="*", default=[])
    sp.add_argument("--phi", type=float, default=1.0)
    sp.add_argument("--lags", type=int, default=10)
    sp.add_argument("--family", default="lognormal")
    sp.add_argument("--kernel-param", type=float)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - reported as one machine-readable line
        msg = " ".join(str(exc).split())
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
