import math

import numpy as np
import pytest

from lsarmax import McConfig, ModelSpec, ParamVector, generate_dataset, run_monte_carlo
from lsarmax.kernels import LogNormal, LogStudentT
from lsarmax.theory import ArmaPolynomials, marginal_moments


def _small_config(**kw):
    base = dict(
        kernel=LogNormal(),
        true_theta=ParamVector([1.0, 0.7], [0.0], [0.6], [0.3]),
        n_grid=(60, 120),
        phi_grid=(0.5, 1.0, 2.0),
        replicates=12,
        seed=3,
    )
    base.update(kw)
    return McConfig(**base)


def test_iid_lognormal_median():
    spec = ModelSpec(0, 0, 1, 1, LogNormal())
    data = generate_dataset(spec, ParamVector([0.0], [0.0], [], []), 10**5, seed=1)
    assert 0.98 < np.median(data.y) < 1.02


@pytest.mark.parametrize("burnin", [0, 500])
def test_burnin_and_autocorrelation(burnin):
    spec = ModelSpec(1, 0, 1, 1, LogNormal())
    data = generate_dataset(spec, ParamVector([0.5], [0.0], [0.6], []), 10**5, burnin=burnin, seed=2)
    x = data.v - 0.5
    rho1 = np.dot(x[:-1], x[1:]) / np.dot(x, x)
    assert rho1 == pytest.approx(marginal_moments(ArmaPolynomials([0.6], [])).autocorr(1), abs=0.01)


def test_generate_is_reproducible():
    spec = ModelSpec(1, 1, 2, 1, LogStudentT(4))
    th = ParamVector([1.0, 0.7], [0.0], [0.6], [0.3])
    a = generate_dataset(spec, th, 300, seed=9)
    b = generate_dataset(spec, th, 300, seed=9)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.X, b.X)
    c = generate_dataset(spec, th, 300, seed=10)
    assert not np.array_equal(a.y, c.y)


def test_covariate_rules():
    spec = ModelSpec(0, 0, 2, 1, LogNormal())
    th = ParamVector([0.0, 1.0], [0.0], [], [])
    u = generate_dataset(spec, th, 200, covariate_rule="iid_uniform01", seed=1)
    assert u.X[:, 1].min() >= 0 and u.X[:, 1].max() <= 1
    given = np.arange(300.0)
    f = generate_dataset(spec, th, 100, covariate_rule="from_file", burnin=50, seed=1, covariates=given)
    np.testing.assert_array_equal(f.X[:, 1], given[-100:])
    with pytest.raises(ValueError):
        generate_dataset(spec, th, 100, covariate_rule="gamma")


def test_generate_errors_and_warnings():
    spec = ModelSpec(1, 0, 1, 1, LogNormal())
    with pytest.raises(ValueError):
        generate_dataset(spec, ParamVector([0.0], [0.0], [0.5], []), 2)
    with pytest.warns(RuntimeWarning):
        generate_dataset(spec, ParamVector([0.0], [0.0], [1.0], []), 50, burnin=0, seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        _small_config(replicates=1)
    with pytest.raises(ValueError):
        _small_config(phi_grid=(1.0, -1.0))
    with pytest.raises(ValueError):
        _small_config(burnin=-1)


def test_degenerate_two_replicates():
    tab = run_monte_carlo(_small_config(replicates=2, n_grid=(50,), phi_grid=(1.0,)))
    for c in tab.cells:
        assert c.used + c.failed == 2
        assert c.mse >= c.bias**2 - 1e-15


def test_mse_dominates_squared_bias():
    tab = run_monte_carlo(_small_config())
    for c in tab.cells:
        assert c.mse >= c.bias**2 - 1e-15


def test_common_random_numbers_make_arma_cells_phi_invariant():
    tab = run_monte_carlo(_small_config())
    for n in (60, 120):
        for par in ("kappa1", "zeta1"):
            vals = [(round(tab.get(n, ph, par).bias, 4), round(tab.get(n, ph, par).mse, 4)) for ph in (0.5, 1.0, 2.0)]
            assert vals[0] == vals[1] == vals[2]


def test_monte_carlo_reproducible_and_worker_independent():
    a = run_monte_carlo(_small_config(n_jobs=1))
    b = run_monte_carlo(_small_config(n_jobs=1))
    c = run_monte_carlo(_small_config(n_jobs=2))
    assert a.to_csv() == b.to_csv() == c.to_csv()
    for key in a.estimates:
        np.testing.assert_array_equal(a.estimates[key], c.estimates[key])


def test_table_layout():
    tab = run_monte_carlo(_small_config(replicates=3, n_grid=(50,)))
    lines = tab.to_csv().strip().splitlines()
    assert lines[0] == "n,parameter,bias_phi=0.5,mse_phi=0.5,bias_phi=1,mse_phi=1,bias_phi=2,mse_phi=2"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["phi", "beta0", "beta1", "kappa1", "zeta1"]
    d = tab.to_dict()
    assert len(d["cells"]) == 15


@pytest.mark.slow
def test_shrinkage_with_sample_size():
    cfg = McConfig(
        kernel=LogStudentT(4),
        true_theta=ParamVector([1.0, 0.7], [0.0], [0.6], [0.3]),
        n_grid=(100, 500),
        phi_grid=(1.0,),
        replicates=500,
        seed=11,
    )
    tab = run_monte_carlo(cfg)
    for par in cfg.param_names():
        assert tab.get(500, 1.0, par).mse < tab.get(100, 1.0, par).mse
    # Log-t, n = 300 reference: bias(kappa1) about -0.013
    cfg300 = McConfig(
        kernel=LogStudentT(4),
        true_theta=cfg.true_theta,
        n_grid=(300,),
        phi_grid=(1.0,),
        replicates=500,
        seed=12,
    )
    cell = run_monte_carlo(cfg300).get(300, 1.0, "kappa1")
    assert abs(cell.bias - (-0.0129)) < 2 * cell.bias_se
    assert cell.mse == pytest.approx(0.0033, rel=0.3)
    assert math.isfinite(cell.mse)
