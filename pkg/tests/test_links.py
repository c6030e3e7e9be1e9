import numpy as np
import pytest
from scipy import integrate

from labelsim import (
    CovariateKind,
    LinkFamily,
    ModelSpec,
    MultiLabelDataset,
    TheoryPrediction,
    beta_regular,
    isotropic_gaussian,
    link_antiderivative,
    link_derivative,
    link_eval,
    logistic_link,
    scaled_logistic_link,
    tabulated_link,
)


def test_logistic_basics():
    lr = logistic_link()
    assert link_eval(lr, 0.0) == 0.5
    assert link_eval(lr, 2.0) == pytest.approx(1.0 / (1.0 + np.exp(-2.0)), abs=1e-15)
    # symmetry
    t = np.linspace(-30, 30, 101)
    assert np.max(np.abs(link_eval(lr, t) + link_eval(lr, -t) - 1.0)) < 1e-12
    # no overflow far in the tails
    assert link_eval(lr, -1000.0) == 0.0
    assert link_eval(lr, 1000.0) == 1.0


def test_scaled_logistic():
    link = scaled_logistic_link(3.0)
    lr = logistic_link()
    t = np.linspace(-4, 4, 41)
    assert np.allclose(link_eval(link, t), link_eval(lr, 3.0 * t), atol=1e-15)
    with pytest.raises(ValueError):
        scaled_logistic_link(-1.0)


def test_link_derivative_finite_difference():
    rng = np.random.default_rng(0)
    h = 1e-6
    for link in (logistic_link(), scaled_logistic_link(0.7)):
        for t in rng.uniform(-3, 3, size=20):
            fd = (link_eval(link, t + h) - link_eval(link, t - h)) / (2 * h)
            assert link_derivative(link, t) == pytest.approx(fd, abs=1e-8)


def test_antiderivative_matches_numeric_integral():
    rng = np.random.default_rng(1)
    grid = np.linspace(-2.0, 2.0, 9)
    vals = np.linspace(0.1, 0.9, 9)
    links = [logistic_link(), scaled_logistic_link(2.0),
             tabulated_link(grid, vals)]
    for link in links:
        for t in rng.uniform(-3, 3, size=10):
            num, _ = integrate.quad(lambda v: link_eval(link, v), 0.0, t,
                                    epsabs=1e-12, epsrel=1e-12, limit=200)
            assert link_antiderivative(link, t) == pytest.approx(num, abs=1e-9)
        assert link_antiderivative(link, 0.0) == 0.0


def test_tabulated_link_validation():
    grid = np.linspace(-1, 1, 5)
    with pytest.raises(ValueError):
        tabulated_link(grid, [0.1, 0.3, 0.2, 0.6, 0.9])  # not monotone
    with pytest.raises(ValueError):
        tabulated_link(grid, [0.1, 0.3, 0.5, 0.6, 1.2])  # outside [0,1]
    with pytest.raises(ValueError):
        tabulated_link([0.0, 0.0, 1.0], [0.1, 0.2, 0.3])  # grid not increasing
    with pytest.raises(ValueError):
        tabulated_link(grid, [0.0, 0.1, 0.5, 0.9, 1.0], lipschitz=0.2)


def test_tabulated_symmetry_detection():
    grid = np.linspace(-2, 2, 5)
    sym = tabulated_link(grid, [0.1, 0.3, 0.5, 0.7, 0.9])
    asym = tabulated_link(grid, [0.2, 0.3, 0.5, 0.7, 0.9])
    assert sym.symmetric
    assert not asym.symmetric


def test_tabulated_eval_clamps_and_interpolates():
    link = tabulated_link([-1.0, 0.0, 1.0], [0.2, 0.5, 0.8])
    assert link_eval(link, -5.0) == 0.2
    assert link_eval(link, 5.0) == 0.8
    assert link_eval(link, 0.5) == pytest.approx(0.65)
    assert link_derivative(link, 0.5) == pytest.approx(0.3)
    assert link_derivative(link, 5.0) == 0.0


def test_covariate_distributions():
    g = isotropic_gaussian(4)
    assert g.noise_exponent == 1.0
    assert g.c_z == pytest.approx(np.sqrt(2 / np.pi))
    assert np.allclose(g.covariance(), np.eye(4))

    u = np.array([3.0, 4.0, 0.0])
    b = beta_regular(3, 2.0, u)
    assert np.linalg.norm(b.direction) == pytest.approx(1.0)
    assert b.noise_exponent == 2.0
    # density of |Z| integrates to 1 and matches the c_z limit at 0
    total, _ = integrate.quad(b.z_abs_density, 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-9)
    z = 1e-8
    assert z ** (1 - 2.0) * b.z_abs_density(z) == pytest.approx(b.c_z, rel=1e-6)
    cov = b.covariance()
    d = b.direction
    assert d @ cov @ d == pytest.approx(2.0 * 3.0)  # E[Z^2] for beta=2
    with pytest.raises(ValueError):
        beta_regular(3, -1.0, u)
    with pytest.raises(ValueError):
        beta_regular(3, 1.0, np.zeros(3))


def test_model_spec():
    lr = logistic_link()
    model = ModelSpec(theta_star=np.array([3.0, 4.0]), links=(lr, lr),
                      covariates=isotropic_gaussian(2))
    assert model.m == 2
    assert model.d == 2
    assert model.t_star == pytest.approx(5.0)
    assert np.allclose(model.u_star, [0.6, 0.8])
    with pytest.raises(ValueError):
        ModelSpec(theta_star=np.zeros(2), links=(lr,),
                  covariates=isotropic_gaussian(2))
    with pytest.raises(ValueError):
        ModelSpec(theta_star=np.ones(3), links=(lr,),
                  covariates=isotropic_gaussian(2))


def test_dataset_validation():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        MultiLabelDataset(X=X, Y=np.array([[1, 2], [1, 1], [-1, 1]]))
    with pytest.raises(ValueError):
        MultiLabelDataset(X=X, Y=np.ones((4, 2)))
    ds = MultiLabelDataset(X=X, Y=np.array([[1, -1], [1, 1], [-1, 1]]))
    assert (ds.n, ds.d, ds.m) == (3, 2, 2)


def test_theory_prediction_requires_symmetric_covariance():
    with pytest.raises(ValueError):
        TheoryPrediction(kind="x", t_m=1.0, variance_multiplier=1.0,
                         covariance=np.array([[0.0, 1.0], [0.0, 0.0]]))
