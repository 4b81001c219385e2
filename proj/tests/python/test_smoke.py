import math
from pathlib import Path

import numpy as np
import pytest

import sbtrans

DATA = Path(__file__).resolve().parents[1] / "data"


def skewed_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = np.exp(0.5 * X[:, 0] - 0.5 * X[:, 1] + 0.3 * rng.normal(size=n))
    return X, y


def test_read_csv():
    X, y, names = sbtrans.read_csv(str(DATA / "small.csv"), "y")
    assert X.shape == (60, 2)
    assert y.shape == (60,)
    assert names == ["x1", "x2"]


def test_read_csv_reports_bad_cell():
    with pytest.raises(sbtrans.InputError, match='row 2, column "x1"'):
        sbtrans.read_csv(str(DATA / "missing_cell.csv"), "y")


def test_sblm_shapes_and_determinism():
    X, y = skewed_data()
    a = sbtrans.sblm(X, y, draws=200, seed=5)
    b = sbtrans.sblm(X, y, draws=200, seed=5)
    assert a["theta"].shape == (200, 3)
    assert a["sigma"].shape == (200,)
    assert a["predictive"].shape == (200, 60)
    assert np.array_equal(a["predictive"], b["predictive"])
    assert np.all(np.diff(a["transform_values"], axis=1) >= 0)
    assert a["predictive"].min() >= y.min() and a["predictive"].max() <= y.max()


def test_sblm_recovers_signs():
    X, y = skewed_data(n=150, seed=1)
    theta = sbtrans.sblm(X, y, draws=500, seed=2)["theta"].mean(axis=0)
    assert theta[1] > 0 > theta[2]


def test_sbqr_quantiles_increase_with_tau():
    X, y = skewed_data(seed=3)
    q = sbtrans.sbqr(X, y, query=X[:5], tau=0.1, draws=200, burn_in=200, seed=1)["quantile_estimates"]
    r = sbtrans.sbqr(X, y, query=X[:5], tau=0.9, draws=200, burn_in=200, seed=1)["quantile_estimates"]
    assert q.shape == (5,)
    assert np.all(q < r)


def test_sbgp_predictive():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(60, 1))
    y = np.exp(np.sin(6 * X[:, 0]) + 0.2 * rng.normal(size=60))
    out = sbtrans.sbgp(X, y, draws=200, seed=3)
    assert out["predictive"].shape == (200, 60)
    assert out["kernel"]["smoothness"] in (0.5, 1.5, 2.5)


def test_simulate_rows():
    rows = sbtrans.simulate(design="step", method="sblm", n=50, p=10, replicates=2, draws=100)
    assert len(rows) == 2
    assert 0.0 <= rows[0]["coverage"] <= 1.0


def test_config_errors():
    X, y = skewed_data()
    with pytest.raises(sbtrans.ConfigError):
        sbtrans.sbqr(X, y, tau=1.5)
    with pytest.raises(sbtrans.ConfigError):
        sbtrans.simulate(method="unknown")


def test_crps_and_hpd():
    draws = np.random.default_rng(5).normal(size=4000)
    exact = 2 / math.sqrt(2 * math.pi) - 1 / math.sqrt(math.pi)
    assert sbtrans.crps(draws, 0.0) == pytest.approx(exact, rel=0.05)
    lo, hi = sbtrans.hpd_interval(draws, 0.95)
    assert lo == pytest.approx(-1.96, abs=0.15)
    assert hi == pytest.approx(1.96, abs=0.15)
