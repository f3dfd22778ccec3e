import math
import os
from pathlib import Path

import numpy as np
import pytest

import eivlr

SOURCE_DIR = Path(os.environ.get("EIVLR_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def simple_dataset(n=40, seed=3, beta=1.0):
    rng = np.random.default_rng(seed)
    x_true = rng.normal(-2.0, 2.0, n)
    var_e = rng.uniform(0, 1, n) ** 2
    var_u = rng.uniform(0, 1, n) ** 2
    y = 0.2 + beta * x_true + rng.normal(0, math.sqrt(10.0), n) + rng.normal(0, np.sqrt(var_e))
    x = x_true + rng.normal(0, np.sqrt(var_u))
    z = np.column_stack([y, x])
    return eivlr.Dataset(
        z,
        1,
        [np.array([[v]]) for v in var_e],
        [np.zeros((1, 1)) for _ in range(n)],
        [np.array([[v]]) for v in var_u],
    )


def test_family_constants():
    assert eivlr.Family("normal", dim=2).W(1.3) == pytest.approx(-0.5)
    t = eivlr.Family("student_t", 5.0, 3)
    assert t.c == pytest.approx(5.0 / 3.0)
    assert t.W(1.0) == pytest.approx(-(5 + 3) / (2 * (5 + 1.0)))
    with pytest.raises(ValueError):
        eivlr.Family("student_t", 2.0, 2)


def test_fit_reaches_stationary_point():
    data = simple_dataset()
    family = eivlr.Family("normal", dim=2)
    fit = eivlr.fit(data, family)
    assert fit.converged
    g = eivlr.score(fit.theta, data, family)
    assert np.max(np.abs(g)) < 1e-6
    assert fit.loglik == pytest.approx(eivlr.loglik(fit.theta, data, family))


def test_lr_test_report():
    data = simple_dataset()
    report = eivlr.lr_test(data, eivlr.Family("student_t", 5.0, 2), [0], [1.0])
    assert report.q == 1
    assert report.lr >= 0.0
    assert report.lr_star >= 0.0
    assert report.lr_dstar == pytest.approx(report.lr - 2 * report.log_rho)
    d = report.to_dict()
    assert set(d["flags"]) == {"lr_near_zero", "rho_nonpositive_determinant", "fit_warning"}
    assert "LR**" in report.table()


def test_dataset_round_trip(tmp_path):
    data = simple_dataset(n=8)
    path = tmp_path / "d.csv"
    eivlr.write_dataset(path, data)
    back = eivlr.load_dataset(path, 1, 1)
    np.testing.assert_array_equal(back.z, data.z)
    for a, b in zip(back.sigma_u, data.sigma_u):
        np.testing.assert_array_equal(a, b)


def test_bad_dataset_raises(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,x,var_e,cov_ue,var_u\n1,2,-0.1,0,0.2\n")
    with pytest.raises(eivlr.InputError, match="bad.csv:2"):
        eivlr.load_dataset(path, 1, 1)


def test_small_null_study_is_deterministic():
    cfg = eivlr.SimConfig()
    cfg.family = "normal"
    cfg.p = 2
    cfg.q = 2
    cfg.n = 20
    cfg.reps = 40
    cfg.seed = 11
    a = eivlr.run_null_study(cfg)
    b = eivlr.run_null_study(cfg)
    assert a.to_dict() == b.to_dict()
    sorted_lr = a.sorted("LR**")
    curve = eivlr.discrepancy_curve(sorted_lr, 2)
    assert len(curve) == len(sorted_lr)


def test_shipped_config_loads():
    cfg = eivlr.SimConfig.load(SOURCE_DIR / "configs" / "size_normal_p2.cfg")
    assert (cfg.family, cfg.p, cfg.q, cfg.n, cfg.reps) == ("normal", 2, 2, 20, 2000)
