import math

import numpy as np
import pytest

import kpplab


def test_fisher_speed_curve():
    curve = kpplab.speed_curve(kpplab.Operator.random(), kpplab.media(), 0.2, 4.0, 25)
    assert curve["c_star"] == pytest.approx(2.0, abs=1e-6)
    mu = curve["mu"]
    # flat medium: lambda(mu) = mu^2 + 1
    assert np.allclose(curve["lambda"], mu**2 + 1.0, rtol=1e-10)


def test_matrix_and_evolution_agree():
    med = kpplab.media(kind="H1", coefficient="space_cos", a0=1.0, amp=0.5, p=5.0)
    op = kpplab.Operator.random()
    a = kpplab.principal_lambda(op, med, 0.5, "evolution")
    b = kpplab.principal_lambda(op, med, 0.5, "matrix")
    assert abs(a - b) < 1e-6


def test_ivp_logistic_homogeneous():
    g = kpplab.Grid.ring(4.0, 20)
    t, u = kpplab.solve_ivp(kpplab.Operator.random(), kpplab.media(), g, np.full(g.n, 0.1), 0.0, 2.0, dt=1e-3)
    assert u.shape == (len(t), g.n)
    exact = 0.1 * math.exp(2.0) / (1.0 + 0.1 * (math.exp(2.0) - 1.0))
    assert u[-1].mean() == pytest.approx(exact, rel=2e-3)


def test_part_metric():
    u = np.array([1.0, 2.0, 3.0])
    assert kpplab.part_metric(u, 2 * u) == pytest.approx(math.log(2.0))
    assert kpplab.part_metric(u, u) == 0.0


def test_entire_logistic_is_one():
    d = kpplab.build_entire(kpplab.Operator.random(), kpplab.media(), tol=1e-12)
    assert d["converged"]
    assert np.max(np.abs(d["values"] - 1.0)) < 1e-6


def test_wave_and_stability():
    op, med = kpplab.Operator.random(), kpplab.media()
    w = kpplab.build_wave(op, med, {"family": "naro2", "mu": 0.5, "mu_prime": 0.75, "horizon": 10.0})
    assert w.sandwich_ok and w.residual_pass
    diag = kpplab.wave_diagnostics(w)
    assert diag["mean_speed"] == pytest.approx(2.5, rel=0.03)
    x, u = w.profile(0)
    assert x.shape == u.shape
    rep = kpplab.stability(op, med, w, {"kind": "scale", "amplitude": 0.3}, horizon=20.0)
    assert rep["rho_monotone"]


def test_suites():
    op, med = kpplab.Operator.nonlocal_uniform(1.0), kpplab.media()
    assert kpplab.comparison_suite(op, med, pairs=5, horizon=1.0)["pass"]
    assert kpplab.partmetric_suite(op, med, pairs=5)["pass"]


def test_config_errors_and_run(tmp_path):
    with pytest.raises(kpplab.ConfigError) as e:
        kpplab.resolve_config({"kind": "speed", "grid": {"dx": -1}, "params": {"oops": 1}})
    assert "grid.dx" in str(e.value) and "oops" in str(e.value)
    assert isinstance(e.value, kpplab.KpplabError)
    man = kpplab.run({"kind": "speed", "params": {"points": 20}, "out": str(tmp_path / "s")})
    assert man["pass"]
    assert man["summary"]["c_star"] == pytest.approx(2.0, abs=1e-6)
    table = kpplab.report([tmp_path / "s", tmp_path / "nothing"])
    assert len(table["rows"]) == 1 and table["missing"]
