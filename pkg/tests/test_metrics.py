import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from w2restrict import metrics
from w2restrict.distributions import GaussianSpec, SampleSet, empirical_moments, sample_gaussian
from w2restrict.errors import SolverQualityWarning, ValidationError
from w2restrict.metrics import (
    gaussian_w2_closed_form,
    moment_match_report,
    save_moment_csv,
    save_report_json,
    transport_map,
    w2f_squared,
    w2f_symmetric,
)
from w2restrict.oracle import exact_w2_assignment
from w2restrict.potentials import PLQ, BallLinear, ConeCombo, Quadratic
from w2restrict.solver import fit_ball_linear_closed_form, fit_quadratic_closed_form

seeds = st.integers(0, 2**31 - 1)


def gaussians(seed, n=400, d=2):
    rng = np.random.default_rng(seed)
    g1 = GaussianSpec(rng.standard_normal(d), random_spd(rng, d))
    g2 = GaussianSpec(rng.standard_normal(d) + 1, random_spd(rng, d))
    return sample_gaussian(g1, n, seed=seed), sample_gaussian(g2, n, seed=seed + 1)


def test_two_point_example_is_exact():
    s_mu, s_nu = SampleSet([[-1.0], [1.0]]), SampleSet([[0.0], [4.0]])
    theta = fit_quadratic_closed_form(s_mu, s_nu).potential()
    rep = w2f_squared(theta, s_mu, s_nu)
    assert rep.w2f_squared == pytest.approx(2.5, abs=1e-10)
    assert rep.self_term_mu == pytest.approx(0.5) and rep.self_term_nu == pytest.approx(4.0)
    assert exact_w2_assignment(s_mu, s_nu).squared == pytest.approx(2.5)


@given(seeds)
def test_any_feasible_potential_gives_a_lower_bound(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((12, 2)), rng.normal(1, 2, (12, 2))
    exact = exact_w2_assignment(x, y).squared
    theta = Quadratic(random_spd(rng, 2, 0.1, 5.0), rng.normal(0, 2, 2))
    assert w2f_squared(theta, x, y).w2f_squared <= exact + 1e-9
    w = rng.standard_normal(2)
    assert w2f_squared(BallLinear(w / max(1.0, np.linalg.norm(w)), 1.0), x, y).w2f_squared <= exact + 1e-9


def test_quadratic_class_is_exact_on_empirical_gaussian_moments():
    s_mu, s_nu = gaussians(3, n=1000)
    theta = fit_quadratic_closed_form(s_mu, s_nu).potential()
    expected = gaussian_w2_closed_form(s_mu, s_nu) ** 2
    assert w2f_squared(theta, s_mu, s_nu).w2f_squared == pytest.approx(expected, rel=1e-8)


def test_symmetric_closed_form_paths():
    s_mu, s_nu = gaussians(4)
    expected = gaussian_w2_closed_form(s_mu, s_nu) + gaussian_w2_closed_form(s_nu, s_mu)
    assert w2f_symmetric("quadratic", s_mu, s_nu) == pytest.approx(expected, rel=1e-8)
    w = fit_ball_linear_closed_form(s_mu, s_nu, 1.0)
    one = w2f_squared(BallLinear(w, 1.0), s_mu, s_nu).w2f
    assert w2f_symmetric("ball_linear", s_mu, s_nu) == pytest.approx(2 * one, rel=1e-10)
    assert w2f_symmetric("quadratic", s_mu, s_mu) == pytest.approx(0.0, abs=1e-6)


def test_negative_values_warn_and_clamp(monkeypatch):
    s_mu, s_nu = gaussians(5, n=20)
    monkeypatch.setattr(metrics, "estimate_objective", lambda *a, **k: 1e6)
    with pytest.warns(SolverQualityWarning):
        rep = w2f_squared(Quadratic(np.eye(2), np.zeros(2)), s_mu, s_nu)
    assert rep.clamped and rep.w2f == 0.0 and rep.w2f_squared < 0


def test_tiny_negative_values_are_not_flagged(monkeypatch):
    x = SampleSet([[0.0]])
    monkeypatch.setattr(metrics, "estimate_objective", lambda *a, **k: 1e-7)
    rep = w2f_squared(Quadratic([[1.0]], [0.0]), x, x)
    assert not rep.clamped and rep.w2f == 0.0


def test_transport_map_inverts_affine_gradient():
    rng = np.random.default_rng(0)
    a, b = random_spd(rng, 3), rng.standard_normal(3)
    y = rng.standard_normal((50, 3))
    res = transport_map(Quadratic(a, b), y)
    assert res.nonconverged == 0
    assert np.allclose(res.samples.points, np.linalg.solve(a, (y - b).T).T, atol=1e-8)


def test_moment_match_vanishes_at_quadratic_optimum():
    s_mu, s_nu = gaussians(6, n=500)
    theta = fit_quadratic_closed_form(s_mu, s_nu).potential()
    rows = moment_match_report(theta, s_mu, s_nu)
    assert [r.statistic for r in rows] == ["mean[0]", "mean[1]", "second[0,0]", "second[0,1]", "second[1,1]"]
    assert max(r.residual for r in rows) <= 1e-8


def test_moment_rows_per_class():
    s_mu, s_nu = gaussians(7, n=200)
    w = fit_ball_linear_closed_form(s_mu, s_nu, 0.5)
    rows = moment_match_report(BallLinear(w, 0.5), s_mu, s_nu)
    assert [r.statistic for r in rows] == ["mean[0]", "mean[1]"]
    basis = (Quadratic(np.eye(2), np.zeros(2)), PLQ(np.stack([np.eye(2), np.eye(2)]), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2)))
    cone = ConeCombo([1.0, 0.5], basis)
    rows = moment_match_report(cone, s_mu, s_nu)
    assert [r.statistic for r in rows][-2:] == ["basis[0]", "basis[1]"]
    for r in rows:
        assert r.residual == pytest.approx(abs(r.mu_value - r.push_value))


def test_gaussian_closed_form_by_hand():
    assert gaussian_w2_closed_form(([0.0], [[1.0]]), ([3.0], [[1.0]])) == pytest.approx(np.sqrt(4.5))
    s1, s2 = np.diag([1.0, 4.0]), np.diag([9.0, 1.0])
    expected = np.sqrt(0.5 * ((1 - 3) ** 2 + (2 - 1) ** 2))
    assert gaussian_w2_closed_form(GaussianSpec(np.zeros(2), s1), GaussianSpec(np.zeros(2), s2)) == pytest.approx(expected)
    with pytest.raises(ValidationError):
        gaussian_w2_closed_form(([0.0], [[1.0]]), (np.zeros(2), np.eye(2)))


@given(seeds)
def test_gaussian_closed_form_is_a_metric_on_triples(seed):
    rng = np.random.default_rng(seed)
    g = [(rng.standard_normal(2), random_spd(rng, 2)) for _ in range(3)]
    d = gaussian_w2_closed_form
    assert d(g[0], g[0]) == pytest.approx(0.0, abs=1e-6)
    assert d(g[0], g[1]) == pytest.approx(d(g[1], g[0]), rel=1e-7, abs=1e-9)
    assert d(g[0], g[2]) <= d(g[0], g[1]) + d(g[1], g[2]) + 1e-7


def test_writers(tmp_path):
    s_mu, s_nu = gaussians(8, n=100)
    theta = fit_quadratic_closed_form(s_mu, s_nu).potential()
    rep = w2f_squared(theta, s_mu, s_nu)
    save_report_json(rep, tmp_path / "r.json", header={"seed": 3})
    import json

    body = json.loads((tmp_path / "r.json").read_text())
    assert list(body)[0] == "_header" and body["w2f_squared"] == pytest.approx(rep.w2f_squared)
    rows = moment_match_report(theta, s_mu, s_nu)
    save_moment_csv(rows, tmp_path / "m.csv", comments=["seed: 3"])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[:2] == ["# seed: 3", "statistic,mu_value,push_value,residual"]
    assert len(lines) == 2 + len(rows)
    assert float(lines[2].split(",")[1]) == rows[0].mu_value
