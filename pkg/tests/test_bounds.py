"""Closed-form bound values, their asymptotics, and the verifier suites."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from distyly import (
    BoundKit,
    ValidationError,
    closed_form_bracket,
    conjectured_decay_rate,
    decay_rate_bounds,
    eval_bound,
    homogeneous_exact_q,
    log_binomial,
    verify_harmonic_identities,
    verify_subharmonic_inequalities,
    write_check_report,
)
from distyly.bounds import NAMES

mus = st.floats(min_value=0.05, max_value=0.95)
coords = st.integers(min_value=0, max_value=400)


def test_hand_values_at_1_1():
    kit = BoundKit(0.5)
    assert kit.value("f0", 1, 1) == pytest.approx(0.25, abs=1e-15)
    assert kit.value("f1", 1, 1) == pytest.approx(1.0, abs=1e-15)
    assert kit.value("h", 1, 1) == pytest.approx(0.75, abs=1e-15)
    # binomial(2, 1) = 2 halves the pair sum and h
    assert kit.value("f1_hat", 1, 1) == pytest.approx(0.5, abs=1e-14)
    assert kit.value("h_hat", 1, 1) == pytest.approx(0.375, abs=1e-14)
    # one gain factor 1 + 0.5/3 on top of f1_hat
    assert kit.value("improved_lower", 1, 1) == pytest.approx(7.0 / 12.0, abs=1e-14)


def test_raw_and_value_disagree_only_on_axes():
    kit = BoundKit(0.5)
    assert kit.raw("f0", 3, 0) == pytest.approx(0.125, abs=1e-15)
    assert kit.value("f0", 3, 0) == 1.0
    assert kit.raw("improved_lower", 0, 2) > 0.25  # bare formula, not a bound here
    assert kit.value("improved_lower", 0, 2) == 1.0
    # h already equals 1 on the axes, both readings agree
    assert kit.raw("h", 0, 7) == pytest.approx(1.0, abs=1e-15)
    assert kit.value("h", 0, 7) == 1.0


def test_bracket_at_axis_degenerates_to_one():
    lo, hi = closed_form_bracket(0.5, 3, 0)
    assert lo == 1.0 and hi == 1.0


def test_bracket_array_shape():
    xs = np.arange(0, 6)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    lo, hi = closed_form_bracket(0.3, X, Y)
    assert lo.shape == hi.shape == (6, 6)
    assert np.all(lo <= hi + 1e-15)


def test_log_binomial_against_exact():
    for n in range(0, 61, 5):
        for k in range(0, n + 1, 3):
            assert log_binomial(n, k) == pytest.approx(
                math.log(math.comb(n, k)), rel=1e-12, abs=1e-12)


def test_decay_rate_bound_values():
    lo, hi = decay_rate_bounds(0.5)
    assert lo == pytest.approx(0.25, abs=1e-15)
    assert hi == 0.5
    lo02, _ = decay_rate_bounds(0.2)
    # the one-step-gain branch beats mu^2 for small mu
    assert lo02 == pytest.approx(0.05 * (1.0 + 0.2 / 2.4), abs=1e-15)


def test_conjectured_rate_continuous_at_half():
    left = conjectured_decay_rate(0.5 - 1e-12)
    right = conjectured_decay_rate(0.5)
    assert right == 0.25
    assert left == pytest.approx(right, abs=1e-11)
    assert conjectured_decay_rate(0.3) == pytest.approx(0.15, abs=1e-15)
    assert conjectured_decay_rate(0.8) == pytest.approx(0.64, abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, 1.0, 1.3, -0.1])
def test_regime_gates(bad):
    with pytest.raises(ValidationError):
        BoundKit(bad)
    with pytest.raises(ValidationError):
        decay_rate_bounds(bad)
    with pytest.raises(ValidationError):
        conjectured_decay_rate(bad)


def test_unknown_name_and_signed_log_rejected():
    kit = BoundKit(0.5)
    with pytest.raises(ValidationError):
        kit.raw("f3", 1, 1)
    with pytest.raises(ValidationError):
        kit.log_raw("f2", 2, 2)
    with pytest.raises(ValidationError):
        kit.raw("f0", -1, 2)


@settings(deadline=None)
@given(mu=mus, x=coords, y=coords)
def test_every_member_symmetric_in_coordinates(mu, x, y):
    kit = BoundKit(mu)
    for name in NAMES:
        assert kit.raw(name, x, y) == pytest.approx(
            kit.raw(name, y, x), rel=1e-12, abs=1e-300)


@settings(deadline=None)
@given(mu=mus, x=st.integers(1, 200), y=st.integers(1, 200))
def test_closed_form_ordering(mu, x, y):
    """Orderings that hold for every mu: f0 under the bracket's lower
    end, h_hat under improved_lower, h under f1 and at most 1."""
    kit = BoundKit(mu)
    lo, hi = closed_form_bracket(mu, x, y)
    tol = 1e-14
    assert kit.value("f0", x, y) <= lo + tol
    assert kit.value("h_hat", x, y) <= kit.value("improved_lower", x, y) + tol
    assert hi == pytest.approx(kit.value("h", x, y), abs=0)
    assert hi <= kit.raw("f1", x, y) + tol
    # deep states may underflow the linear scale to exactly 0; log_raw
    # carries the tail, so only nonnegativity is asserted here
    assert 0.0 <= lo and hi <= 1.0 + tol


@settings(deadline=None)
@given(mu=st.floats(min_value=0.05, max_value=0.75),
       x=st.integers(1, 200), y=st.integers(1, 200))
def test_bracket_coherent_for_moderate_mu(mu, x, y):
    lo, hi = closed_form_bracket(mu, x, y)
    assert lo <= hi + 1e-14


def test_bracket_crosses_at_corner_for_large_mu():
    """The improved lower member is not a bound at (1, 1) for large mu:
    it exceeds 1 (and h), so the bracket honestly crosses there.  Every
    other state stays ordered."""
    lo, hi = closed_form_bracket(0.875, 1, 1)
    assert lo > 1.0 > hi
    xs = np.arange(0, 60)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    lo_g, hi_g = closed_form_bracket(0.875, X, Y)
    crossing = np.argwhere(lo_g > hi_g + 1e-15)
    assert [tuple(c) for c in crossing] == [(1, 1)]


@settings(deadline=None)
@given(mu=mus, x=st.integers(1, 300), y=st.integers(1, 300))
def test_log_raw_matches_linear_scale(mu, x, y):
    kit = BoundKit(mu)
    for name in ("f0", "f1", "h", "f0_hat", "f1_hat", "h_hat",
                 "improved_lower", "f_hat"):
        lv = kit.log_raw(name, x, y)
        rv = kit.raw(name, x, y)
        if rv > 0.0 and np.isfinite(lv):
            assert math.exp(lv) == pytest.approx(rv, rel=1e-10)


def test_diagonal_decay_rates_of_closed_forms():
    """Per-level roots along the diagonal approach mu (h), mu^2 (f0) and
    mu/4 (h_hat): within 2% at x = 300 and closer there than at x = 150
    (the corrections are subexponential and shrink monotonely)."""
    mu = 0.37
    kit = BoundKit(mu)

    def roots(x):
        return (math.exp(kit.log_raw("h", x, x) / x),
                math.exp(kit.log_raw("f0", x, x) / x),
                math.exp(float(kit.log_raw("h_hat", x, x)) / x))

    limits = (mu, mu * mu, mu / 4.0)
    near, far = roots(300), roots(150)
    for got300, got150, limit in zip(near, far, limits):
        assert got300 == pytest.approx(limit, rel=0.02)
        assert abs(got300 - limit) <= abs(got150 - limit) + 1e-15


def test_near_axis_seed_scales_like_factorial():
    """x^y * h_hat(x, y) approaches y! * mu^y for fixed y as x grows."""
    mu = 0.6
    kit = BoundKit(mu)
    x = 10_000
    for y in (1, 2, 3):
        got = x**y * math.exp(float(kit.log_raw("h_hat", x, y)))
        assert got == pytest.approx(math.factorial(y) * mu**y, rel=0.01)


def test_homogeneous_exact_q_is_pair_form():
    assert homogeneous_exact_q(0.5, 1, 2) == pytest.approx(0.625, abs=1e-15)
    assert homogeneous_exact_q(0.5, 0, 9) == 1.0


def test_eval_bound_shorthand():
    assert eval_bound(0.5, "h", 1, 1) == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("mu", [0.1, 0.5, 0.9])
def test_harmonic_identity_suite_green(mu):
    rows = verify_harmonic_identities(mu, extent=24)
    assert rows, "suite produced no rows"
    bad = [r for r in rows if not r.passed]
    assert not bad, f"failed checks: {[r.check for r in bad]}"


@pytest.mark.parametrize("mu", [0.1, 0.5, 0.9])
def test_subharmonic_suite_green(mu):
    rows = verify_subharmonic_inequalities(mu, extent=24)
    assert rows
    assert all(r.passed for r in rows)
    by_name = {r.check: r for r in rows}
    # the diagonal growth branch is an equality, so its residual is tiny
    assert abs(by_name["pair_binom_diag_equality"].stat) <= 1e-12


def test_check_report_csv_shape():
    rows = verify_harmonic_identities(0.5, extent=10)
    buf = io.StringIO()
    write_check_report(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "check,kind,mu,extent,stat_kind,stat,tol,passed"
    assert len(lines) == len(rows) + 1
    assert all(line.endswith(("true", "false")) for line in lines[1:])
