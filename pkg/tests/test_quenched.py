"""Sign-environment split: conditioned operators, gaps, quenched runs."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from distyly import (
    EnvironmentStream,
    GridFunction,
    ModelParams,
    ValidationError,
    apply_P,
    apply_birth,
    apply_death,
    death_step_defect,
    hybrid,
    product_martingale_check,
    quenched_estimate,
    solve_bracket,
    verify_death_cycle_bounds,
    verify_split_identities,
)


# ---------------------------------------------------------------------
# conditioned one-step operators
# ---------------------------------------------------------------------

def test_defect_hand_value():
    """mu = 0.5, (1, 3): gamma = 1/3, m = 2, s = 4, mu^m = 1/4, so the
    defect is (1/3) * (3/4)/(5/4) * (1/2) = 1/10."""
    p = ModelParams(0.5)
    assert death_step_defect(p, 1, 3) == pytest.approx(0.1, abs=1e-15)
    assert death_step_defect(p, 3, 1) == pytest.approx(0.1, abs=1e-15)
    assert death_step_defect(p, 7, 7) == 0.0


def test_defect_guards():
    p = ModelParams(0.5)
    with pytest.raises(ValidationError):
        death_step_defect(p, 0, 3)
    with pytest.raises(ValidationError):
        death_step_defect(p, 3, 0)


def test_death_step_on_pair_sum_hand_value():
    """(1, 3) at mu = 0.5: (1 * f1(0,3) + 3 * f1(1,2)) / 4 = 27/32, which
    is also (1 - 0.1) * f1(1,3) / (2 lam)."""
    g = GridFunction.from_bound(0.5, "f1", 8)
    out = apply_death(g)
    assert out.value(1, 3) == pytest.approx(0.84375, abs=1e-15)


def test_pair_sum_eigenrelations_on_grids():
    """Births scale f1 by 1/(2 lam_bar) on the whole interior; deaths
    scale it by (1 - defect)/(2 lam).  Axis rows keep their values."""
    mu = 0.5
    p = ModelParams(mu)
    n = 12
    g = GridFunction.from_bound(mu, "f1", n)
    born = apply_birth(g)
    assert_allclose(born.values[1:, 1:], g.values[1:, 1:] * 0.75,
                    rtol=0.0, atol=1e-14)
    assert_allclose(born.values[0, :], g.values[0, :], rtol=0.0, atol=0.0)

    died = apply_death(g)
    for x in range(1, n + 1):
        for y in range(1, n + 1):
            d = death_step_defect(p, x, y)
            want = (1.0 - d) * g.value(x, y) / (2.0 * p.lam)
            assert died.value(x, y) == pytest.approx(want, rel=1e-13)
    assert_allclose(died.values[:, 0], g.values[:, 0], rtol=0.0, atol=0.0)


def test_total_power_eigenrelations_on_grids():
    """mu^(x+y) is an exact eigenfunction of both conditioned operators:
    factor mu under births, 1/mu under deaths."""
    for mu in (0.3, 0.8):
        g = GridFunction.from_bound(mu, "f0", 10)
        born = apply_birth(g)
        died = apply_death(g)
        assert_allclose(born.values[1:, 1:], mu * g.values[1:, 1:],
                        rtol=1e-14, atol=0.0)
        assert_allclose(died.values[1:, 1:], g.values[1:, 1:] / mu,
                        rtol=1e-14, atol=0.0)


def test_split_recomposes_full_operator():
    """lam * P_death + lam_bar * P_birth agrees with the one-step operator
    on an arbitrary grid, axis rows included."""
    mu = 0.6
    p = ModelParams(mu)
    n = 15
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(414)))
    vals = rng.uniform(0.0, 1.0, size=(n + 1, n + 1))
    g = GridFunction(n, vals, lambda xs, ys: np.cos(0.1 * xs + 0.2 * ys),
                     mu)
    combined = (p.lam * apply_death(g).values
                + p.lam_bar * apply_birth(g).values)
    direct = apply_P(p, hybrid(), g).values
    assert_allclose(combined, direct, rtol=0.0, atol=1e-14)


def test_apply_birth_needs_frontier_rule():
    vals = np.ones((5, 5))
    g = GridFunction(4, vals, None, 0.5)
    with pytest.raises(ValidationError):
        apply_birth(g)
    # deaths only read inward; no rule needed
    assert apply_death(g).value(2, 2) == 1.0


# ---------------------------------------------------------------------
# verifier suites
# ---------------------------------------------------------------------

@pytest.mark.parametrize("mu", [0.2, 0.5, 0.8])
def test_split_identity_suite_green(mu):
    rows = verify_split_identities(mu, extent=30)
    names = [r.check for r in rows]
    assert names == [
        "birth_total_power", "death_total_power", "birth_pair_sum",
        "death_pair_sum", "defect_upper_sandwich", "defect_lower_sandwich",
        "split_decomposition",
    ]
    for r in rows:
        assert r.passed, f"{r.check} failed at mu={mu}: stat={r.stat}"


@pytest.mark.parametrize("mu", [0.2, 0.5, 0.8])
def test_death_cycle_bracket_green_through_n6(mu):
    rows = verify_death_cycle_bounds(mu, n_max=6, extent=40)
    by_name = {r.check: r for r in rows}
    for k in range(7):
        assert by_name[f"death_cycle_lower_n{k}"].passed
        assert by_name[f"death_cycle_upper_n{k}"].passed
    # n = 0 needs no admissibility trim at all
    assert by_name["death_cycle_skipped_n0"].stat == 0.0
    # larger n keeps shaving states off the diagonal and the near-axis rim
    skipped = [by_name[f"death_cycle_skipped_n{k}"].stat for k in range(7)]
    assert all(a <= b for a, b in zip(skipped, skipped[1:]))


def test_death_cycle_guards():
    with pytest.raises(ValidationError):
        verify_death_cycle_bounds(0.5, n_max=-1, extent=10)
    # extent too small to leave admissible states at large n
    with pytest.raises(ValidationError):
        verify_death_cycle_bounds(0.5, n_max=40, extent=3)


# ---------------------------------------------------------------------
# environment streams
# ---------------------------------------------------------------------

def test_environment_prefix_stability():
    """The first n signs never change when more are drawn, and a fresh
    stream with the same key reproduces them."""
    p = ModelParams(0.5)
    env = EnvironmentStream(p, master_seed=7, index=3)
    head = env.signs(50).copy()
    tail = env.signs(5000)
    assert np.array_equal(tail[:50], head)
    again = EnvironmentStream(p, master_seed=7, index=3)
    assert np.array_equal(again.signs(5000), tail)
    other = EnvironmentStream(p, master_seed=7, index=4)
    assert not np.array_equal(other.signs(5000), tail)


def test_environment_signs_are_signs():
    env = EnvironmentStream(ModelParams(0.4), master_seed=11)
    s = env.signs(2000)
    assert s.dtype == np.int8
    assert set(np.unique(s)) <= {-1, 1}


def test_death_steps_and_gaps_are_consistent():
    """The k-th death happens after chi_1 + ... + chi_k births, so its
    1-based step index is the gap cumsum plus k."""
    env = EnvironmentStream(ModelParams(0.5), master_seed=42, index=1)
    steps = env.death_steps(200)
    gaps = env.gaps(200)
    assert np.array_equal(steps, np.cumsum(gaps) + np.arange(1, 201))
    signs = env.signs(int(steps[-1]))
    assert np.all(signs[steps - 1] == -1)
    assert int(np.sum(signs == -1)) == 200


def test_empirical_death_rate_matches_lam():
    p = ModelParams(0.5)     # lam = 1/3
    env = EnvironmentStream(p, master_seed=5)
    n = 200_000
    rate = env.empirical_death_rate(n)
    sigma = np.sqrt(p.lam * p.lam_bar / n)
    assert abs(rate - p.lam) <= 5 * sigma


def test_environment_guards():
    env = EnvironmentStream(ModelParams(0.5), master_seed=1)
    with pytest.raises(ValidationError):
        env.signs(-1)
    with pytest.raises(ValidationError):
        env.death_steps(0)


# ---------------------------------------------------------------------
# product martingale over the death gaps
# ---------------------------------------------------------------------

@pytest.mark.parametrize("mu", [0.2, 0.5, 0.8])
def test_product_martingale_mean_one(mu):
    rep = product_martingale_check(ModelParams(mu), n=5, draws=20_000)
    assert rep.pgf_residual <= 1e-14
    assert rep.passed
    assert abs(rep.mean - 1.0) <= 3.0 * rep.half_width


def test_product_martingale_guards():
    p = ModelParams(0.5)
    with pytest.raises(ValidationError):
        product_martingale_check(p, n=0, draws=100)
    with pytest.raises(ValidationError):
        product_martingale_check(p, n=3, draws=1)


# ---------------------------------------------------------------------
# quenched absorption estimate
# ---------------------------------------------------------------------

def test_quenched_absorbed_start_is_certain():
    rep = quenched_estimate(ModelParams(0.5), x=0, y=9, environments=3,
                            runs_per_env=4, max_steps=10)
    assert rep.mean == 1.0
    assert rep.half_width == 0.0
    assert rep.censored_runs == 0
    assert not rep.censored_flag


def test_quenched_worker_schedule_invariance():
    """Per-environment frequencies are keyed by (seed, env, run), so the
    thread schedule cannot change them."""
    p = ModelParams(0.5)
    one = quenched_estimate(p, 1, 1, environments=12, runs_per_env=40,
                            max_steps=400, master_seed=9, workers=1)
    three = quenched_estimate(p, 1, 1, environments=12, runs_per_env=40,
                              max_steps=400, master_seed=9, workers=3)
    assert np.array_equal(one.per_env_freq, three.per_env_freq)
    assert one.mean == three.mean
    assert one.censored_runs == three.censored_runs


def test_quenched_mean_matches_annealed_bracket():
    """Averaging the conditional absorption frequency over environments
    recovers the plain absorption probability; compare against the
    solver's enclosure at (1, 1)."""
    p = ModelParams(0.5)
    rep = quenched_estimate(p, 1, 1, environments=60, runs_per_env=150,
                            max_steps=2000, master_seed=42)
    sol = solve_bracket(p, hybrid(), extent=40, tol=1e-10)
    lo, hi = sol.q_enclosure(1, 1)
    assert rep.mean + 4.0 * rep.half_width >= lo
    assert rep.mean - 4.0 * rep.half_width <= hi


def test_quenched_guards():
    p = ModelParams(0.5)
    with pytest.raises(ValidationError):
        quenched_estimate(p, 1, 1, environments=1, runs_per_env=5,
                          max_steps=10)
    with pytest.raises(ValidationError):
        quenched_estimate(p, 1, 1, environments=2, runs_per_env=0,
                          max_steps=10)
    with pytest.raises(ValidationError):
        quenched_estimate(p, -1, 1, environments=2, runs_per_env=1,
                          max_steps=10)
