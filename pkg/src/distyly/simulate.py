"""Monte Carlo estimation of absorption probabilities.

Runs are independent walks with per-run random streams derived from
(master_seed, tag, run index), so results are a pure function of the
master seed and run count: worker threads only partition the index range
and can never change the estimate.  A run still alive at the step horizon
is classified as survived and flagged, which makes every extinction
frequency here a lower estimate of the true absorption probability.

Named kinds (hybrid, ibcos, buts) walk in a compiled kernel; custom kinds
take the generic python path with identical inverse-CDF semantics (one
uniform per step, successor order right, up, left, down).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from . import model as _model
from .bounds import conjectured_decay_rate, decay_rate_bounds
from .errors import ConsistencyError, ValidationError
from .rng import (TAG_BEHAVIOR, TAG_COUPLED, TAG_DECAY, TAG_HITTING, TAG_RUN,
                  stream)


def wilson_interval(successes: int, trials: int, z: float = 1.96
                    ) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValidationError("bad (successes, trials) for an interval")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials
                         + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# thresholds mirror kernel_weights + step exactly: r, then u = lam_bar - r,
# l, d = lam - l, cumulative in the fixed successor order
@njit(cache=True, nogil=True)
def _walk_named(rng, x, y, lam, code, max_steps):
    """Returns (absorbed, steps_used, final_x, final_y)."""
    lam_bar = 1.0 - lam
    for n in range(max_steps):
        if x == 0 or y == 0:
            return 1, n, x, y
        s = x + y
        if code == 0:          # hybrid
            r = lam_bar * 0.5
            u_ = lam_bar - r
            l = lam * (x / s)
        elif code == 1:        # ibcos
            pp = x / s
            r = lam_bar * pp
            u_ = lam_bar - r
            l = lam * pp
        else:                  # buts
            r = lam_bar * 0.5
            u_ = lam_bar - r
            l = lam * 0.5
        c1 = r
        c2 = c1 + u_
        c3 = c2 + l
        u = rng.random()
        if u < c1:
            x += 1
        elif u < c2:
            y += 1
        elif u < c3:
            x -= 1
        else:
            y -= 1
    if x == 0 or y == 0:
        return 1, max_steps, x, y
    return 0, max_steps, x, y


def _walk_custom(params, kind, x, y, rng, max_steps):
    state = (x, y)
    for n in range(max_steps):
        if min(state) == 0:
            return 1, n, state[0], state[1]
        state = _model.step(params, kind, state, rng.random())
    if min(state) == 0:
        return 1, max_steps, state[0], state[1]
    return 0, max_steps, state[0], state[1]


@dataclass(frozen=True)
class SimConfig:
    mu: float
    kind: _model.ModelKind
    x: int
    y: int
    runs: int
    max_steps: int
    master_seed: int = 42
    workers: int = 1

    def __post_init__(self):
        _model.ModelParams(self.mu)  # validates mu
        if not (0 <= self.x <= _model.COORD_CAP and 0 <= self.y <= _model.COORD_CAP):
            raise ValidationError("start state outside the coordinate cap")
        if self.runs < 1 or self.max_steps < 1 or self.workers < 1:
            raise ValidationError(
                "need runs >= 1, max_steps >= 1, workers >= 1")


@dataclass(frozen=True)
class EstimateReport:
    """Extinction-frequency estimate.  p_hat is a lower estimate of the
    absorption probability: censored runs count as survived."""
    config: SimConfig
    extinct_count: int
    censored_count: int
    p_hat: float
    ci_low: float
    ci_high: float
    censored_flag: bool
    decay_hat: Optional[float]      # p_hat^(1/x) for diagonal starts
    below_resolution: bool          # diagonal start with zero hits

    @property
    def runs(self) -> int:
        return self.config.runs


def _run_flags(config: SimConfig) -> np.ndarray:
    """Per-run absorbed flags, identical for any worker count."""
    p = _model.ModelParams(config.mu)
    kind = config.kind
    flags = np.zeros(config.runs, dtype=np.uint8)
    named = kind.code in (_model.HYBRID, _model.IBCOS, _model.BUTS)
    if not named:
        kind.ensure_symmetry()

    def do_range(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            rng = stream(config.master_seed, TAG_RUN, i)
            if named:
                absorbed, _, _, _ = _walk_named(
                    rng, config.x, config.y, p.lam, kind.code, config.max_steps)
            else:
                absorbed, _, _, _ = _walk_custom(
                    p, kind, config.x, config.y, rng, config.max_steps)
            flags[i] = absorbed

    if config.workers == 1:
        do_range(0, config.runs)
    else:
        chunk = (config.runs + config.workers - 1) // config.workers
        spans = [(k * chunk, min((k + 1) * chunk, config.runs))
                 for k in range(config.workers) if k * chunk < config.runs]
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(lambda sp: do_range(*sp), spans))
    return flags


def simulate_extinction(config: SimConfig) -> EstimateReport:
    flags = _run_flags(config)
    extinct = int(flags.sum())
    censored = config.runs - extinct
    p_hat = extinct / config.runs
    lo, hi = wilson_interval(extinct, config.runs)
    diagonal = config.x == config.y and config.x > 0
    decay_hat = p_hat ** (1.0 / config.x) if diagonal else None
    return EstimateReport(
        config=config, extinct_count=extinct, censored_count=censored,
        p_hat=p_hat, ci_low=lo, ci_high=hi, censored_flag=censored > 0,
        decay_hat=decay_hat,
        below_resolution=diagonal and extinct == 0)


# ---------------------------------------------------------------------
# diagonal decay experiment
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class DecayRow:
    mu: float
    p_hat: float
    decay_hat: float            # p_hat^(1/x); 0.0 when below resolution
    decay_lower: float
    decay_upper: float
    decay_conjectured: float
    extinct_count: int
    censored_count: int
    ci_low: float
    ci_high: float
    below_resolution: bool


def decay_experiment(mus: Sequence[float], x: int, runs: int, max_steps: int,
                     master_seed: int = 42, workers: int = 1,
                     kind: Optional[_model.ModelKind] = None) -> List[DecayRow]:
    """Estimated diagonal decay roots p_hat^(1/x) from (x, x) against the
    proven two-sided rate bounds and the conjectured rate, one row per mu.
    Each (mu, run) pair has its own stream: adding mu values or runs
    never perturbs other cells."""
    if kind is None:
        kind = _model.hybrid()
    if x < 1:
        raise ValidationError("x must be >= 1 (diagonal start)")
    if runs < 1 or max_steps < 1 or workers < 1:
        raise ValidationError("need runs >= 1, max_steps >= 1, workers >= 1")
    rows = []
    named = kind.code in (_model.HYBRID, _model.IBCOS, _model.BUTS)
    for i_mu, mu in enumerate(mus):
        p = _model.ModelParams(mu).require_supercritical()
        flags = np.zeros(runs, dtype=np.uint8)

        def do_range(lo: int, hi: int) -> None:
            for r in range(lo, hi):
                rng = stream(master_seed, TAG_DECAY, i_mu, r)
                if named:
                    absorbed, _, _, _ = _walk_named(rng, x, x, p.lam,
                                                    kind.code, max_steps)
                else:
                    absorbed, _, _, _ = _walk_custom(p, kind, x, x, rng,
                                                     max_steps)
                flags[r] = absorbed

        if workers == 1:
            do_range(0, runs)
        else:
            chunk = (runs + workers - 1) // workers
            spans = [(k * chunk, min((k + 1) * chunk, runs))
                     for k in range(workers) if k * chunk < runs]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda sp: do_range(*sp), spans))

        extinct = int(flags.sum())
        p_hat = extinct / runs
        lo, hi = wilson_interval(extinct, runs)
        dlo, dhi = decay_rate_bounds(mu)
        rows.append(DecayRow(
            mu=mu, p_hat=p_hat,
            decay_hat=p_hat ** (1.0 / x) if extinct else 0.0,
            decay_lower=dlo, decay_upper=dhi,
            decay_conjectured=conjectured_decay_rate(mu),
            extinct_count=extinct, censored_count=runs - extinct,
            ci_low=lo, ci_high=hi,
            below_resolution=extinct == 0))
    return rows


# ---------------------------------------------------------------------
# coupled pair: absorption is monotone in the start state
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _coupled_pair(rng, x, y, lam, max_steps):
    """One coupled trajectory of hybrid walks from (x, y) and (x+1, y).

    Both chains see the same total-size increments; deaths are aligned so
    the primed state stays exactly one unit above the unprimed in one
    coordinate until the unprimed chain absorbs, after which the primed
    chain walks alone.  Returns (status, tau, tau_prime) where status is
    0 ok / 1 invariant broken / 2 order broken, and -1 marks a censored
    (not yet absorbed) time.
    """
    xp = x + 1
    yp = y
    lam_bar = 1.0 - lam
    tau = -1
    n = 0
    while n < max_steps:
        if x == 0 or y == 0:
            break
        u = rng.random()
        n += 1
        s = x + y
        sp = s + 1
        if u < lam_bar:
            # shared birth direction
            if u < 0.5 * lam_bar:
                x += 1
                xp += 1
            else:
                y += 1
                yp += 1
        else:
            w = (u - lam_bar) / lam
            m1 = min(x / s, xp / sp)          # both left
            m2 = min(y / s, yp / sp)          # both down
            m3 = max(x / s - xp / sp, 0.0)    # unprimed left, primed down
            if w < m1:
                x -= 1
                xp -= 1
            elif w < m1 + m2:
                y -= 1
                yp -= 1
            elif w < m1 + m2 + m3:
                x -= 1
                yp -= 1
            else:
                y -= 1
                xp -= 1
        dx = xp - x
        dy = yp - y
        if not ((dx == 1 and dy == 0) or (dx == 0 and dy == 1)):
            return 1, n, -1
    if x == 0 or y == 0:
        tau = n
    if tau < 0:
        return 0, -1, -1    # both censored; order vacuously fine
    if xp == 0 or yp == 0:
        return 0, tau, tau  # the shared death absorbed both at once
    # primed walks alone for the remaining budget (hybrid kernel)
    m = tau
    while m < max_steps:
        if xp == 0 or yp == 0:
            return 0, tau, m
        u = rng.random()
        m += 1
        sp = xp + yp
        c1 = lam_bar * 0.5
        c2 = c1 + (lam_bar - c1)
        c3 = c2 + lam * (xp / sp)
        if u < c1:
            xp += 1
        elif u < c2:
            yp += 1
        elif u < c3:
            xp -= 1
        else:
            yp -= 1
    if xp == 0 or yp == 0:
        return 0, tau, max_steps
    return 0, tau, -1


@dataclass(frozen=True)
class CoupledReport:
    x: int
    y: int
    runs: int
    max_steps: int
    invariant_violations: int
    order_violations: int
    unprimed_absorbed: int
    primed_absorbed: int
    informative_count: int   # unprimed absorbed while primed still alive

    @property
    def informative_fraction(self) -> float:
        return self.informative_count / self.runs

    @property
    def passed(self) -> bool:
        return self.invariant_violations == 0 and self.order_violations == 0


def coupled_monotonicity_trial(params: _model.ModelParams, x: int, y: int,
                               runs: int, max_steps: int,
                               master_seed: int = 42, workers: int = 1
                               ) -> CoupledReport:
    """Pathwise witness that absorption is nonincreasing in the start
    state, for the hybrid kind: couple walks from (x, y) and (x+1, y) so
    the second is always the first plus one unit in one coordinate, hence
    can never absorb first.  Hard-asserts the unit-offset invariant and
    the absorption order on every path."""
    if min(x, y) < 1:
        raise ValidationError("coupling starts at an interior state")
    if runs < 1 or max_steps < 1 or workers < 1:
        raise ValidationError("need runs >= 1, max_steps >= 1, workers >= 1")
    lam = params.lam

    taus = np.full(runs, -2, dtype=np.int64)
    taups = np.full(runs, -2, dtype=np.int64)
    status = np.zeros(runs, dtype=np.int64)

    def do_range(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            rng = stream(master_seed, TAG_COUPLED, i)
            st, tau, taup = _coupled_pair(rng, x, y, lam, max_steps)
            status[i] = st
            taus[i] = tau
            taups[i] = taup

    if workers == 1:
        do_range(0, runs)
    else:
        chunk = (runs + workers - 1) // workers
        spans = [(k * chunk, min((k + 1) * chunk, runs))
                 for k in range(workers) if k * chunk < runs]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda sp: do_range(*sp), spans))

    inv = int(np.sum(status == 1))
    order = int(np.sum((taus >= 0) & (taups >= 0) & (taups < taus)))
    unpr = int(np.sum(taus >= 0))
    prim = int(np.sum(taups >= 0))
    informative = int(np.sum((taus >= 0) & ((taups > taus) | (taups == -1))))
    report = CoupledReport(x, y, runs, max_steps, inv, order, unpr, prim,
                           informative)
    if not report.passed:
        raise ConsistencyError(
            f"coupling invariant broke on {inv} paths, order on {order}")
    return report


# ---------------------------------------------------------------------
# tail-bound spot checks
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _walk_to_corridor(rng, x, y, lam, c, max_steps):
    """Hybrid walk until min(X, Y) <= c.  Returns (hit, |X-Y| at hit)."""
    lam_bar = 1.0 - lam
    for n in range(max_steps):
        if x <= c or y <= c:
            return 1, abs(x - y)
        s = x + y
        c1 = lam_bar * 0.5
        c2 = c1 + (lam_bar - c1)
        c3 = c2 + lam * (x / s)
        u = rng.random()
        if u < c1:
            x += 1
        elif u < c2:
            y += 1
        elif u < c3:
            x -= 1
        else:
            y -= 1
    if x <= c or y <= c:
        return 1, abs(x - y)
    return 0, -1


@dataclass(frozen=True)
class TailCheckRow:
    check: str
    hits: int
    runs: int
    p_hat: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool    # lower CI end does not exceed the proven bound


def hitting_bound_checks(params: _model.ModelParams, x: int, beta: float,
                         alpha: float, runs: int, max_steps: int,
                         master_seed: int = 42) -> List[TailCheckRow]:
    """One-sided statistical checks of two tail bounds for the hybrid
    walk from (x, x):

      corridor: P(min coordinate ever reaches beta*x) <= 2 mu^((1-beta)x)
      discrepancy: P(|X-Y| <= alpha*x when the corridor is first hit)
                   <= mu^((2 - 2 beta - alpha) x)

    The finite horizon can only undercount hits, so the test is one-sided:
    it fails only when the lower CI end exceeds the bound.
    """
    params.require_supercritical()
    if x < 2 or not (0.0 < beta < 1.0) or not (0.0 < alpha < 1.0):
        raise ValidationError("need x >= 2 and alpha, beta in (0, 1)")
    if runs < 1 or max_steps < 1:
        raise ValidationError("need runs >= 1 and max_steps >= 1")
    c = int(beta * x)
    mu = params.mu
    corridor_bound = 2.0 * mu ** (x - c)
    disc_bound = mu ** ((2.0 - 2.0 * beta - alpha) * x)

    hits = 0
    narrow = 0
    for i in range(runs):
        rng = stream(master_seed, TAG_HITTING, i)
        hit, diff = _walk_to_corridor(rng, x, x, params.lam, c, max_steps)
        hits += hit
        if hit and diff <= alpha * x:
            narrow += 1

    rows = []
    for name, k, bound in (("corridor_hit", hits, corridor_bound),
                           ("narrow_at_hit", narrow, disc_bound)):
        lo, hi = wilson_interval(k, runs)
        rows.append(TailCheckRow(name, k, runs, k / runs, lo, hi, bound,
                                 lo <= bound))
    return rows


# ---------------------------------------------------------------------
# standard behavior on survival
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class BehaviorReport:
    runs: int
    extinct_count: int
    surviving_count: int
    grown_count: int         # survivors whose min coordinate grew enough
    growth_threshold: int
    passed: bool


def standard_behavior_check(params: _model.ModelParams,
                            kind: Optional[_model.ModelKind], x: int, y: int,
                            runs: int, max_steps: int,
                            growth_factor: float = 10.0,
                            min_fraction: float = 0.95,
                            master_seed: int = 42) -> BehaviorReport:
    """Survival means both coordinates diverge: among runs still alive at
    the horizon, at least ``min_fraction`` must have min(X, Y) at least
    ``growth_factor`` times the starting min.  The thresholds are
    heuristics for a horizon long enough for the drift to dominate."""
    if kind is None:
        kind = _model.hybrid()
    if min(x, y) < 1 or runs < 1 or max_steps < 1:
        raise ValidationError("need an interior start and runs, steps >= 1")
    params.require_supercritical()
    named = kind.code in (_model.HYBRID, _model.IBCOS, _model.BUTS)
    threshold = int(growth_factor * min(x, y))
    extinct = surviving = grown = 0
    for i in range(runs):
        rng = stream(master_seed, TAG_BEHAVIOR, i)
        if named:
            absorbed, _, fx, fy = _walk_named(rng, x, y, params.lam,
                                              kind.code, max_steps)
        else:
            absorbed, _, fx, fy = _walk_custom(params, kind, x, y, rng,
                                               max_steps)
        if absorbed:
            extinct += 1
        else:
            surviving += 1
            if min(fx, fy) >= threshold:
                grown += 1
    passed = surviving == 0 or grown >= min_fraction * surviving
    return BehaviorReport(runs, extinct, surviving, grown, threshold, passed)
