"""Environment-first view of the walk: jump signs as their own process.

Whether a jump is a birth or a death does not depend on the position, so
the sign sequence e_1, e_2, ... (+1 birth with probability lam_bar, -1
death with probability lam) can be generated as an environment of its
own, with the walk routing each prescribed jump afterwards.  Conditioning
the absorbing one-step operator on the sign splits it as

    P = lam * P_death + lam_bar * P_birth,
    (P_birth f)(x, y) = (f(x+1, y) + f(x, y+1)) / 2
    (P_death f)(x, y) = (x f(x-1, y) + y f(x, y-1)) / (x + y)

both fixing axis points.  This module is specific to the hybrid kind:
the even birth split and size-proportional death split are what make the
conditioned operators position-homogeneous.

Useful facts, all checkable here: the total-power form mu^(x+y) is an
exact eigenfunction of both split operators (factors mu and 1/mu); the
pair sum f1 = mu^x + mu^y picks up factor 1/(2 lam_bar) under births and
(1 - defect)/(2 lam) under deaths, where the defect depends only on the
imbalance; the gaps between deaths are iid geometric, which makes
1 / ((2 lam)^n (2 lam_bar)^(T_n)) a mean-one product martingale over the
first n death gaps T_n = chi_1 + ... + chi_n.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from . import model as _model
from .bounds import BoundKit, CheckRow, _apply_kernel_raw, _residual_row, _slack_row
from .errors import ValidationError
from .grid import GridFunction
from .rng import TAG_ENV, TAG_MARTINGALE, TAG_TRAJ, stream


# ---------------------------------------------------------------------
# conditioned one-step operators
# ---------------------------------------------------------------------

def apply_birth(f: GridFunction) -> GridFunction:
    """Birth-conditioned step on interior {1..extent}^2, axes fixed.
    Needs the grid's frontier rule for the row one past the square."""
    n = f.extent
    ext = f.extended()
    out = f.values.copy()
    out[1:, 1:] = 0.5 * (ext[2: n + 2, 1: n + 1] + ext[1: n + 1, 2: n + 2])
    return GridFunction(n, out, f.frontier_rule, f.mu)


def apply_death(f: GridFunction) -> GridFunction:
    """Death-conditioned step on interior {1..extent}^2, axes fixed.
    Self-contained: only inward neighbors are read."""
    n = f.extent
    xs = np.arange(1, n + 1, dtype=np.float64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v = f.values
    out = v.copy()
    out[1:, 1:] = (X * v[0: n, 1: n + 1] + Y * v[1: n + 1, 0: n]) / (X + Y)
    return GridFunction(n, out, f.frontier_rule, f.mu)


def death_step_defect(params: _model.ModelParams, x: int, y: int) -> float:
    """Imbalance-driven defect in the death-step eigenrelation for the
    pair sum: P_death f1 = (1 - defect) f1 / (2 lam).  Zero on the
    diagonal; sandwiched between gamma^2 m/s and gamma m/s for
    imbalance m = |x - y|, total s = x + y."""
    if x < 1 or y < 1:
        raise ValidationError("defect is defined on interior states")
    m = abs(x - y)
    if m == 0:
        return 0.0
    s = x + y
    mu_m = params.mu ** m
    return params.gamma * (1.0 - mu_m) / (1.0 + mu_m) * (m / s)


# raw-array forms of the split operators, used by the verifiers; result
# of _birth_raw is valid one site less far out than the input
def _birth_raw(arr: np.ndarray) -> np.ndarray:
    out = np.full_like(arr, np.nan)
    out[1:-1, 1:-1] = 0.5 * (arr[2:, 1:-1] + arr[1:-1, 2:])
    return out


def _death_raw(arr: np.ndarray) -> np.ndarray:
    n = arr.shape[0] - 1
    xs = np.arange(1, n + 1, dtype=np.float64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    out = np.full_like(arr, np.nan)
    out[1:, 1:] = (X * arr[0:n, 1:n + 1] + Y * arr[1:n + 1, 0:n]) / (X + Y)
    return out


def verify_split_identities(mu: float, extent: int, tol: float = 1e-12
                            ) -> List[CheckRow]:
    """Exact eigenrelations of the conditioned operators on the interior
    {1..extent}^2 (bare axis values), plus the kernel decomposition
    lam * P_death + lam_bar * P_birth = P on a seeded random grid and the
    two-sided sandwich of the death-step defect."""
    params = _model.ModelParams(mu).require_supercritical()
    kit = BoundKit(mu)
    n = int(extent)
    if n < 2:
        raise ValidationError("extent must be >= 2")
    lam, lam_bar, gamma = params.lam, params.lam_bar, params.gamma

    f0 = kit.raw_grid("f0", n + 1)
    f1 = kit.raw_grid("f1", n + 1)
    sl = np.s_[1: n + 1, 1: n + 1]
    xs = np.arange(1, n + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    S = (X + Y).astype(np.float64)
    M = np.abs(X - Y).astype(np.float64)

    # the birth image of the (n+2)-sided lattice is valid on all of sl
    rows = [
        _residual_row("birth_total_power", "hybrid", mu, n,
                      np.max(np.abs(_birth_raw(f0)[sl] - mu * f0[sl])), tol),
        _residual_row("death_total_power", "hybrid", mu, n,
                      np.max(np.abs(_death_raw(f0)[sl] - f0[sl] / mu)), tol),
        _residual_row("birth_pair_sum", "hybrid", mu, n,
                      np.max(np.abs(_birth_raw(f1)[sl]
                                    - f1[sl] / (2.0 * lam_bar))), tol),
    ]

    defect = np.zeros_like(S)
    off = M > 0
    mu_m = mu ** M[off]
    defect[off] = gamma * (1.0 - mu_m) / (1.0 + mu_m) * (M[off] / S[off])
    rows.append(_residual_row(
        "death_pair_sum", "hybrid", mu, n,
        np.max(np.abs(_death_raw(f1)[sl]
                      - (1.0 - defect) * f1[sl] / (2.0 * lam))), tol))

    rows.append(_slack_row("defect_upper_sandwich", "hybrid", mu, n,
                           np.min(gamma * M / S - defect), 1e-15))
    rows.append(_slack_row("defect_lower_sandwich", "hybrid", mu, n,
                           np.min(defect - gamma * gamma * M / S), 1e-15))

    # decomposition on an arbitrary grid: seeded random values in [0, 1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(2207)))
    g = rng.uniform(0.0, 1.0, size=(n + 2, n + 2))
    combined = lam * _death_raw(g) + lam_bar * _birth_raw(g)
    direct = _apply_kernel_raw(params, _model.hybrid(), g)
    rows.append(_residual_row(
        "split_decomposition", "hybrid", mu, n,
        np.max(np.abs(combined[1:-1, 1:-1] - direct)), tol))
    return rows


def verify_death_cycle_bounds(mu: float, n_max: int, extent: int,
                              tol: float = 1e-13) -> List[CheckRow]:
    """Two-sided bracket for n birth steps composed after one death step
    applied to the pair sum f1:

        (1 - a_n) B f1 <= P_birth^n P_death f1 <= (1 - gamma a_n) B f1

    with B = 1 / (2 lam (2 lam_bar)^n) and a_n = gamma (m + gamma n)/(s + n),
    valid where min(x, y, |x - y|) >= n (every interior state for n = 0).
    States outside that region are skipped and counted.
    """
    params = _model.ModelParams(mu).require_supercritical()
    kit = BoundKit(mu)
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    n = int(extent)
    lam, lam_bar, gamma = params.lam, params.lam_bar, params.gamma

    big = n + n_max + 1
    f1_big = kit.raw_grid("f1", big)
    work = _death_raw(f1_big)       # valid on {1..big}^2
    valid_hi = big

    rows: List[CheckRow] = []
    for k in range(0, n_max + 1):
        if k > 0:
            nxt = np.full_like(work, np.nan)
            nxt[1:valid_hi, 1:valid_hi] = 0.5 * (
                work[2:valid_hi + 1, 1:valid_hi]
                + work[1:valid_hi, 2:valid_hi + 1])
            work = nxt
            valid_hi -= 1
        # compare on {1..extent}^2 cap admissibility
        xs = np.arange(1, n + 1, dtype=np.int64)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        S = (X + Y).astype(np.float64)
        M = np.abs(X - Y).astype(np.float64)
        adm = (np.minimum(X, Y) >= max(k, 1)) & (M >= k) if k > 0 else \
            np.ones_like(X, dtype=bool)
        a = gamma * (M + gamma * k) / (S + k)
        scale = 1.0 / (2.0 * lam * (2.0 * lam_bar) ** k)
        f1_here = kit.raw_grid("f1", n)[1:, 1:]
        comp = work[1: n + 1, 1: n + 1]
        lo = (1.0 - a) * scale * f1_here
        hi = (1.0 - gamma * a) * scale * f1_here
        n_adm = int(np.sum(adm))
        if n_adm == 0:
            raise ValidationError(
                f"no admissible states for n={k} at extent {extent}")
        rows.append(_slack_row(f"death_cycle_lower_n{k}", "hybrid", mu, n,
                               np.min((comp - lo)[adm]), tol))
        rows.append(_slack_row(f"death_cycle_upper_n{k}", "hybrid", mu, n,
                               np.min((hi - comp)[adm]), tol))
        rows.append(CheckRow(f"death_cycle_skipped_n{k}", "hybrid", mu, n,
                             "skipped_states", float(adm.size - n_adm),
                             float(adm.size), True))
    return rows


# ---------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------

class EnvironmentStream:
    """Lazily grown iid sign sequence for one environment.

    Signs are +1 (birth) with probability lam_bar and -1 (death) with
    probability lam; the prefix of any length is a pure function of
    (master_seed, index).  Death bookkeeping is derived by scanning the
    realized signs, so the structural relation

        step of the k-th death = (number of +1 before it) + k

    holds by construction and the gaps between deaths are the iid
    geometric variables of the product martingale.
    """

    def __init__(self, params: _model.ModelParams, master_seed: int, index: int = 0):
        self.params = params
        self.master_seed = int(master_seed)
        self.index = int(index)
        self._signs = np.empty(0, dtype=np.int8)

    def _grow(self, n: int) -> None:
        if n <= self._signs.size:
            return
        size = max(64, 1 << int(math.ceil(math.log2(n))))
        rng = stream(self.master_seed, TAG_ENV, self.index)
        u = rng.random(size)
        signs = np.where(u < self.params.lam, -1, 1).astype(np.int8)
        self._signs = signs

    def signs(self, n: int) -> np.ndarray:
        """First n signs (a view; do not mutate)."""
        if n < 0:
            raise ValidationError("n must be >= 0")
        self._grow(n)
        return self._signs[:n]

    def death_steps(self, k: int) -> np.ndarray:
        """1-based step indices of the first k deaths."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        n = self._signs.size or 64
        while True:
            self._grow(n)
            idx = np.flatnonzero(self._signs == -1)
            if idx.size >= k:
                return idx[:k] + 1
            n *= 2

    def gaps(self, k: int) -> np.ndarray:
        """Birth counts between consecutive deaths, chi_1 .. chi_k."""
        steps = self.death_steps(k)
        prev = np.concatenate(([0], steps[:-1]))
        return steps - prev - 1

    def empirical_death_rate(self, n: int) -> float:
        s = self.signs(n)
        return float(np.mean(s == -1))


# ---------------------------------------------------------------------
# product martingale over death gaps
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class MartingaleReport:
    n: int
    draws: int
    mean: float
    half_width: float       # 95% normal CI half-width of the mean
    pgf_residual: float     # |pgf(1/(2 lam_bar)) - 2 lam|
    passed: bool


def product_martingale_check(params: _model.ModelParams, n: int, draws: int,
                             master_seed: int = 42) -> MartingaleReport:
    """Empirical mean of 1/((2 lam)^n (2 lam_bar)^(T_n)) over iid draws of
    the first n geometric death gaps, plus the exact generating-function
    identity it rests on.  Passes when the mean is within three CI
    half-widths of 1 and the identity holds to 1e-14."""
    params.require_supercritical()
    if n < 1 or draws < 2:
        raise ValidationError("need n >= 1 and draws >= 2")
    lam, lam_bar = params.lam, params.lam_bar
    # pgf of one gap at argument 1/(2 lam_bar): closed form is 2 lam
    theta = 1.0 / (2.0 * lam_bar)
    pgf = lam / (1.0 - lam_bar * theta)
    pgf_residual = abs(pgf - 2.0 * lam)

    rng = stream(master_seed, TAG_MARTINGALE)
    chi = rng.geometric(lam, size=(draws, n)).astype(np.int64) - 1
    t = chi.sum(axis=1)
    logm = -n * math.log(2.0 * lam) - t * math.log(2.0 * lam_bar)
    m = np.exp(logm)
    mean = float(np.mean(m))
    half_width = float(1.96 * np.std(m, ddof=1) / math.sqrt(draws))
    passed = abs(mean - 1.0) <= 3.0 * half_width and pgf_residual <= 1e-14
    return MartingaleReport(n, draws, mean, half_width, pgf_residual, passed)


# ---------------------------------------------------------------------
# quenched absorption estimate
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _quenched_walk(rng, signs, x, y, max_steps):
    """Walk one trajectory through a prescribed sign sequence.  Returns 1
    if absorbed within the horizon, 0 otherwise."""
    for i in range(max_steps):
        if x == 0 or y == 0:
            return 1
        u = rng.random()
        if signs[i] > 0:
            if u < 0.5:
                x += 1
            else:
                y += 1
        else:
            s = x + y
            if u < x / s:
                x -= 1
            else:
                y -= 1
    return 1 if x == 0 or y == 0 else 0


@dataclass(frozen=True)
class QuenchedReport:
    x: int
    y: int
    environments: int
    runs_per_env: int
    max_steps: int
    master_seed: int
    per_env_freq: np.ndarray
    mean: float
    half_width: float    # 95% CI half-width of the mean, clustered by env
    censored_runs: int

    @property
    def censored_flag(self) -> bool:
        return self.censored_runs > 0


def quenched_estimate(params: _model.ModelParams, x: int, y: int,
                      environments: int, runs_per_env: int, max_steps: int,
                      master_seed: int = 42, workers: int = 1
                      ) -> QuenchedReport:
    """Absorption frequency averaged over independent sign environments.

    For each environment j a fresh sign prefix is drawn; runs_per_env
    trajectories are routed through it with their own independent
    selection streams.  The per-environment frequencies estimate the
    conditional absorption probability given the environment; their mean
    estimates the annealed probability, with a clustered standard error
    (environments are the independent unit).  Runs still alive at the
    horizon count as survived (the estimate is a lower one).
    """
    if min(x, y) < 0 or max(x, y) > _model.COORD_CAP:
        raise ValidationError("bad start state")
    if environments < 2 or runs_per_env < 1 or max_steps < 1 or workers < 1:
        raise ValidationError(
            "need environments >= 2, runs_per_env >= 1, max_steps >= 1, "
            "workers >= 1")

    freqs = np.zeros(environments, dtype=np.float64)
    censored = np.zeros(environments, dtype=np.int64)

    def do_env(j: int) -> None:
        env = EnvironmentStream(params, master_seed, j)
        signs = np.ascontiguousarray(env.signs(max_steps))
        hits = 0
        for r in range(runs_per_env):
            rng = stream(master_seed, TAG_TRAJ, j, r)
            hits += _quenched_walk(rng, signs, x, y, max_steps)
        freqs[j] = hits / runs_per_env
        censored[j] = runs_per_env - hits

    if workers == 1:
        for j in range(environments):
            do_env(j)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(do_env, range(environments)))

    mean = float(np.mean(freqs))
    half_width = float(1.96 * np.std(freqs, ddof=1) / math.sqrt(environments))
    return QuenchedReport(x, y, environments, runs_per_env, max_steps,
                          master_seed, freqs, mean, half_width,
                          int(censored.sum()))
