"""Closed-form comparison functions for the absorption probability.

For rate ratio mu in (0, 1) write s = x + y.  The kit evaluates

    f0              mu^s
    f1              mu^x + mu^y
    f_min, f_max    mu^(x min y), mu^(x max y)
    f2              f_min - f_max
    h               f1 - f0
    f0_hat, f1_hat, h_hat     the same divided by binomial(s, x)
    f_hat           (2 mu)^s / binomial(s, x)
    improved_lower  (1 + mu / (2 (1 + mu)))^(x min y) * f1_hat

h dominates the absorption probability q pointwise and h_hat, f0 lie
below it everywhere.  improved_lower sharpens h_hat but is only a valid
lower bound away from the corner: at (1, 1) it exceeds 1 (and h) once
mu > (sqrt(17) - 1) / 4 ~ 0.7808, so brackets built from it cross there;
every other state stays coherent for all mu in (0, 1).  f_hat is kept
for the growth identities only and feeds no bound (it exceeds 1 on parts
of the interior).

Two evaluation surfaces exist on purpose.  ``value`` (and ``eval_bound``)
is the q-bound reading: members that bound q pointwise return exactly 1.0
on the axes, where q = 1, even when the bare formula differs (the raw
improved_lower exceeds 1 there and would stop being a valid lower bound).
``raw`` is the bare formula, axes included; the identity and inequality
verifiers use it exclusively, because the one-step identities need the
bare axis values.  h and h_hat equal 1 on the axes either way.

Hatted members are evaluated as exp(log ...) with a log-gamma binomial so
deep states neither overflow nor lose the exponential scale; ``log_raw``
exposes the log-space values directly for tail work past float range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import model as _model
from .errors import ValidationError
from .tableio import write_csv

NAMES = ("f0", "f1", "f_min", "f_max", "f2", "h",
         "f0_hat", "f1_hat", "f_hat", "h_hat", "improved_lower")

# Members returning exactly 1 on the axes under the q-bound reading.
_AXIS_ONE = frozenset(
    {"f0", "f1", "h", "h_hat", "f0_hat", "f1_hat", "improved_lower"})


def log_binomial(n, k):
    """log of binomial(n, k) via log-gamma; broadcasts over arrays."""
    n = np.asarray(n, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _as_coords(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if not (np.issubdtype(x.dtype, np.integer) or np.issubdtype(x.dtype, np.floating)):
        raise ValidationError("coordinates must be numeric")
    if np.any(x < 0) or np.any(y < 0):
        raise ValidationError("coordinates must be nonnegative")
    if np.any(x > _model.COORD_CAP) or np.any(y > _model.COORD_CAP):
        raise ValidationError(f"coordinates exceed cap {_model.COORD_CAP}")
    return x.astype(np.float64), y.astype(np.float64)


class BoundKit:
    """Evaluator for the comparison functions at a fixed mu in (0, 1)."""

    def __init__(self, mu: float):
        if not (isinstance(mu, (int, float)) and np.isfinite(mu) and 0.0 < mu < 1.0):
            raise ValidationError(
                f"bounds are defined for mu in (0, 1), got {mu!r}")
        self.mu = float(mu)
        self._log_mu = math.log(self.mu)
        # log(1 + mu / (2 (1 + mu))), the per-level gain of improved_lower
        self._log_gain = math.log1p(self.mu / (2.0 * (1.0 + self.mu)))

    # -- log-space raw values ------------------------------------------

    def log_raw(self, name: str, x, y):
        """log of the raw formula; f2 is signed and unsupported here."""
        x, y = _as_coords(x, y)
        s = x + y
        lm = self._log_mu
        if name == "f0":
            return s * lm
        if name == "f1":
            return np.logaddexp(x * lm, y * lm)
        if name == "f_min":
            return np.minimum(x, y) * lm
        if name == "f_max":
            return np.maximum(x, y) * lm
        if name == "h":
            lf1 = np.logaddexp(x * lm, y * lm)
            return lf1 + np.log1p(-np.exp(s * lm - lf1))
        if name == "f0_hat":
            return s * lm - log_binomial(s, x)
        if name == "f1_hat":
            return np.logaddexp(x * lm, y * lm) - log_binomial(s, x)
        if name == "f_hat":
            return s * (math.log(2.0) + lm) - log_binomial(s, x)
        if name == "h_hat":
            lf1 = np.logaddexp(x * lm, y * lm)
            return lf1 + np.log1p(-np.exp(s * lm - lf1)) - log_binomial(s, x)
        if name == "improved_lower":
            return (np.minimum(x, y) * self._log_gain
                    + np.logaddexp(x * lm, y * lm) - log_binomial(s, x))
        if name == "f2":
            raise ValidationError("f2 is signed; no log-space value")
        raise ValidationError(f"unknown bound name {name!r}")

    # -- linear-space values -------------------------------------------

    def raw(self, name: str, x, y):
        """Bare formula value; scalars in give a scalar back."""
        scalar = np.isscalar(x) and np.isscalar(y)
        if name == "f2":
            xv, yv = _as_coords(x, y)
            out = (np.exp(np.minimum(xv, yv) * self._log_mu)
                   - np.exp(np.maximum(xv, yv) * self._log_mu))
        elif name in ("f0", "f1", "f_min", "f_max"):
            xv, yv = _as_coords(x, y)
            lm = self._log_mu
            if name == "f0":
                out = np.exp((xv + yv) * lm)
            elif name == "f1":
                out = np.exp(xv * lm) + np.exp(yv * lm)
            elif name == "f_min":
                out = np.exp(np.minimum(xv, yv) * lm)
            else:
                out = np.exp(np.maximum(xv, yv) * lm)
        elif name == "h":
            xv, yv = _as_coords(x, y)
            lm = self._log_mu
            out = np.exp(xv * lm) + np.exp(yv * lm) - np.exp((xv + yv) * lm)
        elif name == "h_hat":
            out = np.exp(self.log_raw("f1_hat", x, y)) - np.exp(
                self.log_raw("f0_hat", x, y))
        elif name in ("f0_hat", "f1_hat", "f_hat", "improved_lower"):
            out = np.exp(self.log_raw(name, x, y))
        else:
            raise ValidationError(f"unknown bound name {name!r}")
        return float(out) if scalar else out

    def value(self, name: str, x, y):
        """q-bound reading: axis states give exactly 1 for members that
        bound the absorption probability pointwise."""
        out = self.raw(name, x, y)
        if name not in _AXIS_ONE:
            return out
        xv, yv = _as_coords(x, y)
        absorbed = np.minimum(xv, yv) == 0
        if np.isscalar(out):
            return 1.0 if bool(absorbed) else out
        return np.where(absorbed, 1.0, out)

    # -- grids ----------------------------------------------------------

    def raw_grid(self, name: str, extent: int) -> np.ndarray:
        xs = np.arange(extent + 1, dtype=np.int64)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return self.raw(name, X, Y)

    def grid(self, name: str, extent: int) -> np.ndarray:
        xs = np.arange(extent + 1, dtype=np.int64)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return self.value(name, X, Y)


def eval_bound(mu: float, name: str, x, y):
    """Module-level shorthand for ``BoundKit(mu).value(name, x, y)``."""
    return BoundKit(mu).value(name, x, y)


def closed_form_bracket(mu: float, x, y):
    """Closed-form enclosure of the absorption probability:
    max(f0, improved_lower) <= q <= h, with both ends 1 on the axes.

    Caveat: at the single state (1, 1) the lower member exceeds both h
    and 1 once mu > (sqrt(17) - 1) / 4 ~ 0.7808, so the returned pair is
    not an enclosure there (the h_hat bound remains valid if one is
    needed).  All other states are coherent for every mu in (0, 1).
    """
    kit = BoundKit(mu)
    lo = np.maximum(kit.value("f0", x, y), kit.value("improved_lower", x, y))
    hi = kit.value("h", x, y)
    if np.isscalar(hi):
        return float(lo), float(hi)
    return lo, hi


def homogeneous_exact_q(mu: float, x, y):
    """Absorption probability for any homogeneous kind: mu^x + mu^y -
    mu^(x+y).

    The pair-power form is harmonic for every homogeneous kernel, equals 1
    on the axes and vanishes at infinity, which pins it as the exact
    absorption probability there.
    """
    return BoundKit(mu).value("h", x, y)


def decay_rate_bounds(mu: float):
    """Two-sided bounds for the diagonal decay rate of q:
    max(mu^2, (mu/4)(1 + mu/(2(1+mu)))) <= rate <= mu."""
    if not (0.0 < mu < 1.0):
        raise ValidationError(f"decay rate bounds need mu in (0, 1), got {mu!r}")
    lower = max(mu * mu, 0.25 * mu * (1.0 + mu / (2.0 * (1.0 + mu))))
    return lower, mu


def conjectured_decay_rate(mu: float) -> float:
    """Conjectured exact diagonal decay rate: mu/2 below 1/2, mu^2 from
    1/2 on; continuous at the crossover."""
    if not (0.0 < mu < 1.0):
        raise ValidationError(f"conjectured rate needs mu in (0, 1), got {mu!r}")
    return mu / 2.0 if mu < 0.5 else mu * mu


# ---------------------------------------------------------------------
# identity and inequality verification
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class CheckRow:
    """One verified identity or inequality.

    stat is a max absolute residual (stat_kind 'max_residual', pass means
    stat <= tol) or a minimum slack (stat_kind 'min_slack', pass means
    stat >= -tol).
    """
    check: str
    kind: str
    mu: float
    extent: int
    stat_kind: str
    stat: float
    tol: float
    passed: bool


CHECK_HEADER = ("check", "kind", "mu", "extent", "stat_kind", "stat", "tol", "passed")


def write_check_report(rows: Iterable[CheckRow], target) -> None:
    write_csv(target, CHECK_HEADER,
              [(r.check, r.kind, r.mu, r.extent, r.stat_kind, r.stat, r.tol,
                r.passed) for r in rows])


def _residual_row(check, kind, mu, extent, residual, tol) -> CheckRow:
    stat = float(residual)
    return CheckRow(check, kind, mu, extent, "max_residual", stat, tol,
                    stat <= tol)


def _slack_row(check, kind, mu, extent, slack, tol) -> CheckRow:
    stat = float(slack)
    return CheckRow(check, kind, mu, extent, "min_slack", stat, tol,
                    stat >= -tol)


def _apply_kernel_raw(params: _model.ModelParams, kind: _model.ModelKind,
                      arr: np.ndarray) -> np.ndarray:
    """Kernel average of the four neighbors on {1..n}^2 of a raw lattice
    array indexed 0..n+1; axis rows of ``arr`` enter as they are."""
    n = arr.shape[0] - 2
    xs = np.arange(1, n + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r, u, l, d = _model.kernel_weights(params, kind, X, Y)
    return (r * arr[2:, 1:-1] + u * arr[1:-1, 2:]
            + l * arr[:-2, 1:-1] + d * arr[1:-1, :-2])


def random_symmetric_homogeneous(extent: int, seed: int = 1905) -> _model.ModelKind:
    """Homogeneous kind with a pseudo-random symmetric selection map,
    table-backed on {0..extent+2}^2.  Used to check that the pair-power
    form stays harmonic for arbitrary symmetric homogeneous splits."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    # cover the lazy symmetry spot-check range as well as the lattice
    n = max(extent + 3, 201)
    table = rng.uniform(0.05, 0.95, size=(n, n))
    table = 0.5 * (table + table.T)

    def phi(x: int, y: int) -> float:
        return float(table[x, y])

    return _model.homogeneous(phi, name="hom-random")


def verify_harmonic_identities(mu: float, extent: int,
                               kinds: Optional[Sequence[_model.ModelKind]] = None,
                               tol: float = 1e-12) -> List[CheckRow]:
    """Exact one-step identities, checked on the interior {1..extent}^2
    with bare axis values.

    Scope differs per identity: the total-power form f0 is harmonic for
    every kind (the splits cancel); the displacement identities for
    f_min, f_max, h, f1, f2 and the exact binomial growth identities hold
    for the hybrid kernel; the pair-power form h is harmonic for every
    homogeneous kind, including arbitrary symmetric splits.
    """
    params = _model.ModelParams(mu).require_supercritical()
    kit = BoundKit(mu)
    n = int(extent)
    if n < 2:
        raise ValidationError("extent must be >= 2")
    if kinds is None:
        kinds = (_model.hybrid(), _model.ibcos(), _model.buts(),
                 random_symmetric_homogeneous(n))

    raw = {name: kit.raw_grid(name, n + 1)
           for name in ("f0", "f1", "f_min", "f_max", "f2", "h",
                        "f0_hat", "f1_hat", "f_hat")}
    xs = np.arange(1, n + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    S = (X + Y).astype(np.float64)
    M = np.abs(X - Y).astype(np.float64)
    diag = X == Y
    gamma, lam, lam_bar = params.gamma, params.lam, params.lam_bar
    disp = gamma * M / (2.0 * S)
    inner = lambda name: raw[name][1: n + 1, 1: n + 1]

    rows: List[CheckRow] = []
    hybrid_kind = None
    for kind in kinds:
        Pf0 = _apply_kernel_raw(params, kind, raw["f0"])
        rows.append(_residual_row(
            "f0_harmonic", kind.name, mu, n,
            np.max(np.abs(Pf0 - inner("f0"))), tol))
        if kind.code == _model.HYBRID:
            hybrid_kind = kind
        if kind.phi_plus is kind.phi_minus or kind.code in (_model.IBCOS, _model.BUTS):
            Ph = _apply_kernel_raw(params, kind, raw["h"])
            rows.append(_residual_row(
                "pair_harmonic_homogeneous", kind.name, mu, n,
                np.max(np.abs(Ph - inner("h"))), tol))

    if hybrid_kind is not None:
        k = hybrid_kind
        apply = lambda name: _apply_kernel_raw(params, k, raw[name])

        expected = inner("f_min") * np.where(diag, 2.0 * lam_bar, 1.0 - disp)
        rows.append(_residual_row("min_power_step", k.name, mu, n,
                                  np.max(np.abs(apply("f_min") - expected)), tol))

        expected = inner("f_max") * np.where(diag, 2.0 * lam, 1.0 + disp)
        rows.append(_residual_row("max_power_step", k.name, mu, n,
                                  np.max(np.abs(apply("f_max") - expected)), tol))

        # the displacement term vanishes on the diagonal, so one formula
        # covers the whole interior for h, f1 and (off-diagonal) f2
        expected = inner("h") - disp * inner("f2")
        rows.append(_residual_row("pair_superharmonic_step", k.name, mu, n,
                                  np.max(np.abs(apply("h") - expected)), tol))

        expected = inner("f1") - disp * inner("f2")
        rows.append(_residual_row("pair_sum_step", k.name, mu, n,
                                  np.max(np.abs(apply("f1") - expected)), tol))

        expected = np.where(diag, gamma * inner("f1"),
                            inner("f2") - disp * inner("f1"))
        rows.append(_residual_row("power_gap_step", k.name, mu, n,
                                  np.max(np.abs(apply("f2") - expected)), tol))

        # exact increment of the binomial-damped pair sum
        Cinv = np.exp(-log_binomial(S, X))
        mu_x = np.exp(X * math.log(mu))
        mu_y = np.exp(Y * math.log(mu))
        inc = 0.5 * Cinv * (mu_x * (lam * (X + 1) + lam_bar * (Y + 1))
                            + mu_y * (lam_bar * (X + 1) + lam * (Y + 1))) / (S + 1.0)
        rows.append(_residual_row("pair_binom_step", k.name, mu, n,
                                  np.max(np.abs(apply("f1_hat")
                                                - (inner("f1_hat") + inc))), tol))

        growth0 = 2.0 * lam_bar + 0.5 * lam * (1.0 + 1.0 / (S + 1.0))
        rows.append(_residual_row("f0_binom_step", k.name, mu, n,
                                  np.max(np.abs(apply("f0_hat")
                                                - growth0 * inner("f0_hat"))), tol))

        # f_hat reaches (2 mu)^s on the axes, far above 1 when mu > 1/2,
        # so this residual is scale-normalized: |r| / (1 + |expected|)
        growth = lam_bar + lam * (1.0 + 1.0 / (S + 1.0))
        expected = growth * inner("f_hat")
        resid = np.abs(apply("f_hat") - expected) / (1.0 + np.abs(expected))
        rows.append(_residual_row("double_rate_binom_step", k.name, mu, n,
                                  np.max(resid), tol))

    return rows


def verify_subharmonic_inequalities(mu: float, extent: int,
                                    kind: Optional[_model.ModelKind] = None,
                                    slack_tol: float = 1e-14,
                                    eq_tol: float = 1e-12) -> List[CheckRow]:
    """One-step inequalities feeding the enclosure: h superharmonic, the
    binomial-damped family subharmonic with quantified growth, plus the
    exact diagonal growth rate of the damped pair sum."""
    params = _model.ModelParams(mu).require_supercritical()
    kit = BoundKit(mu)
    n = int(extent)
    if n < 2:
        raise ValidationError("extent must be >= 2")
    if kind is None:
        kind = _model.hybrid()

    raw = {name: kit.raw_grid(name, n + 1)
           for name in ("h", "h_hat", "f0_hat", "f1_hat", "f_hat")}
    xs = np.arange(1, n + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    S = (X + Y).astype(np.float64)
    diag = X == Y
    lam = params.lam
    inner = lambda name: raw[name][1: n + 1, 1: n + 1]
    apply = lambda name: _apply_kernel_raw(params, kind, raw[name])

    rows = [
        _slack_row("pair_superharmonic_slack", kind.name, mu, n,
                   np.min(inner("h") - apply("h")), slack_tol),
        _slack_row("pair_binom_diff_growth_slack", kind.name, mu, n,
                   np.min(apply("h_hat") - inner("h_hat")), slack_tol),
        _slack_row("f0_binom_growth_slack", kind.name, mu, n,
                   np.min(apply("f0_hat") - inner("f0_hat")), slack_tol),
        _slack_row("double_rate_binom_growth_slack", kind.name, mu, n,
                   np.min(apply("f_hat") - inner("f_hat")), slack_tol),
    ]

    growth = 0.5 * lam * (1.0 + 1.0 / (S + 1.0))
    slack = apply("f1_hat") - inner("f1_hat") - growth * inner("f1_hat")
    rows.append(_slack_row("pair_binom_growth_slack", kind.name, mu, n,
                           np.min(slack), slack_tol))

    diag_resid = (apply("f1_hat") - inner("f1_hat")
                  - 0.25 * (1.0 + 1.0 / (S + 1.0)) * inner("f1_hat"))
    rows.append(_residual_row("pair_binom_diag_equality", kind.name, mu, n,
                              np.max(np.abs(diag_resid[diag])), eq_tol))
    return rows
