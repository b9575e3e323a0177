"""Certified enclosure of the absorption probability on a truncated box.

The absorption probability q solves q = Pq on the interior with q = 1 on
the axes and q -> 0 at infinity.  On the box {0..extent}^2 we iterate the
kernel with monotone Gauss-Seidel sweeps over the interior
{1..extent-1}^2, keeping the axes pinned at 1 and the rim (x = extent or
y = extent, axes excluded) pinned at a closed-form bound:

    upper iterate: starts at the superharmonic pair form h, decreases;
    lower iterate: starts at its binomial-damped subharmonic counterpart
                   h_hat, increases.

Each in-place update preserves super/subharmonicity, so the iterates stay
bounds for q at every sweep and converge monotonically; the final grids
are a certified enclosure on the box.  Every sweep asserts the monotone
direction with 10 machine-epsilon slack; a violation means the start
function was not super/subharmonic under the requested kernel (possible
for custom kinds) or floating-point trouble, and raises a consistency
error rather than returning an uncertified grid.

Sweeps are lexicographic in (x, y).  The bracket width at a point bounds
the truncation error introduced by pinning the rim; it shrinks as the
extent grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numba import njit

from .bounds import BoundKit
from .errors import ConsistencyError, ValidationError
from .grid import GridFunction
from .model import ModelKind, ModelParams, kernel_weights
from .tableio import write_csv

# absolute slack allowed before a wrong-direction update is an error
_MONO_SLACK = 10.0 * np.finfo(np.float64).eps


@njit(cache=True, nogil=True)
def _gs_sweep(v, R, U, L, D, sign):
    """One lexicographic Gauss-Seidel sweep over {1..n-1}^2 in place.

    sign is +1.0 for an increasing iterate, -1.0 for decreasing.  Returns
    (sup change, worst wrong-direction excursion).
    """
    n = v.shape[0] - 1
    delta = 0.0
    worst = 0.0
    for x in range(1, n):
        for y in range(1, n):
            new = (R[x, y] * v[x + 1, y] + U[x, y] * v[x, y + 1]
                   + L[x, y] * v[x - 1, y] + D[x, y] * v[x, y - 1])
            ch = new - v[x, y]
            viol = -sign * ch
            if viol > worst:
                worst = viol
            if abs(ch) > delta:
                delta = abs(ch)
            v[x, y] = new
    return delta, worst


@dataclass
class BracketSolution:
    """Converged two-sided grids plus convergence diagnostics.

    residual_lower / residual_upper are the final sup-norm Jacobi
    residuals ||Pv - v|| over the update set, reported as an independent
    quality measure (the stopping rule is the per-sweep change).
    """
    params: ModelParams
    kind_name: str
    extent: int
    tol: float
    lower: GridFunction
    upper: GridFunction
    sweeps_lower: int
    sweeps_upper: int
    residual_lower: float
    residual_upper: float

    def q_enclosure(self, x: int, y: int) -> Tuple[float, float]:
        """Certified (lower, upper) for q at a stored state; absorbed
        states give (1, 1).  Rim states return the pinned closed-form
        bounds (valid, just not tightened by iteration)."""
        if x < 0 or y < 0:
            raise ValidationError(f"({x}, {y}) is not a state")
        if min(x, y) == 0:
            return 1.0, 1.0
        if x > self.extent or y > self.extent:
            raise ValidationError(
                f"({x}, {y}) outside solved extent {self.extent}")
        return float(self.lower.values[x, y]), float(self.upper.values[x, y])

    def width(self, x: int, y: int) -> float:
        lo, hi = self.q_enclosure(x, y)
        return hi - lo


def _jacobi_residual(v: np.ndarray, R, U, L, D) -> float:
    pv = (R * v[2:, 1:-1] + U * v[1:-1, 2:]
          + L * v[:-2, 1:-1] + D * v[1:-1, :-2])
    return float(np.max(np.abs(pv - v[1:-1, 1:-1])))


def _converge(v: np.ndarray, R, U, L, D, sign: float, tol: float,
              max_sweeps: int, label: str) -> int:
    sweeps = 0
    while sweeps < max_sweeps:
        delta, worst = _gs_sweep(v, R, U, L, D, sign)
        sweeps += 1
        if worst > _MONO_SLACK:
            raise ConsistencyError(
                f"{label} iterate moved {worst:.3e} against its monotone "
                "direction: start function is not a valid "
                f"{'sub' if sign > 0 else 'super'}solution for this kernel")
        if delta <= tol:
            return sweeps
    raise ConsistencyError(
        f"{label} iterate did not reach per-sweep change {tol} within "
        f"{max_sweeps} sweeps")


def solve_bracket(params: ModelParams, kind: ModelKind, extent: int,
                  tol: float = 1e-10, max_sweeps: int = 200_000
                  ) -> BracketSolution:
    """Monotone two-sided solve on {0..extent}^2.  extent >= 2; tol is the
    sup-norm per-sweep change at which a sweep loop stops."""
    params.require_supercritical()
    if extent < 2:
        raise ValidationError(f"extent must be >= 2, got {extent}")
    if not (tol > 0.0 and np.isfinite(tol)):
        raise ValidationError(f"tol must be positive, got {tol!r}")
    if max_sweeps < 1:
        raise ValidationError("max_sweeps must be >= 1")

    kit = BoundKit(params.mu)
    n = extent
    xs = np.arange(1, n, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r, u, l, d = kernel_weights(params, kind, X, Y)
    # full-lattice coefficient arrays so the kernel indexes by (x, y)
    R = np.zeros((n + 1, n + 1)); R[1:n, 1:n] = r
    U = np.zeros((n + 1, n + 1)); U[1:n, 1:n] = u
    L = np.zeros((n + 1, n + 1)); L[1:n, 1:n] = l
    D = np.zeros((n + 1, n + 1)); D[1:n, 1:n] = d

    grids = {}
    sweeps = {}
    residual = {}
    for label, name, sign in (("upper", "h", -1.0), ("lower", "h_hat", 1.0)):
        v = kit.raw_grid(name, n)
        v[0, :] = 1.0   # exact axis values, independent of rounding above
        v[:, 0] = 1.0
        sweeps[label] = _converge(v, R, U, L, D, sign, tol, max_sweeps, label)
        residual[label] = _jacobi_residual(v, r, u, l, d)
        grids[label] = GridFunction(n, v, name, params.mu)

    gap = grids["lower"].values - grids["upper"].values
    if float(np.max(gap)) > _MONO_SLACK:
        raise ConsistencyError(
            f"bracket crossed: lower exceeds upper by {np.max(gap):.3e}")

    return BracketSolution(
        params=params, kind_name=kind.name, extent=n, tol=tol,
        lower=grids["lower"], upper=grids["upper"],
        sweeps_lower=sweeps["lower"], sweeps_upper=sweeps["upper"],
        residual_lower=residual["lower"], residual_upper=residual["upper"])


def diagonal_decay(sol: BracketSolution) -> List[Tuple[int, float, float]]:
    """Per-x decay roots along the diagonal: (x, lower^(1/x), upper^(1/x))
    for 1 <= x <= extent-1."""
    rows = []
    for x in range(1, sol.extent):
        lo, hi = sol.q_enclosure(x, x)
        rows.append((x, lo ** (1.0 / x), hi ** (1.0 / x)))
    return rows


@dataclass(frozen=True)
class MonotoneReport:
    grid_label: str
    pairs_checked: int
    violations: int
    worst: float   # most positive neighbor increase found (<= 0 when clean)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def monotone_scan(sol: BracketSolution,
                  within: Optional[int] = None) -> List[MonotoneReport]:
    """Check q-monotonicity (nonincreasing in each coordinate) of both
    grids over pairs inside {0..within}^2; within defaults to extent-1,
    the stored box minus the pinned rim.

    The hybrid upper grid always fails a full scan in a band hugging the
    rim: the rim is pinned to h, which is strictly superharmonic for the
    hybrid kernel, so the converged interior falls below the pinned
    values and climbs back toward them over the last few dozen sites.
    That band is a truncation artifact, not a kernel defect; for the
    homogeneous kinds h solves the pinned system exactly and the full
    scan is clean.  Callers certifying a reporting region pass ``within``
    to scan that region.  The lower grid is clean on the full box (its
    rim pin sits below the interior solution and pulls the same way as
    the decay of q).
    """
    if within is None:
        within = sol.extent - 1
    if not (1 <= within <= sol.extent - 1):
        raise ValidationError(
            f"scan region bound {within} outside 1..{sol.extent - 1}")
    out = []
    for label, gf in (("lower", sol.lower), ("upper", sol.upper)):
        v = gf.values[: within + 1, : within + 1]
        dx = v[1:, :] - v[:-1, :]   # increase when moving right
        dy = v[:, 1:] - v[:, :-1]
        worst = max(float(np.max(dx)), float(np.max(dy)))
        viol = int(np.sum(dx > _MONO_SLACK) + np.sum(dy > _MONO_SLACK))
        out.append(MonotoneReport(label, dx.size + dy.size, viol, worst))
    return out


BRACKET_HEADER = ("x", "y", "lower", "upper")


def write_bracket_csv(sol: BracketSolution, target) -> None:
    """Interior rows (x, y, lower, upper), lexicographic, floats with 12
    significant digits."""
    rows = []
    for x in range(1, sol.extent):
        for y in range(1, sol.extent):
            rows.append((x, y, float(sol.lower.values[x, y]),
                         float(sol.upper.values[x, y])))
    write_csv(target, BRACKET_HEADER, rows)
