"""Jump chain of a two-type population on the quarter plane.

States are pairs (x, y) of nonnegative integers counting the two types.
The chain is absorbed on the axes: once either type dies out the state
stays put forever.  From an interior state one of four moves happens,

    right (x+1, y)   with probability  lam_bar * phi_plus(x, y)
    up    (x, y+1)   with probability  lam_bar * (1 - phi_plus(x, y))
    left  (x-1, y)   with probability  lam     * phi_minus(x, y)
    down  (x, y-1)   with probability  lam     * (1 - phi_minus(x, y))

where lam = mu / (1 + mu) is the per-jump death probability, mu the
death-to-birth rate ratio, and the selection maps phi_plus / phi_minus
route births and deaths to the two coordinates.  A :class:`ModelKind`
fixes the pair of maps; both must treat the types evenhandedly (see
:meth:`ModelKind.ensure_symmetry` for the two accepted forms).

Total population size performs a lazy biased walk: up with probability
lam_bar, down with lam, so survival is possible exactly when mu < 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple, Union

import numpy as np

from .errors import InvalidModelError, ValidationError
from .grid import GridFunction

State = Tuple[int, int]

# Largest coordinate accepted at the public entry points.  Keeps x + y
# exactly representable in float64 with headroom for one more birth.
COORD_CAP = 2**32 - 2

# Kernel codes for the compiled fast paths.  CUSTOM falls back to the
# generic vectorized route.
HYBRID, IBCOS, BUTS, CUSTOM = 0, 1, 2, -1


@dataclass(frozen=True)
class ModelParams:
    """Rate ratio mu > 0 and the derived per-jump quantities."""

    mu: float

    def __post_init__(self):
        mu = self.mu
        if not (isinstance(mu, (int, float)) and np.isfinite(mu) and mu > 0):
            raise ValidationError(f"mu must be a finite positive number, got {mu!r}")
        object.__setattr__(self, "mu", float(mu))

    @property
    def lam(self) -> float:
        """Per-jump probability that the move is a death."""
        return self.mu / (1.0 + self.mu)

    @property
    def lam_bar(self) -> float:
        return 1.0 / (1.0 + self.mu)

    @property
    def gamma(self) -> float:
        """Net upward drift of the total size, (1 - mu) / (1 + mu)."""
        return (1.0 - self.mu) / (1.0 + self.mu)

    @property
    def supercritical(self) -> bool:
        """True when survival has positive probability (mu < 1)."""
        return self.mu < 1.0

    def require_supercritical(self) -> "ModelParams":
        if not self.supercritical:
            raise ValidationError(
                f"mu = {self.mu} is not in (0, 1): absorption is certain and "
                "the requested quantity degenerates to 1")
        return self


def _lift(phi: Callable, label: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Wrap a scalar selection map so it accepts integer arrays."""
    vec = np.vectorize(lambda a, b: float(phi(int(a), int(b))), otypes=[np.float64])

    def call(x, y):
        out = vec(x, y)
        bad = (out <= 0.0) | (out >= 1.0) | ~np.isfinite(out)
        if np.any(bad):
            i = np.argmax(np.atleast_1d(bad))
            xi = np.atleast_1d(np.broadcast_to(x, np.shape(out)).ravel())[i]
            yi = np.atleast_1d(np.broadcast_to(y, np.shape(out)).ravel())[i]
            raise InvalidModelError(
                f"{label} returned a value outside (0, 1) at state "
                f"({int(xi)}, {int(yi)})")
        return out

    return call


def _half(x, y):
    return np.broadcast_to(np.float64(0.5), np.broadcast(x, y).shape)


def _share(x, y):
    # first-coordinate share of the total, x / (x + y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return x / (x + y)


@dataclass(frozen=True)
class ModelKind:
    """A pair of symmetric selection maps plus a code for fast paths.

    Use the factory functions :func:`hybrid`, :func:`ibcos`, :func:`buts`,
    :func:`homogeneous`, :func:`hybrid_general` rather than constructing
    directly.
    """

    name: str
    code: int
    phi_plus: Callable[[np.ndarray, np.ndarray], np.ndarray]
    phi_minus: Callable[[np.ndarray, np.ndarray], np.ndarray]
    _symmetry_checked: bool = field(default=False, compare=False, repr=False)

    def ensure_symmetry(self) -> None:
        """Spot-check that each map treats the two types evenhandedly.

        On a fixed pseudo-random sample a map must satisfy either
        phi(x, y) == phi(y, x) (a function of the unordered pair) or
        phi(x, y) == 1 - phi(y, x) (a first-coordinate share such as
        x / (x + y); this is the form under which the kernel commutes
        with the coordinate swap).  Runs once per instance, lazily at
        first kernel evaluation; a full check is impossible (the domain
        is infinite) and per-call checks would double evaluation cost.
        """
        if self._symmetry_checked or self.code != CUSTOM:
            return
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(1905)))
        xs = rng.integers(1, 200, size=16)
        ys = rng.integers(1, 200, size=16)
        for lbl, phi in (("phi_plus", self.phi_plus), ("phi_minus", self.phi_minus)):
            a = phi(xs, ys)
            b = phi(ys, xs)
            equal = np.allclose(a, b, rtol=0.0, atol=1e-12)
            complement = np.allclose(a, 1.0 - b, rtol=0.0, atol=1e-12)
            if not (equal or complement):
                raise InvalidModelError(
                    f"{lbl} of kind {self.name!r} treats the types unevenly: "
                    "need phi(x, y) == phi(y, x) or phi(x, y) == "
                    "1 - phi(y, x) on a spot-check sample")
        object.__setattr__(self, "_symmetry_checked", True)


def hybrid() -> ModelKind:
    """Births split evenly; deaths hit a type with probability
    proportional to its size."""
    return ModelKind("hybrid", HYBRID, _half, _share)


def ibcos() -> ModelKind:
    """Births and deaths both proportional to type size."""
    return ModelKind("ibcos", IBCOS, _share, _share)


def buts() -> ModelKind:
    """Births and deaths both split evenly regardless of composition."""
    return ModelKind("buts", BUTS, _half, _half)


def homogeneous(phi: Callable[[int, int], float], name: str = "homogeneous") -> ModelKind:
    """One symmetric map used for both the birth and the death split."""
    lifted = _lift(phi, f"{name}.phi")
    return ModelKind(name, CUSTOM, lifted, lifted)


def hybrid_general(phi_plus: Callable[[int, int], float],
                   phi_minus: Callable[[int, int], float],
                   name: str = "hybrid_general") -> ModelKind:
    """Independent symmetric maps for the birth and death splits."""
    return ModelKind(name, CUSTOM,
                     _lift(phi_plus, f"{name}.phi_plus"),
                     _lift(phi_minus, f"{name}.phi_minus"))


NAMED_KINDS = {"hybrid": hybrid, "ibcos": ibcos, "buts": buts}


def _check_state(x: int, y: int) -> State:
    for v in (x, y):
        if not isinstance(v, (int, np.integer)):
            raise ValidationError(f"coordinates must be integers, got {v!r}")
        if v < 0 or v > COORD_CAP:
            raise ValidationError(
                f"coordinate {v} outside [0, {COORD_CAP}]")
    return int(x), int(y)


def is_absorbed(state: State) -> bool:
    return min(state) == 0


def kernel_weights(params: ModelParams, kind: ModelKind, x, y):
    """Move probabilities (right, up, left, down) at interior states.

    x, y may be scalars or integer arrays with every entry >= 1.
    """
    kind.ensure_symmetry()
    pp = np.asarray(kind.phi_plus(x, y), dtype=np.float64)
    pm = np.asarray(kind.phi_minus(x, y), dtype=np.float64)
    for lbl, arr in (("phi_plus", pp), ("phi_minus", pm)):
        if np.any((arr <= 0.0) | (arr >= 1.0) | ~np.isfinite(arr)):
            raise InvalidModelError(
                f"{lbl} of kind {kind.name!r} left (0, 1) on the requested states")
    right = params.lam_bar * pp
    up = params.lam_bar - right
    left = params.lam * pm
    down = params.lam - left
    return right, up, left, down


def transition(params: ModelParams, kind: ModelKind, state: State
               ) -> Dict[State, float]:
    """One-step distribution from ``state`` as a dict of successor -> mass."""
    x, y = _check_state(*state)
    if min(x, y) == 0:
        return {(x, y): 1.0}
    r, u, l, d = kernel_weights(params, kind, x, y)
    return {
        (x + 1, y): float(r),
        (x, y + 1): float(u),
        (x - 1, y): float(l),
        (x, y - 1): float(d),
    }


def step(params: ModelParams, kind: ModelKind, state: State, u: float) -> State:
    """Advance one step by inverse CDF over the fixed successor order
    right, up, left, down.  ``u`` must lie in [0, 1)."""
    if not (0.0 <= u < 1.0):
        raise ValidationError(f"uniform draw must be in [0, 1), got {u}")
    x, y = _check_state(*state)
    if min(x, y) == 0:
        return (x, y)
    r, up_, l, _ = kernel_weights(params, kind, x, y)
    c1 = float(r)
    c2 = c1 + float(up_)
    c3 = c2 + float(l)
    if u < c1:
        return (x + 1, y)
    if u < c2:
        return (x, y + 1)
    if u < c3:
        return (x - 1, y)
    return (x, y - 1)


def apply_P(params: ModelParams, kind: ModelKind, f: GridFunction) -> GridFunction:
    """One application of the absorbing transition operator to a grid.

    Interior points 1 <= x, y <= extent get the kernel average of the four
    neighbors, with values one past the square supplied by the grid's
    frontier rule; axis points keep their stored values (the chain is
    absorbed there).  Raises a validation error when the frontier is
    needed but no rule was given.
    """
    n = f.extent
    ext = f.extended()
    xs = np.arange(1, n + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r, u, l, d = kernel_weights(params, kind, X, Y)
    out = f.values.copy()
    out[1:, 1:] = (r * ext[2: n + 2, 1: n + 1]
                   + u * ext[1: n + 1, 2: n + 2]
                   + l * ext[0: n, 1: n + 1]
                   + d * ext[1: n + 1, 0: n])
    return GridFunction(n, out, f.frontier_rule, f.mu)
