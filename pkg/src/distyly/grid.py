"""Dense grid functions over the truncated quarter plane.

A :class:`GridFunction` stores values f(x, y) for 0 <= x, y <= extent in a
row-major float array indexed ``values[x, y]``.  The one-step transition
operator needs f one site beyond the stored square; the ``frontier_rule``
says how to produce those values, either by naming a closed-form bound
function (evaluated raw, axes included) or with an arbitrary callable
``(x_array, y_array) -> values``.

Solver iterates keep the convention f = 1 on the axes and f in [0, 1];
this is asserted where the solver constructs them, not here, because grid
functions are also used to hold bare comparison functions whose axis
values differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ValidationError

FrontierRule = Union[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass
class GridFunction:
    extent: int
    values: np.ndarray
    frontier_rule: Optional[FrontierRule] = None
    mu: Optional[float] = None

    def __post_init__(self):
        if self.extent < 1:
            raise ValidationError(f"extent must be >= 1, got {self.extent}")
        self.values = np.asarray(self.values, dtype=np.float64)
        want = (self.extent + 1, self.extent + 1)
        if self.values.shape != want:
            raise ValidationError(
                f"values shape {self.values.shape} does not match extent "
                f"{self.extent} (want {want})")
        if isinstance(self.frontier_rule, str) and self.mu is None:
            raise ValidationError(
                "a named frontier rule needs mu to evaluate")

    @classmethod
    def from_bound(cls, mu: float, name: str, extent: int) -> "GridFunction":
        """Grid holding the raw closed form of a named bound, with the
        same name as frontier rule."""
        from .bounds import BoundKit
        kit = BoundKit(mu)
        return cls(extent=extent, values=kit.raw_grid(name, extent),
                   frontier_rule=name, mu=mu)

    def value(self, x: int, y: int) -> float:
        if not (0 <= x <= self.extent and 0 <= y <= self.extent):
            raise ValidationError(
                f"({x}, {y}) outside stored extent {self.extent}")
        return float(self.values[x, y])

    def frontier(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Values one site past the stored square, from the frontier rule."""
        if self.frontier_rule is None:
            raise ValidationError(
                "grid function has no frontier rule; cannot supply values "
                f"beyond extent {self.extent}")
        if isinstance(self.frontier_rule, str):
            from .bounds import BoundKit
            return BoundKit(self.mu).raw(self.frontier_rule, xs, ys)
        out = np.asarray(self.frontier_rule(xs, ys), dtype=np.float64)
        if out.shape != np.broadcast(xs, ys).shape:
            raise ValidationError("frontier rule returned a bad shape")
        return out

    def extended(self) -> np.ndarray:
        """The values padded with one frontier row and column.

        Returns an (extent+2)^2 array whose [0:extent+1, 0:extent+1] block
        is ``values``; row/col extent+1 come from the frontier rule.
        """
        n = self.extent
        ext = np.empty((n + 2, n + 2), dtype=np.float64)
        ext[: n + 1, : n + 1] = self.values
        edge = np.arange(n + 2, dtype=np.int64)
        ext[n + 1, :] = self.frontier(np.full(n + 2, n + 1, dtype=np.int64), edge)
        ext[:, n + 1] = self.frontier(edge, np.full(n + 2, n + 1, dtype=np.int64))
        return ext

    def copy(self) -> "GridFunction":
        return GridFunction(self.extent, self.values.copy(),
                            self.frontier_rule, self.mu)
