"""Dirichlet bracket solver: oracles, containment, monotone diagnostics."""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose

from distyly import (
    BoundKit,
    ConsistencyError,
    ModelParams,
    ValidationError,
    buts,
    diagonal_decay,
    homogeneous_exact_q,
    hybrid,
    ibcos,
    kernel_weights,
    monotone_scan,
    solve_bracket,
    write_bracket_csv,
)


def test_two_by_two_hand_oracle():
    """extent 2 has a single interior unknown; both pinned systems solve
    by one substitution.  Upper: (1/3)(h(2,1)+h(1,2)) + (1/6)(1+1) = 3/4.
    Lower: same with h_hat rim values 0.625/3, giving 17/36."""
    sol = solve_bracket(ModelParams(0.5), hybrid(), extent=2, tol=1e-13)
    lo, hi = sol.q_enclosure(1, 1)
    assert hi == pytest.approx(0.75, abs=1e-12)
    assert lo == pytest.approx(17.0 / 36.0, abs=1e-12)


def _pinned_solution_dense(mu, kind, extent, rim_name):
    """Independent oracle: assemble the pinned linear system over the
    interior and solve it with numpy's dense solver."""
    p = ModelParams(mu)
    kit = BoundKit(mu)
    n = extent
    m = n - 1                      # interior side
    idx = lambda x, y: (x - 1) * m + (y - 1)
    A = np.eye(m * m)
    b = np.zeros(m * m)
    boundary = kit.raw_grid(rim_name, n)
    boundary[0, :] = 1.0
    boundary[:, 0] = 1.0
    for x in range(1, n):
        for y in range(1, n):
            r, u, l, d = kernel_weights(p, kind, x, y)
            k = idx(x, y)
            for (a, c), w in (((x + 1, y), float(r)), ((x, y + 1), float(u)),
                              ((x - 1, y), float(l)), ((x, y - 1), float(d))):
                if 1 <= a < n and 1 <= c < n:
                    A[k, idx(a, c)] -= w
                else:
                    b[k] += w * boundary[a, c]
    return np.linalg.solve(A, b).reshape(m, m)


@pytest.mark.parametrize("mu,maker", [(0.5, hybrid), (0.3, ibcos), (0.7, buts)])
def test_sweeps_match_dense_linear_solve(mu, maker):
    sol = solve_bracket(ModelParams(mu), maker(), extent=7, tol=1e-13)
    for name, gf in (("h", sol.upper), ("h_hat", sol.lower)):
        want = _pinned_solution_dense(mu, maker(), 7, name)
        assert_allclose(gf.values[1:7, 1:7], want, rtol=0.0, atol=1e-10)


@pytest.mark.parametrize("maker", [ibcos, buts])
@pytest.mark.parametrize("mu", [0.2, 0.5, 0.8])
def test_homogeneous_kinds_bracket_exact_q(maker, mu):
    """For homogeneous kinds the pair form is the exact absorption
    probability, so the solved bracket must contain it; the upper grid
    solves the same pinned system as h itself and lands on it."""
    sol = solve_bracket(ModelParams(mu), maker(), extent=30, tol=1e-12)
    for x in range(1, 30):
        for y in range(1, 30):
            q = homogeneous_exact_q(mu, x, y)
            lo, hi = sol.q_enclosure(x, y)
            assert lo - 1e-11 <= q <= hi + 1e-11
    assert sol.q_enclosure(4, 9)[1] == pytest.approx(
        homogeneous_exact_q(mu, 4, 9), abs=1e-9)


def test_enclosure_endpoints_and_guards():
    sol = solve_bracket(ModelParams(0.5), hybrid(), extent=6, tol=1e-12)
    assert sol.q_enclosure(0, 4) == (1.0, 1.0)
    assert sol.q_enclosure(3, 0) == (1.0, 1.0)
    kit = BoundKit(0.5)
    # rim states keep the pinned closed-form start values
    lo, hi = sol.q_enclosure(6, 2)
    assert hi == pytest.approx(kit.raw("h", 6, 2), abs=1e-15)
    assert lo == pytest.approx(kit.raw("h_hat", 6, 2), abs=1e-15)
    with pytest.raises(ValidationError):
        sol.q_enclosure(7, 1)
    with pytest.raises(ValidationError):
        sol.q_enclosure(-1, 2)
    assert sol.width(1, 1) == pytest.approx(
        sol.q_enclosure(1, 1)[1] - sol.q_enclosure(1, 1)[0], abs=0)


def test_loose_tolerance_still_brackets_tight_solution():
    """Iterates are valid bounds at every sweep, so stopping early only
    widens the enclosure, never breaks it."""
    p = ModelParams(0.5)
    loose = solve_bracket(p, hybrid(), extent=20, tol=1e-2)
    tight = solve_bracket(p, hybrid(), extent=20, tol=1e-13)
    for x, y in [(1, 1), (3, 7), (10, 10), (19, 1)]:
        assert loose.q_enclosure(x, y)[0] <= tight.q_enclosure(x, y)[0] + 1e-14
        assert tight.q_enclosure(x, y)[1] <= loose.q_enclosure(x, y)[1] + 1e-14


def test_width_shrinks_with_extent():
    p = ModelParams(0.5)
    w10 = solve_bracket(p, hybrid(), extent=10, tol=1e-12).width(1, 1)
    w40 = solve_bracket(p, hybrid(), extent=40, tol=1e-12).width(1, 1)
    assert w40 < w10 < 1.0


def test_monotone_scan_homogeneous_clean_everywhere():
    """For homogeneous kinds the pinned upper system is solved by h
    itself, so the full box scan is clean on both grids."""
    sol = solve_bracket(ModelParams(0.5), ibcos(), extent=40, tol=1e-12)
    for rep in monotone_scan(sol):
        assert rep.passed and rep.violations == 0
        assert rep.pairs_checked > 0


def test_monotone_scan_hybrid_rim_band_is_real_and_local():
    """The hybrid upper grid rises toward its h-pinned rim over an outer
    band; inside that band both grids are monotone.  Pin both facts."""
    sol = solve_bracket(ModelParams(0.5), hybrid(), extent=60, tol=1e-12)
    by_label = {r.grid_label: r for r in monotone_scan(sol)}
    assert by_label["lower"].passed                  # clean on the full box
    assert not by_label["upper"].passed              # rim band exists
    inner = {r.grid_label: r for r in monotone_scan(sol, within=20)}
    assert inner["lower"].passed and inner["upper"].passed
    with pytest.raises(ValidationError):
        monotone_scan(sol, within=60)


def test_diagonal_decay_rows():
    sol = solve_bracket(ModelParams(0.5), hybrid(), extent=25, tol=1e-12)
    rows = diagonal_decay(sol)
    assert [r[0] for r in rows] == list(range(1, 25))
    for _, rlo, rhi in rows:
        assert 0.0 < rlo <= rhi + 1e-15


def test_bracket_csv_single_interior_row():
    sol = solve_bracket(ModelParams(0.5), hybrid(), extent=2, tol=1e-13)
    buf = io.StringIO()
    write_bracket_csv(sol, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x,y,lower,upper"
    assert len(lines) == 2
    assert lines[1] == "1,1,4.72222222222e-01,7.50000000000e-01"


def test_sweep_budget_exhaustion_raises():
    with pytest.raises(ConsistencyError):
        solve_bracket(ModelParams(0.5), hybrid(), extent=60, tol=1e-14,
                      max_sweeps=1)


def test_argument_guards():
    p = ModelParams(0.5)
    with pytest.raises(ValidationError):
        solve_bracket(ModelParams(1.5), hybrid(), extent=5)
    with pytest.raises(ValidationError):
        solve_bracket(p, hybrid(), extent=1)
    with pytest.raises(ValidationError):
        solve_bracket(p, hybrid(), extent=5, tol=-1e-3)
