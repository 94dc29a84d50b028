"""Brute-force oracle for the forecast solvers: exhaustive dense-grid
minimization of ``max_w q(pi, w)`` over the simplex.

Used by tests to validate solver outputs; deliberately independent of the
solver search paths.  Ties resolve to the first minimizer in the
barycentric enumeration order of :func:`expertmix.core.simplex_grid`
(lexicographic in the composition, first coordinate slowest).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import simplex_grid


def oracle_dfa_solve(qfun: Callable[[np.ndarray], np.ndarray], C: float,
                     m: int, grid: int = 100) -> np.ndarray:
    """First grid point minimizing ``max_w q(pi, w)`` over all barycentric
    grid points with ``grid`` subdivisions.  ``C`` is accepted for
    interface parity with the solvers; the minimizer does not depend on it.
    """
    if grid < 10:
        raise ValueError("grid must be at least 10")
    del C
    points = simplex_grid(m, grid)
    vals = np.empty(len(points))
    for i, pi in enumerate(points):
        q = np.asarray(qfun(pi), dtype=float)
        vals[i] = np.max(np.where(np.isnan(q), np.inf, q))
    return points[int(np.argmin(vals))]
