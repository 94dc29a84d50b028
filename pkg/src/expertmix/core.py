"""Outcome spaces, probability vectors, extended-real loss vectors, and the
shared geometry of prediction games.

A game is a finite outcome set together with a parametric decision domain
and a loss map; every decision is identified with its per-outcome loss
vector in ``[0, inf]^m``.  Extended-real conventions used throughout:
``exp(-eta * inf) == 0`` exactly, and expectations skip coordinates whose
probability is zero (so ``0 * inf == 0`` inside an expectation).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDistribution,
    InvalidLossVector,
)

#: Normalization tolerance for probability vectors.  Inputs further from
#: summing to one are rejected, never silently renormalized.
PROB_TOL = 1e-12

#: Default one-sided slack for superprediction membership tests.
MEMBERSHIP_TOL = 1e-9

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def as_probs(pi) -> np.ndarray:
    """Coerce a Distribution or array-like to a validated probability array."""
    if isinstance(pi, Distribution):
        return pi.probs
    arr = np.asarray(pi, dtype=float)
    _check_probs(arr)
    return arr


def as_losses(g) -> np.ndarray:
    """Coerce a LossVector or array-like to a validated loss array."""
    if isinstance(g, LossVector):
        return g.values
    arr = np.asarray(g, dtype=float)
    _check_losses(arr)
    return arr


def _check_probs(arr: np.ndarray) -> None:
    if arr.ndim != 1:
        raise InvalidDistribution(f"expected 1-d probability vector, got shape {arr.shape}")
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise InvalidDistribution(f"negative or NaN probabilities: {arr}")
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise InvalidDistribution(
            f"probabilities sum to {total!r}, outside tolerance {PROB_TOL}"
        )


def _check_losses(arr: np.ndarray) -> None:
    if np.any(np.isnan(arr)):
        raise InvalidLossVector(f"NaN loss entry in {arr}")
    if np.any(arr < 0):
        raise InvalidLossVector(f"negative loss entry in {arr}")


@dataclass(frozen=True, eq=False)
class OutcomeSpace:
    """A finite outcome set; ``labels`` are used only in logs."""

    size: int
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("outcome space needs at least two outcomes")
        labels = self.labels or tuple(str(i) for i in range(self.size))
        if len(labels) != self.size or len(set(labels)) != self.size:
            raise ValueError("labels must be distinct and match the size")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of(cls, m: int) -> "OutcomeSpace":
        return cls(size=m)


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector over a finite outcome space.

    Construction rejects vectors whose sum is off by more than
    ``PROB_TOL``; nothing is renormalized on the caller's behalf.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        _check_probs(arr)
        object.__setattr__(self, "probs", _readonly(arr))

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def is_interior(self, delta: float) -> bool:
        """True iff every coordinate is at least ``delta`` (> 0)."""
        if delta <= 0:
            raise ValueError("delta must be positive")
        return bool(np.all(self.probs >= delta))

    @classmethod
    def uniform(cls, m: int) -> "Distribution":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def point_mass(cls, m: int, omega: int) -> "Distribution":
        p = np.zeros(m)
        p[omega] = 1.0
        return cls(p)

    @classmethod
    def binary(cls, p: float) -> "Distribution":
        """Binary convention: coordinate 1 carries probability ``p``."""
        return cls(np.array([1.0 - p, p]))


@dataclass(frozen=True, eq=False)
class LossVector:
    """An extended-real vector in ``[0, inf]^m``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        _check_losses(arr)
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def dominates(self, other) -> bool:
        """Pointwise ``self <= other`` with ``inf <= inf`` true."""
        return bool(np.all(self.values <= as_losses(other)))


def dominated_by(candidate, g, tol: float = 0.0) -> bool:
    """Pointwise ``candidate <= g + tol`` (infinite coordinates of ``g``
    dominate everything)."""
    cand = as_losses(candidate)
    target = as_losses(g)
    finite = np.isfinite(target)
    return bool(np.all(cand[~finite] >= 0)) and bool(
        np.all(cand[finite] <= target[finite] + tol)
    )


def log_sum_exp(a: np.ndarray, axis: int | None = None):
    """Lean log-sum-exp for small arrays; all-(-inf) slices give -inf."""
    a = np.asarray(a, dtype=float)
    hi = np.max(a, axis=axis, keepdims=True)
    safe_hi = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(np.sum(np.exp(a - safe_hi), axis=axis)) + np.squeeze(safe_hi, axis=axis)
    out = np.where(np.isneginf(np.squeeze(hi, axis=axis)), -np.inf, out)
    return out if axis is not None else float(out)


def expected_loss(pi, g) -> float:
    """Expectation of ``g`` under ``pi``, skipping zero-probability
    coordinates; ``inf`` iff some positive-probability coordinate is
    infinite."""
    p = as_probs(pi)
    v = as_losses(g)
    if p.shape != v.shape:
        raise DimensionMismatch(f"shapes {p.shape} vs {v.shape}")
    live = p > 0
    if np.any(np.isinf(v[live])):
        return float("inf")
    return float(np.dot(p[live], v[live]))


def exp_mix(points, weights, eta: float) -> np.ndarray:
    """Exponential mixture ``-(1/eta) * ln(sum_i w_i exp(-eta g_i))``.

    A coordinate is ``inf`` exactly when every positively-weighted point is
    infinite there.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    pts = [as_losses(g) for g in points]
    if not pts:
        raise ValueError("empty point list")
    G = np.stack(pts)
    w = weights.probs if isinstance(weights, Distribution) else np.asarray(weights, dtype=float)
    if w.shape != (G.shape[0],):
        raise DimensionMismatch(f"{G.shape[0]} points but weight shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
        raise InvalidDistribution("weights must be a probability vector")
    E = np.where(np.isinf(G), 0.0, np.exp(-eta * np.where(np.isinf(G), 0.0, G)))
    s = w @ E
    out = np.full(G.shape[1], np.inf)
    pos = s > 0
    out[pos] = -np.log(s[pos]) / eta
    # mixtures of nonnegative vectors stay nonnegative up to rounding
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# Games


@dataclass(frozen=True, eq=False)
class Game:
    """A prediction game over a finite outcome space.

    ``loss`` maps a decision (shape ``(decision_dim,)``, or a batch
    ``(n, decision_dim)``) to per-outcome losses.  ``substitution`` maps any
    superprediction to a decision whose loss vector minorizes it.  Optional
    closed forms (membership gap, entropy, proper loss, hull machinery)
    override the generic numeric search where a game supplies them.
    """

    name: str
    outcomes: OutcomeSpace
    decision_kind: str  # "box" ([0,1]^d) or "simplex" (P(Omega))
    decision_dim: int
    loss: Callable[[np.ndarray], np.ndarray]
    substitution: Callable[[np.ndarray], np.ndarray]
    eta_mixable_range: tuple[float, float] | None = None
    proper_loss: Callable[[np.ndarray], np.ndarray] | None = None
    membership_gap: Callable[[np.ndarray], float] | None = None
    hull_membership_gap: Callable[[np.ndarray, float], float] | None = None
    hull_proper_loss: Callable[[np.ndarray, float], np.ndarray] | None = None
    boundary_proper_loss: Callable[[np.ndarray, float, float], np.ndarray] | None = None
    entropy: Callable[[np.ndarray], float] | None = None
    feasible_interval: Callable[[np.ndarray], tuple[float, float]] | None = None

    @property
    def m(self) -> int:
        return self.outcomes.size

    def mixable_at(self, eta: float) -> bool:
        """True iff mixability is asserted for this eta (False when the
        range is unknown or empty)."""
        if self.eta_mixable_range is None:
            return False
        lo, hi = self.eta_mixable_range
        return lo < eta <= hi

    def loss_vector(self, decision) -> np.ndarray:
        dec = np.atleast_1d(np.asarray(decision, dtype=float))
        return np.asarray(self.loss(dec), dtype=float)


def simplex_grid(m: int, n: int) -> np.ndarray:
    """All points ``k/n`` with ``k`` a composition of ``n`` into ``m``
    nonnegative parts, in lexicographic order of ``k`` (first coordinate
    slowest).  This ordering is part of the oracle contract."""
    if m == 2:
        k = np.arange(n + 1)
        return np.column_stack([k, n - k]) / n
    rows = []
    for head in itertools.product(range(n + 1), repeat=m - 1):
        rest = n - sum(head)
        if rest >= 0:
            rows.append(head + (rest,))
    return np.asarray(rows, dtype=float) / n


def decision_grid(game: Game, per_dim: int = 1024) -> np.ndarray:
    """Dense grid over the game's decision domain, shape (n, decision_dim)."""
    if game.decision_kind == "box":
        axes = [np.linspace(0.0, 1.0, per_dim + 1)] * game.decision_dim
        if game.decision_dim == 1:
            return axes[0][:, None]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([ax.ravel() for ax in mesh])
    if game.decision_kind == "simplex":
        d = game.decision_dim
        # cap the subdivision count so the grid stays enumerable for d >= 3
        n = per_dim if d <= 2 else max(32, int(round(2.0e5 ** (1.0 / (d - 1)))))
        return simplex_grid(d, n)
    raise ValueError(f"unknown decision kind {game.decision_kind!r}")


def _batch_losses(game: Game, decisions: np.ndarray) -> np.ndarray:
    out = game.loss(decisions)
    arr = np.asarray(out, dtype=float)
    if arr.shape == (decisions.shape[0], game.m):
        return arr
    # scalar-only loss callable: fall back to a row loop
    return np.stack([np.asarray(game.loss(d), dtype=float) for d in decisions])


def golden_min(f: Callable[[float], float], lo: float, hi: float,
               tol: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section minimizer on [lo, hi]; returns (x, f(x))."""
    a, b = float(lo), float(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _grid_gap(game: Game, g: np.ndarray, per_dim: int) -> tuple[np.ndarray, float]:
    grid = decision_grid(game, per_dim)
    L = _batch_losses(game, grid)
    finite = np.isfinite(g)
    if not np.any(finite):
        return grid[0], -np.inf
    excess = L[:, finite] - g[finite]
    worst = np.where(np.isfinite(L[:, finite]), excess, np.inf).max(axis=1)
    i = int(np.argmin(worst))
    return grid[i], float(worst[i])


def _refine_gap(game: Game, g: np.ndarray, dec: np.ndarray, step: float) -> tuple[np.ndarray, float]:
    finite = np.isfinite(g)

    def gap_at(d: np.ndarray) -> float:
        lv = game.loss_vector(d)
        ex = lv[finite] - g[finite]
        return float(np.max(np.where(np.isfinite(lv[finite]), ex, np.inf))) if finite.any() else -np.inf

    best = dec.copy()
    best_val = gap_at(best)
    for _ in range(3):
        if game.decision_kind == "box":
            for j in range(len(best)):
                lo = max(0.0, best[j] - step)
                hi = min(1.0, best[j] + step)

                def f(x, j=j):
                    cand = best.copy()
                    cand[j] = x
                    return gap_at(cand)

                x, val = golden_min(f, lo, hi)
                if val < best_val:
                    best_val = val
                    best[j] = x
        else:
            d = len(best)
            for i, j in itertools.combinations(range(d), 2):
                lo = -min(best[i], step)
                hi = min(best[j], step)
                if hi <= lo:
                    continue

                def f(t, i=i, j=j):
                    cand = best.copy()
                    cand[i] += t
                    cand[j] -= t
                    return gap_at(cand)

                t, val = golden_min(f, lo, hi)
                if val < best_val:
                    best_val = val
                    best[i] += t
                    best[j] -= t
        step /= 16.0
    return best, best_val


def domination_gap(game: Game, g, per_dim: int = 1024) -> float:
    """``min over decisions of max_omega (loss - g)``; <= 0 means ``g`` is a
    superprediction.  Uses the game's closed form when provided, otherwise a
    dense grid plus golden-section refinement."""
    arr = as_losses(g)
    if arr.shape[0] != game.m:
        raise DimensionMismatch(f"loss vector of size {arr.shape[0]} for {game.m} outcomes")
    if game.membership_gap is not None:
        return float(game.membership_gap(arr))
    if not np.any(np.isfinite(arr)):
        return -np.inf
    dec, _ = _grid_gap(game, arr, per_dim)
    step = 1.0 / (per_dim if game.decision_kind == "box" else 32)
    _, val = _refine_gap(game, arr, dec, max(step, 1e-3))
    return val


def is_superprediction(game: Game, g, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff some decision's loss vector minorizes ``g`` up to a
    one-sided slack of ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return domination_gap(game, g) <= tol


def hull_membership_gap(game: Game, g, eta: float) -> float:
    """Membership gap for the eta-exponential hull of the superprediction
    set.  Equals the base gap whenever mixability is asserted at ``eta``;
    otherwise requires a game-supplied closed form."""
    arr = as_losses(g)
    if game.mixable_at(eta):
        return domination_gap(game, arr)
    if game.hull_membership_gap is not None:
        return float(game.hull_membership_gap(arr, eta))
    raise ValueError(
        f"game {game.name!r} has no hull membership rule at eta={eta} "
        "(not asserted mixable and no closed form supplied)"
    )
