"""Exponential mixing of expert advice with posterior weights, substitution
into a legal decision, and the two geometric maps used by the constructive
theory: the radial boundary projection and the coordinatewise retraction
onto minimal elements.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    MEMBERSHIP_TOL,
    Game,
    as_losses,
    dominated_by,
    domination_gap,
    hull_membership_gap,
    log_sum_exp,
)
from .errors import DimensionMismatch, NotRealizable, SubstitutionFailure


def _advice_matrix(advice, m: int) -> np.ndarray:
    if isinstance(advice, np.ndarray) and advice.ndim == 2 and \
            advice.dtype == np.float64:
        A = advice
    else:
        rows = [as_losses(g) for g in advice]
        A = np.stack(rows) if rows else np.empty((0, m))
    if A.shape[1] != m:
        raise DimensionMismatch(f"advice over {A.shape[1]} outcomes, game has {m}")
    return A


@dataclass(frozen=True, eq=False)
class AAState:
    """Posterior weights and cumulative losses for one mixing session.

    Weights are kept unnormalized in log space: ``log_weights[t] =
    ln P0(t) - eta * L_t`` where ``L_t`` is expert ``t``'s cumulative loss,
    so experts with infinite loss carry weight exactly zero.
    """

    game: Game
    c: float
    eta: float
    prior: np.ndarray
    log_weights: np.ndarray
    step_count: int = 0
    cumulative_loss: float = 0.0
    per_expert_loss: np.ndarray | None = None

    def __post_init__(self):
        if self.per_expert_loss is None:
            object.__setattr__(self, "per_expert_loss", np.zeros(len(self.prior)))

    @property
    def n_experts(self) -> int:
        return len(self.prior)


def uniform_prior(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def aa_start(game: Game, *, eta: float, c: float = 1.0,
             prior: Sequence[float] | np.ndarray | None = None,
             n_experts: int | None = None) -> AAState:
    if prior is None:
        if n_experts is None:
            raise ValueError("need prior or n_experts")
        prior = uniform_prior(n_experts)
    prior = np.asarray(prior, dtype=float)
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior must be a probability vector")
    if c < 1.0 or eta <= 0.0:
        raise ValueError("need c >= 1 and eta > 0")
    with np.errstate(divide="ignore"):
        lw = np.where(prior > 0, np.log(np.where(prior > 0, prior, 1.0)), -np.inf)
    return AAState(game=game, c=c, eta=eta, prior=prior, log_weights=lw)


def aa_mix(state: AAState, advice) -> np.ndarray:
    """Mixed superprediction
    ``g(w) = -(c/eta) ln sum_t wbar_t exp(-eta * advice_t(w))``."""
    A = _advice_matrix(advice, state.game.m)
    if A.shape[0] != state.n_experts:
        raise DimensionMismatch(
            f"{A.shape[0]} advice rows for {state.n_experts} experts"
        )
    total = log_sum_exp(state.log_weights)
    if np.isneginf(total):
        raise ZeroDivisionError("all experts carry zero weight (infinite loss)")
    lwn = state.log_weights - total
    with np.errstate(invalid="ignore"):
        shifted = np.where(np.isinf(A), -np.inf, lwn[:, None] - state.eta * np.where(np.isinf(A), 0.0, A))
    logs = log_sum_exp(shifted, axis=0)
    g = np.where(np.isneginf(logs), np.inf, -(state.c / state.eta) * logs)
    return np.maximum(g, 0.0)


def aa_propose(state: AAState, advice,
               *, substitution_tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Mix the advice and substitute; returns (decision, mixed vector).

    Raises :class:`SubstitutionFailure` when the mixed vector is not
    dominated by the substituted decision's losses, i.e. when (c, eta) is
    outside the game's realizability contract.
    """
    A = _advice_matrix(advice, state.game.m)
    g = aa_mix(state, A)
    decision = np.asarray(state.game.substitution(g), dtype=float)
    lv = state.game.loss_vector(decision)
    if not dominated_by(lv, g, substitution_tol):
        raise SubstitutionFailure(
            f"substituted decision exceeds the mix by "
            f"{float(np.max(np.where(np.isfinite(g), lv - g, -np.inf))):.3e}; "
            f"(c={state.c}, eta={state.eta}) is not realizable for {state.game.name!r}"
        )
    return decision, g


def aa_step(state: AAState, advice, outcome: int,
            *, substitution_tol: float = 1e-7) -> tuple[np.ndarray, AAState]:
    """One protocol round: mix, substitute, observe, reweigh."""
    A = _advice_matrix(advice, state.game.m)
    decision, _g = aa_propose(state, A, substitution_tol=substitution_tol)
    lv = state.game.loss_vector(decision)
    realized = A[:, outcome]
    new_lw = np.where(
        np.isinf(realized), -np.inf, state.log_weights - state.eta * np.where(np.isinf(realized), 0.0, realized)
    )
    new_state = replace(
        state,
        log_weights=new_lw,
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + float(lv[outcome]),
        per_expert_loss=state.per_expert_loss + realized,
    )
    return decision, new_state


def log_semi_invariant(state: AAState) -> float:
    """ln of ``sum_t P0(t) exp(eta (L_N / c - L_N^t))``; never increases
    along a realizable run."""
    return float(state.eta * state.cumulative_loss / state.c + log_sum_exp(state.log_weights))


def theorem_bound_margins(state: AAState) -> np.ndarray:
    """``L_N - c L_N^theta - (c/eta) ln(1/P0(theta))`` for every theta;
    nonpositive entries mean the mixing-bound guarantee holds."""
    with np.errstate(divide="ignore"):
        penalty = (state.c / state.eta) * np.where(
            state.prior > 0, -np.log(np.where(state.prior > 0, state.prior, 1.0)), np.inf
        )
    rhs = state.c * state.per_expert_loss + penalty
    safe = np.where(np.isinf(rhs), 0.0, rhs)
    return np.where(np.isinf(rhs), -np.inf, state.cumulative_loss - safe)


def theorem_bound_margin(state: AAState, theta: int) -> float:
    return float(theorem_bound_margins(state)[theta])


# ---------------------------------------------------------------------------
# Geometric maps


def _membership_tol(game: Game) -> float:
    """Closed-form membership is exact, so boundary searches can bisect
    against zero; the numeric grid search needs the one-sided slack."""
    return 0.0 if game.membership_gap is not None else MEMBERSHIP_TOL


def project_boundary(game: Game, g, c: float, eta: float,
                     tol: float = 1e-10) -> np.ndarray:
    """Radial projection ``V(g) = R(g) g`` with
    ``R(g) = min{r in (0, c] : r g in Sigma}``.

    Returns the zero vector when it is itself a superprediction.  Raises
    :class:`NotRealizable` when even ``r = c`` misses the superprediction
    set (the scaling constant is too small for this game).
    """
    arr = as_losses(g)
    # the gap is locally linear in r, so a tiny slack costs ~nothing in R
    # but absorbs rounding at an exactly-critical scaling constant
    mtol = max(_membership_tol(game), 1e-12)
    if domination_gap(game, np.zeros(game.m)) <= mtol:
        return np.zeros(game.m)

    def member(r: float) -> bool:
        return domination_gap(game, r * arr) <= mtol

    if not member(c):
        raise NotRealizable(
            f"{c} * g is not a superprediction of {game.name!r} "
            f"(gap {domination_gap(game, c * arr):.3e})"
        )
    lo, hi = 0.0, float(c)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi * arr


_EXPAND_CAP = 1e12


def retraction_F(game: Game, g, *, eta: float | None = None,
                 tol: float = 1e-10) -> np.ndarray:
    """Coordinatewise retraction onto the minimal elements: lower each
    coordinate in ascending outcome order as far as membership permits.

    When ``eta`` is given, membership means the eta-hull of the
    superprediction set (identical to the base set whenever mixability is
    asserted at that eta).  Different coordinate orders yield different,
    equally minimal points; ascending order is pinned here.
    """
    cur = as_losses(g).copy()
    mtol = _membership_tol(game)

    if eta is None:
        def gap(v: np.ndarray) -> float:
            return domination_gap(game, v)
    else:
        def gap(v: np.ndarray) -> float:
            return hull_membership_gap(game, v, eta)

    if gap(cur) > max(mtol, MEMBERSHIP_TOL):
        raise ValueError("input is not a superprediction (or hull member)")

    def member(v: np.ndarray) -> bool:
        return gap(v) <= mtol

    for w in range(game.m):
        probe = cur.copy()
        probe[w] = 0.0
        if member(probe):
            cur[w] = 0.0
            continue
        hi = cur[w]
        if not np.isfinite(hi):
            hi = 1.0
            probe[w] = hi
            while not member(probe) and hi < _EXPAND_CAP:
                hi *= 2.0
                probe[w] = hi
            if not member(probe):
                continue  # no finite value restores membership
        lo = 0.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            probe[w] = mid
            if member(probe):
                hi = mid
            else:
                lo = mid
        cur[w] = hi
    return cur
