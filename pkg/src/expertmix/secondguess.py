"""Second-guessing experts: advice is a continuous map from Learner's
forthcoming prediction to a loss vector.

The forecasting step is unchanged except that every candidate forecast
re-evaluates the expert maps; the mixing side solves a fixed-point
equation through the retraction onto minimal elements (composed with the
radial projection for non-mixable games run with c > 1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .aggregating import AAState, project_boundary, retraction_F
from .core import Game, domination_gap, exp_mix, log_sum_exp
from .defensive import (
    DFAState,
    dfa_solve_binary,
    dfa_solve_simplex,
    pair_exponent,
)
from .errors import DomainError, NoConvergence


@dataclass(frozen=True, eq=False)
class SecondGuessExpert:
    """An expert whose advice is conditional on Learner's prediction.

    ``fn`` maps Learner's loss vector to the expert's loss vector; it must
    be continuous on its declared domain for the guarantees to apply.
    ``lipschitz`` is optional metadata for harness-side continuity probes.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "sg-expert"
    lipschitz: float | None = None

    def __call__(self, gamma: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(gamma, dtype=float)), dtype=float)

    @classmethod
    def constant(cls, vector, name: str = "constant") -> "SecondGuessExpert":
        vec = np.asarray(vector, dtype=float)
        return cls(fn=lambda _g: vec, name=name, lipschitz=0.0)

    @classmethod
    def identity(cls, name: str = "identity") -> "SecondGuessExpert":
        return cls(fn=lambda g: g, name=name, lipschitz=1.0)

    @classmethod
    def coordinate_swap(cls, name: str = "contrarian") -> "SecondGuessExpert":
        """Binary contrarian: predicts 1-p when Learner's decision is p,
        which swaps the two loss coordinates.  Continuous."""
        return cls(fn=lambda g: g[::-1].copy(), name=name, lipschitz=1.0)


def _sg_qrow(state: DFAState, experts: Sequence[SecondGuessExpert]):
    lwn = state.log_weights - state.log_value
    wbar = np.exp(lwn)
    c, eta, proper = state.c, state.eta, state.proper

    def qrow(pi: np.ndarray) -> np.ndarray:
        lam = proper(pi)
        total = np.zeros(state.game.m)
        for w_t, ex in zip(wbar, experts):
            if w_t == 0.0:
                continue
            g_t = ex(lam)
            total += w_t * np.exp(pair_exponent(lam, g_t, c, eta))
        return total

    return qrow


def sg_dfa_step(state: DFAState, experts: Sequence[SecondGuessExpert],
                outcome: int, *, epsilon: float = 1e-6, tol: float = 1e-9,
                codomain_tol: float = 1e-7) -> tuple[np.ndarray, DFAState, float]:
    """One round against second-guessing experts.

    Learner announces the loss parameterization's value directly (its range
    is already inside the prediction set), so the returned prediction is a
    loss vector.  Raises :class:`DomainError` when an expert map leaves the
    superprediction set at the realized prediction.
    """
    if len(experts) != state.n_experts:
        raise ValueError(f"{len(experts)} experts for {state.n_experts} weights")
    qrow = _sg_qrow(state, experts)
    m = state.game.m
    if m == 2:
        def qp(p: float) -> np.ndarray:
            return qrow(np.array([1.0 - p, p]))

        p = dfa_solve_binary(qp, 1.0, tol)
        pi = np.array([1.0 - p, p])
    else:
        def qbatch(P: np.ndarray) -> np.ndarray:
            return np.stack([qrow(row) for row in P])

        pi = dfa_solve_simplex(qbatch, 1.0, m, epsilon, tol)
    slack = max(0.0, float(np.max(qrow(pi))) - 1.0)
    gamma = state.proper(pi)
    advice = np.stack([ex(gamma) for ex in experts])
    for ex, g_t in zip(experts, advice):
        if np.any(np.isnan(g_t)) or np.any(g_t < -codomain_tol) \
                or domination_gap(state.game, np.clip(g_t, 0.0, None)) > codomain_tol:
            raise DomainError(
                f"expert {ex.name!r} returned {g_t}, outside the superprediction set"
            )
    new_lw = state.log_weights + pair_exponent(
        np.full(state.n_experts, gamma[outcome]), advice[:, outcome],
        state.c, state.eta,
    )
    new_state = replace(
        state,
        log_weights=new_lw,
        log_value=float(log_sum_exp(new_lw)),
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + float(gamma[outcome]),
        learner_lambda_loss=state.learner_lambda_loss + float(gamma[outcome]),
        per_expert_loss=state.per_expert_loss + advice[:, outcome],
        slack_log_total=state.slack_log_total + float(np.log1p(slack)),
    )
    return gamma, new_state, slack


# ---------------------------------------------------------------------------
# Fixed-point mixing


def _posterior(state: AAState) -> np.ndarray:
    total = log_sum_exp(state.log_weights)
    if np.isneginf(total):
        raise ZeroDivisionError("all experts carry zero weight")
    return np.exp(state.log_weights - total)


def _sg_transform(state: AAState, experts: Sequence[SecondGuessExpert]):
    """gamma -> F(eta-mix of the experts' conditional advice), composed
    with the radial projection when running with c > 1."""
    wbar = _posterior(state)
    game, eta, c = state.game, state.eta, state.c

    def transform(gamma: np.ndarray) -> np.ndarray:
        advice = [ex(gamma) for ex in experts]
        mixed = exp_mix(advice, wbar, eta)
        out = retraction_F(game, mixed, eta=eta)
        if c > 1.0:
            out = project_boundary(game, out, c, eta)
        return out

    return transform


def _decision_parameter(game: Game, gamma: np.ndarray) -> float:
    """Recover the 1-d decision parameter of a binary boundary point."""
    dec = np.asarray(game.substitution(gamma), dtype=float)
    return float(dec[0])


def sg_fixed_point(state: AAState, experts: Sequence[SecondGuessExpert],
                   *, tol: float = 1e-10, max_iter: int = 10_000,
                   damping: float = 0.5) -> np.ndarray:
    """Solve ``gamma = F(mix(Gamma(gamma)))`` for the current posterior.

    Binary games use bisection on the decision parameter (the minimal set
    is a curve, so the equation is one-dimensional); larger games use
    damped iteration in the ``exp(-eta x)`` chart, where the hull is
    convex, retracting back onto the minimal set after each damped move.
    Raises :class:`NoConvergence` when the iteration cap is exhausted.
    """
    game = state.game
    transform = _sg_transform(state, experts)

    if game.m == 2:
        def f(p: float) -> float:
            gamma_p = game.loss_vector(np.array([p]))
            return p - _decision_parameter(game, transform(gamma_p))

        lo, hi = 0.0, 1.0
        f_lo, f_hi = f(lo), f(hi)
        if f_lo >= -tol:
            p_star = lo
        elif f_hi <= tol:
            p_star = hi
        else:
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if abs(fm) <= min(tol, 1e-12) or hi - lo <= 1e-14:
                    break
                if fm < 0:
                    lo = mid
                else:
                    hi = mid
            p_star = 0.5 * (lo + hi)
        return game.loss_vector(np.array([p_star]))

    if game.decision_kind == "simplex":
        central = np.full(game.decision_dim, 1.0 / game.decision_dim)
    else:
        central = np.full(game.decision_dim, 0.5)
    gamma = transform(game.loss_vector(central))
    eta = state.eta
    for _ in range(max_iter):
        target = transform(gamma)
        z = (1.0 - damping) * np.exp(-eta * gamma) + damping * np.exp(-eta * target)
        with np.errstate(divide="ignore"):
            mixed = np.where(z > 0, -np.log(np.where(z > 0, z, 1.0)) / eta, np.inf)
        new_gamma = retraction_F(game, mixed, eta=eta)
        if float(np.max(np.abs(new_gamma - gamma))) <= tol:
            return new_gamma
        gamma = new_gamma
    raise NoConvergence(
        "fixed-point iteration exhausted its budget",
        last_iterate=gamma,
        residual=float(np.max(np.abs(transform(gamma) - gamma))),
    )


def sg_fixed_point_residual(state: AAState, experts: Sequence[SecondGuessExpert],
                            gamma: np.ndarray) -> float:
    """sup-norm residual of the fixed-point equation at ``gamma``."""
    transform = _sg_transform(state, experts)
    return float(np.max(np.abs(transform(gamma) - gamma)))


def sg_aa_step(state: AAState, experts: Sequence[SecondGuessExpert],
               outcome: int, *, tol: float = 1e-10) -> tuple[np.ndarray, AAState]:
    """Fixed-point mixing round: announce the solution, observe, reweigh
    with the experts' realized conditional losses."""
    gamma = sg_fixed_point(state, experts, tol=tol)
    advice = np.stack([ex(gamma) for ex in experts])
    realized = advice[:, outcome]
    new_lw = np.where(
        np.isinf(realized), -np.inf,
        state.log_weights - state.eta * np.where(np.isinf(realized), 0.0, realized),
    )
    new_state = replace(
        state,
        log_weights=new_lw,
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + float(gamma[outcome]),
        per_expert_loss=state.per_expert_loss + realized,
    )
    return gamma, new_state
