"""Two protocol extensions: expert evaluators with heterogeneous loss
functions, and outcomes drawn from the probability simplex.

Evaluator sessions keep one supermartingale whose per-expert factors carry
that expert's own (c, eta, loss); the simplex sessions run the vertex
solver and transfer the guarantee through relative exp-convexity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import Game, as_probs, log_sum_exp
from .defensive import (
    dfa_solve_binary,
    dfa_solve_simplex,
    pair_exponent,
    supermartingale_property_check,
)
from .errors import ContractViolation, PreconditionUnverified
from .losses import ProperLoss, builtin_game


# ---------------------------------------------------------------------------
# Protocol with expert evaluators (several loss functions)


@dataclass(frozen=True, eq=False)
class EvaluatedExpert:
    """An expert judged, and judging Learner, by its own proper loss."""

    proper: ProperLoss
    c: float
    eta: float
    prior: float
    name: str = ""


@dataclass(frozen=True, eq=False)
class MLState:
    experts: tuple[EvaluatedExpert, ...]
    log_weights: np.ndarray
    log_value: float
    m: int
    step_count: int = 0
    learner_losses: np.ndarray | None = None   # Learner scored by each evaluator
    expert_losses: np.ndarray | None = None    # each expert by its own loss
    slack_log_total: float = 0.0

    def __post_init__(self):
        k = len(self.experts)
        if self.learner_losses is None:
            object.__setattr__(self, "learner_losses", np.zeros(k))
        if self.expert_losses is None:
            object.__setattr__(self, "expert_losses", np.zeros(k))


def ml_dfa_start(experts: Sequence[EvaluatedExpert], m: int, *,
                 verify: bool = True, samples: int = 2000, seed: int = 0,
                 check_tol: float = 1e-7) -> MLState:
    """Validate the evaluator triples and open a session.

    Each distinct (loss, c, eta) triple must pass the supermartingale
    property check; failures raise :class:`ContractViolation`.
    """
    priors = np.array([e.prior for e in experts], dtype=float)
    if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-9:
        raise ValueError("evaluator priors must form a probability vector")
    if verify:
        seen: set[tuple[int, float, float]] = set()
        for e in experts:
            key = (id(e.proper), e.c, e.eta)
            if key in seen:
                continue
            seen.add(key)
            rep = supermartingale_property_check(
                e.proper, e.c, e.eta, e.proper.game, samples, seed=seed
            )
            if rep.max_excess > check_tol:
                raise ContractViolation(
                    f"evaluator {e.name!r} fails the supermartingale property "
                    f"(excess {rep.max_excess:.3e} at c={e.c}, eta={e.eta})"
                )
    with np.errstate(divide="ignore"):
        lw = np.where(priors > 0, np.log(np.where(priors > 0, priors, 1.0)), -np.inf)
    return MLState(experts=tuple(experts), log_weights=lw,
                   log_value=float(log_sum_exp(lw)), m=m)


def _ml_qrow(state: MLState, advice: np.ndarray):
    lwn = state.log_weights - state.log_value
    wbar = np.exp(lwn)
    experts = state.experts
    m = state.m

    def qrow(pi: np.ndarray) -> np.ndarray:
        total = np.zeros(m)
        for w_t, ex, adv in zip(wbar, experts, advice):
            if w_t == 0.0:
                continue
            lam = ex.proper(pi)
            g = ex.proper(adv)
            total += w_t * np.exp(pair_exponent(lam, g, ex.c, ex.eta))
        return total

    return qrow


def ml_dfa_step(state: MLState, advice, outcome: int, *,
                epsilon: float = 1e-6, tol: float = 1e-9,
                ) -> tuple[np.ndarray, MLState, float]:
    """One evaluator round: Learner announces a distribution; every party
    is scored by each evaluator's own loss at the realized outcome."""
    adv = np.stack([as_probs(a) for a in advice])
    if adv.shape != (len(state.experts), state.m):
        raise ValueError(f"advice shape {adv.shape}, expected "
                         f"({len(state.experts)}, {state.m})")
    qrow = _ml_qrow(state, adv)
    m = state.m
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
    learner_inst = np.array([e.proper(pi)[outcome] for e in state.experts])
    expert_inst = np.array(
        [e.proper(a)[outcome] for e, a in zip(state.experts, adv)]
    )
    shifts = np.array([
        float(pair_exponent(np.array(li), np.array(ei), e.c, e.eta))
        for li, ei, e in zip(learner_inst, expert_inst, state.experts)
    ])
    new_lw = state.log_weights + shifts
    new_state = replace(
        state,
        log_weights=new_lw,
        log_value=float(log_sum_exp(new_lw)),
        step_count=state.step_count + 1,
        learner_losses=state.learner_losses + learner_inst,
        expert_losses=state.expert_losses + expert_inst,
        slack_log_total=state.slack_log_total + float(np.log1p(slack)),
    )
    return pi, new_state, slack


def ml_bound_margins(state: MLState) -> np.ndarray:
    """Per-evaluator guarantee margins
    ``L^(t) - c_t L^t - (c_t/eta_t)(ln(1/P0) + slack)``."""
    cs = np.array([e.c for e in state.experts])
    etas = np.array([e.eta for e in state.experts])
    priors = np.array([e.prior for e in state.experts])
    with np.errstate(divide="ignore"):
        penalty = np.where(priors > 0, -np.log(np.where(priors > 0, priors, 1.0)), np.inf)
    allowance = (cs / etas) * (penalty + state.slack_log_total)
    rhs = cs * state.expert_losses + allowance
    safe = np.where(np.isinf(rhs), 0.0, rhs)
    return np.where(np.isinf(rhs), -np.inf, state.learner_losses - safe)


def ml_bound_margin(state: MLState, theta: int) -> float:
    return float(ml_bound_margins(state)[theta])


def duplicate_evaluators(specs: Sequence[tuple[ProperLoss, float, float]],
                         n_base: int) -> list[EvaluatedExpert]:
    """The several-losses reduction: each of ``n_base`` base predictions is
    entered once per (loss, c, eta) spec, with equal priors over all
    copies.  Advice rows must then be tiled spec-major (see
    :func:`tile_advice`)."""
    total = len(specs) * n_base
    out = []
    for s_idx, (proper, c, eta) in enumerate(specs):
        for k in range(n_base):
            out.append(EvaluatedExpert(
                proper=proper, c=c, eta=eta, prior=1.0 / total,
                name=f"{proper.label or proper.game.name}[{s_idx}]#{k}",
            ))
    return out


def tile_advice(base_advice: np.ndarray, n_specs: int) -> np.ndarray:
    """Repeat the base advice block once per evaluator spec (spec-major)."""
    return np.tile(np.asarray(base_advice, dtype=float), (n_specs, 1))


# ---------------------------------------------------------------------------
# Simplex-valued outcomes


@dataclass(frozen=True, eq=False)
class SimplexGame:
    """A game whose outcomes are distributions over the base outcome set.

    ``loss_on_simplex(decision, p)`` restricted to the vertices must equal
    the base game's loss; the canonical extension map for the built-in
    games is the same closed form evaluated at the simplex point, so the
    inverse-of-restriction requirement holds by construction.
    """

    base: Game
    loss_on_simplex: Callable[[np.ndarray, np.ndarray], float]
    name: str

    @property
    def m(self) -> int:
        return self.base.m


def brier_simplex(m: int) -> SimplexGame:
    base = builtin_game("brier", m)

    def loss(dec, p):
        dec = np.asarray(dec, dtype=float)
        p = np.asarray(p, dtype=float)
        return float(np.sum((p - dec) ** 2))

    return SimplexGame(base=base, loss_on_simplex=loss, name="brier-simplex")


def kl_simplex(m: int) -> SimplexGame:
    base = builtin_game("kl", m)

    def loss(dec, p):
        dec = np.asarray(dec, dtype=float)
        p = np.asarray(p, dtype=float)
        live = p > 0
        if np.any(dec[live] <= 0):
            return float("inf")
        plogp = np.where(p[live] > 0, p[live] * np.log(p[live]), 0.0)
        return float(np.sum(plogp - p[live] * np.log(dec[live])))

    return SimplexGame(base=base, loss_on_simplex=loss, name="kl-simplex")


def absolute_simplex() -> SimplexGame:
    """Absolute loss extended to p in [0, 1]; the standard counterexample
    to relative exp-convexity."""
    base = builtin_game("absolute", 2)

    def loss(dec, p):
        dec = np.asarray(dec, dtype=float)
        p = np.asarray(p, dtype=float)
        return float(abs(dec[0] - p[1]))

    return SimplexGame(base=base, loss_on_simplex=loss, name="absolute-simplex")


@dataclass(frozen=True)
class RelExpConvexityReport:
    holds: bool
    worst_violation: float
    witness: tuple | None  # (decision_1, decision_2, p, lhs, rhs)


def check_relative_exp_convexity(sg: SimplexGame, c: float, eta: float,
                                 samples: int = 1000, *, seed: int = 0,
                                 tol: float = 1e-9,
                                 probes: Sequence[tuple] | None = None,
                                 ) -> RelExpConvexityReport:
    """Sample decision pairs and simplex outcomes and compare
    ``exp(eta (g1(p)/c - g2(p)))`` against the p-expectation of the vertex
    factors.  A positive excess with its witnessing triple falsifies the
    transfer property."""
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    base = sg.base
    m = base.m
    worst = -np.inf
    witness = None
    pairs: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    if probes:
        for d1, d2, p in probes:
            pairs.append((np.asarray(d1, dtype=float), np.asarray(d2, dtype=float),
                          np.asarray(p, dtype=float)))
    for _ in range(samples):
        if base.decision_kind == "box":
            d1 = rng.random(base.decision_dim)
            d2 = rng.random(base.decision_dim)
        else:
            d1 = rng.dirichlet(np.ones(base.decision_dim))
            d2 = rng.dirichlet(np.ones(base.decision_dim))
        p = rng.dirichlet(np.ones(m))
        pairs.append((d1, d2, p))
    for d1, d2, p in pairs:
        g1p = sg.loss_on_simplex(d1, p)
        g2p = sg.loss_on_simplex(d2, p)
        if not (np.isfinite(g1p) and np.isfinite(g2p)):
            continue
        lhs = float(np.exp(eta * (g1p / c - g2p)))
        v1 = base.loss_vector(d1)
        v2 = base.loss_vector(d2)
        expo = pair_exponent(v1, v2, c, eta)
        live = p > 0
        if np.any(np.isposinf(expo[live])):
            continue  # infinite right-hand side dominates trivially
        rhs = float(np.dot(p[live], np.exp(expo[live])))
        excess = lhs - rhs
        if excess > worst:
            worst = excess
            witness = (d1, d2, p, lhs, rhs)
    return RelExpConvexityReport(holds=bool(worst <= tol),
                                 worst_violation=float(worst),
                                 witness=witness if worst > tol else witness)


@dataclass(frozen=True, eq=False)
class SimplexState:
    sg: SimplexGame
    c: float
    eta: float
    proper: ProperLoss
    prior: np.ndarray
    log_weights: np.ndarray
    log_value: float = 0.0
    step_count: int = 0
    cumulative_loss: float = 0.0
    per_expert_loss: np.ndarray | None = None
    slack_log_total: float = 0.0
    verified: bool = False

    def __post_init__(self):
        if self.per_expert_loss is None:
            object.__setattr__(self, "per_expert_loss", np.zeros(len(self.prior)))

    @property
    def n_experts(self) -> int:
        return len(self.prior)


def simplex_dfa_start(sg: SimplexGame, *, eta: float, c: float = 1.0,
                      prior: Sequence[float] | np.ndarray | None = None,
                      n_experts: int | None = None,
                      proper: ProperLoss | None = None,
                      verify: bool = True, samples: int = 800, seed: int = 0,
                      check_tol: float = 1e-7) -> SimplexState:
    """Open a simplex-outcome session, verifying relative exp-convexity and
    the vertex supermartingale property unless explicitly skipped (a step
    on an unverified state raises)."""
    if prior is None:
        if n_experts is None:
            raise ValueError("need prior or n_experts")
        prior = np.full(n_experts, 1.0 / n_experts)
    prior = np.asarray(prior, dtype=float)
    if proper is None:
        from .defensive import default_proper_loss

        proper = default_proper_loss(sg.base, c, eta)
    verified = False
    if verify:
        rec = check_relative_exp_convexity(sg, c, eta, samples, seed=seed)
        if not rec.holds:
            raise ContractViolation(
                f"{sg.name} lacks relative exp-convexity at c={c}, eta={eta}: "
                f"violation {rec.worst_violation:.3e} at {rec.witness!r}"
            )
        rep = supermartingale_property_check(proper, c, eta, sg.base,
                                             samples, seed=seed)
        if rep.max_excess > check_tol:
            raise ContractViolation(
                f"vertex supermartingale property fails "
                f"(excess {rep.max_excess:.3e})"
            )
        verified = True
    with np.errstate(divide="ignore"):
        lw = np.where(prior > 0, np.log(np.where(prior > 0, prior, 1.0)), -np.inf)
    return SimplexState(sg=sg, c=c, eta=eta, proper=proper, prior=prior,
                        log_weights=lw, log_value=float(log_sum_exp(lw)),
                        verified=verified)


def simplex_dfa_step(state: SimplexState, advice, p_outcome, *,
                     epsilon: float = 1e-6, tol: float = 1e-9,
                     select: str = "midpoint",
                     ) -> tuple[np.ndarray, SimplexState, float]:
    """One simplex-outcome round: run the vertex solver on the restricted
    advice, extend the substituted decision to the whole simplex, and score
    every party at the realized point."""
    if not state.verified:
        raise PreconditionUnverified(
            "simplex session was started with verify=False; "
            "re-create it with verification to run steps"
        )
    base = state.sg.base
    p_out = as_probs(p_outcome)
    decisions = [np.asarray(a, dtype=float) for a in advice]
    vertex_advice = np.stack([base.loss_vector(d) for d in decisions])
    # vertex solve reuses the standard-session machinery
    from .defensive import DFAState, choose_forecast, standard_qfun

    inner = DFAState(game=base, c=state.c, eta=state.eta, proper=state.proper,
                     prior=state.prior, log_weights=state.log_weights,
                     log_value=state.log_value)
    qrow, qbatch = standard_qfun(inner, vertex_advice)
    pi, slack = choose_forecast(qrow, qbatch, base.m, epsilon=epsilon, tol=tol,
                                select=select)
    lam = state.proper(pi)
    decision = np.asarray(base.substitution(lam), dtype=float)
    learner_inst = state.sg.loss_on_simplex(decision, p_out)
    expert_inst = np.array([state.sg.loss_on_simplex(d, p_out) for d in decisions])
    shift = pair_exponent(np.full(state.n_experts, learner_inst),
                          expert_inst, state.c, state.eta)
    new_lw = state.log_weights + shift
    new_state = replace(
        state,
        log_weights=new_lw,
        log_value=float(log_sum_exp(new_lw)),
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + float(learner_inst),
        per_expert_loss=state.per_expert_loss + expert_inst,
        slack_log_total=state.slack_log_total + float(np.log1p(slack)),
    )
    return decision, new_state, slack


def simplex_bound_margins(state: SimplexState) -> np.ndarray:
    with np.errstate(divide="ignore"):
        penalty = np.where(
            state.prior > 0, -np.log(np.where(state.prior > 0, state.prior, 1.0)), np.inf
        )
    allowance = (state.c / state.eta) * (penalty + state.slack_log_total)
    rhs = state.c * state.per_expert_loss + allowance
    safe = np.where(np.isinf(rhs), 0.0, rhs)
    return np.where(np.isinf(rhs), -np.inf, state.cumulative_loss - safe)


def simplex_bound_margin(state: SimplexState, theta: int) -> float:
    return float(simplex_bound_margins(state)[theta])
