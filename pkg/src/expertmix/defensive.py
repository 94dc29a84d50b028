"""Game-theoretic supermartingales and the defensive forecasting step.

The per-step factor is ``q_g(pi, w) = exp(eta (lambda(pi, w)/c - g(w)))``;
a forecast distribution is chosen so that the prior-weighted product of
these factors cannot grow, whatever the outcome.  The binary solver is an
exact bisection; for three or more outcomes the solve runs on the
delta-interior of the simplex with an explicit epsilon slack that is
surfaced and accumulated into the regret audit instead of being ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .aggregating import _advice_matrix, project_boundary
from .core import Game, as_losses, as_probs, log_sum_exp, simplex_grid
from .errors import ContractViolation, SlackExceeded
from .losses import ProperLoss, proper_loss_from_entropy

__all__ = [
    "DFAState",
    "default_proper_loss",
    "q_term",
    "supermartingale_property_check",
    "dfa_solve_binary",
    "binary_admissible_interval",
    "dfa_solve_simplex",
    "interior_delta",
    "dfa_start",
    "dfa_step",
]


def pair_exponent(lam: np.ndarray, g: np.ndarray, c: float, eta: float) -> np.ndarray:
    """Exponent ``eta (lam/c - g)`` under the extended-real conventions:
    both infinite -> 0 (the factors cancel), ``g`` infinite alone -> -inf
    (the factor vanishes), ``lam`` infinite alone -> +inf."""
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g, dtype=float)
    lam_inf = np.isinf(lam)
    g_inf = np.isinf(g)
    safe = eta * (np.where(lam_inf, 0.0, lam) / c - np.where(g_inf, 0.0, g))
    out = np.where(g_inf & ~lam_inf, -np.inf, safe)
    out = np.where(lam_inf & ~g_inf, np.inf, out)
    return np.where(lam_inf & g_inf, 0.0, out)


def q_term(proper: ProperLoss, c: float, eta: float, g, pi, omega: int) -> float:
    """One supermartingale factor ``exp(eta (lambda(pi, omega)/c - g(omega)))``."""
    lam = proper(as_probs(pi))[omega]
    gw = as_losses(g)[omega]
    return float(np.exp(pair_exponent(np.array(lam), np.array(gw), c, eta)))


def default_proper_loss(game: Game, c: float, eta: float) -> ProperLoss:
    """The loss parameterization used by the forecasting step.

    With ``c == 1`` this is the game's canonical proper loss (or the
    entropy-gradient construction when no closed form exists).  With
    ``c > 1`` it is the hull proper loss pushed to the boundary of the
    superprediction set by the radial projection, which is what makes the
    factors supermartingales for non-mixable games.
    """
    if c == 1.0:
        return proper_loss_from_entropy(game, eta)
    if game.boundary_proper_loss is not None:
        def fn(pi: np.ndarray) -> np.ndarray:
            return game.boundary_proper_loss(np.asarray(pi, dtype=float), c, eta)
    elif game.hull_proper_loss is not None:
        def fn(pi: np.ndarray) -> np.ndarray:
            pi = np.asarray(pi, dtype=float)
            if pi.ndim == 2:
                return np.stack([fn(row) for row in pi])
            lam_hull = game.hull_proper_loss(pi, eta)
            return project_boundary(game, lam_hull, c, eta)
    else:
        raise ValueError(
            f"game {game.name!r} supplies no hull proper loss; "
            "a c > 1 session needs one"
        )

    return ProperLoss(game=game, eta=eta, fn=fn, domain_flag="whole-simplex",
                      label=f"{game.name}-boundary(c={c})")


# ---------------------------------------------------------------------------
# Supermartingale property audit


@dataclass(frozen=True)
class SupermartingaleReport:
    max_excess: float
    worst_pi: np.ndarray | None
    worst_decision: np.ndarray | None

    @property
    def holds(self) -> bool:
        return self.max_excess <= 1e-9


def _expected_q(proper: ProperLoss, c: float, eta: float,
                g: np.ndarray, pi: np.ndarray) -> float:
    lam = proper(pi)
    expo = pair_exponent(lam, g, c, eta)
    live = pi > 0
    if np.any(np.isposinf(expo[live])):
        return np.inf
    vals = np.exp(expo[live])
    return float(np.dot(pi[live], vals))


def supermartingale_property_check(proper: ProperLoss, c: float, eta: float,
                                   game: Game, samples: int = 2000,
                                   *, seed: int = 0,
                                   grid: int = 25) -> SupermartingaleReport:
    """Max over sampled (pi, decision) pairs of ``E_pi q_g(pi, .) - 1``.

    The scan unions a deterministic coarse grid with seeded random draws,
    so known failures (eta above the mixability threshold) are found
    reproducibly.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    m = game.m
    rng = np.random.default_rng(seed)
    pis: list[np.ndarray] = []
    decs: list[np.ndarray] = []
    # deterministic grid part
    if m == 2:
        ps = np.linspace(0.0, 1.0, grid)
        for p in ps:
            for q in ps:
                pis.append(np.array([1.0 - p, p]))
                decs.append(np.array([q]) if game.decision_kind == "box"
                            else np.array([1.0 - q, q]))
    else:
        G = simplex_grid(m, min(grid, 8))
        for pi in G:
            for dec in G:
                pis.append(pi)
                decs.append(dec)
    # random part
    n_random = max(0, samples - len(pis))
    for _ in range(n_random):
        pis.append(rng.dirichlet(np.ones(m)))
        if game.decision_kind == "box":
            decs.append(rng.random(game.decision_dim))
        else:
            decs.append(rng.dirichlet(np.ones(game.decision_dim)))
    worst = -np.inf
    worst_pi = worst_dec = None
    for pi, dec in zip(pis, decs):
        g = game.loss_vector(dec)
        e = _expected_q(proper, c, eta, g, pi) - 1.0
        if e > worst:
            worst, worst_pi, worst_dec = e, pi, dec
    return SupermartingaleReport(max_excess=float(worst), worst_pi=worst_pi,
                                 worst_decision=worst_dec)


# ---------------------------------------------------------------------------
# Solvers


def dfa_solve_binary(qfun: Callable[[float], np.ndarray], C: float,
                     tol: float = 1e-9, max_iter: int = 200) -> float:
    """Find p with ``q(p, 0) <= C + tol`` and ``q(p, 1) <= C + tol``.

    ``qfun(p)`` returns the pair ``(q(p, 0), q(p, 1))``.  Caller's
    contract: q is forecast-continuous and ``E_p q(p, .) <= C`` for all p.
    Early exits: p = 0 when ``q(0, 1) <= C``, then p = 1 when
    ``q(1, 0) <= C``; otherwise the difference ``h(p) = q(p,1) - q(p,0)``
    has a sign change and is bisected to ``|h| <= tol``, which together
    with the expectation bound forces both coordinates under ``C + tol``.
    """
    q0 = np.asarray(qfun(0.0), dtype=float)
    if q0[1] <= C:
        return 0.0
    q1 = np.asarray(qfun(1.0), dtype=float)
    if q1[0] <= C:
        return 1.0
    h0 = q0[1] - q0[0]
    h1 = q1[1] - q1[0]
    if not (h0 > 0.0 and h1 < 0.0):
        raise ContractViolation(
            f"endpoint analysis failed (h(0)={h0:.3e}, h(1)={h1:.3e}); "
            "the supplied q is not a supermartingale term"
        )
    lo, hi = 0.0, 1.0
    mid = 0.5
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        qm = np.asarray(qfun(mid), dtype=float)
        h = qm[1] - qm[0]
        if abs(h) <= tol:
            return mid
        if h > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    raise ContractViolation(
        "bisection failed to equalize the coordinates; q appears discontinuous"
    )


def binary_admissible_interval(qfun: Callable[[float], np.ndarray], C: float,
                               tol: float = 1e-9) -> tuple[float, float]:
    """Endpoints of ``{p : max_w q(p, w) <= C}`` for a binary q whose
    coordinate 1 is nonincreasing and coordinate 0 nondecreasing in p
    (true for the canonical parameterizations of the built-in games).

    Bisections land on the feasible side of each crossing, so the returned
    interval is inner-approximate up to ``tol``.
    """
    q0 = np.asarray(qfun(0.0), dtype=float)
    q1 = np.asarray(qfun(1.0), dtype=float)
    if q0[0] > C * (1.0 + 1e-9) + 1e-12 or q1[1] > C * (1.0 + 1e-9) + 1e-12:
        raise ContractViolation("expectation bound fails at an endpoint")
    if q0[1] <= C:
        lo = 0.0
    else:
        a, b = 0.0, 1.0
        while b - a > tol:
            mid = 0.5 * (a + b)
            if np.asarray(qfun(mid), dtype=float)[1] <= C:
                b = mid
            else:
                a = mid
        lo = b
    if q1[0] <= C:
        hi = 1.0
    else:
        a, b = 0.0, 1.0
        while b - a > tol:
            mid = 0.5 * (a + b)
            if np.asarray(qfun(mid), dtype=float)[0] <= C:
                a = mid
            else:
                b = mid
        hi = a
    if hi < lo:
        mid = 0.5 * (lo + hi)
        lo = hi = mid
    return lo, hi


def interior_delta(epsilon: float, m: int) -> float:
    """Margin delta with ``1 / (1 - delta (m-1)) <= 1 + epsilon``."""
    return epsilon / ((1.0 + epsilon) * (m - 1))


def _local_simplex_points(center: np.ndarray, radius: float, delta: float,
                          n: int) -> np.ndarray:
    base = simplex_grid(len(center), n)
    pts = center[None, :] + radius * (base - 1.0 / len(center))
    pts = np.clip(pts, delta, None)
    pts /= pts.sum(axis=1, keepdims=True)
    # renormalizing can re-violate the floor by rounding; push back once
    pts = np.clip(pts, delta, None)
    pts /= pts.sum(axis=1, keepdims=True)
    return pts


def dfa_solve_simplex(qfun: Callable[[np.ndarray], np.ndarray], C: float,
                      m: int, epsilon: float = 1e-6, tol: float = 1e-9,
                      *, subdiv: int = 24, pair_sweeps: int = 60) -> np.ndarray:
    """Find pi on the delta-interior of the simplex with
    ``max_w q(pi, w) <= (1+epsilon) C + tol``.

    ``qfun`` accepts a batch of distributions, shape (n, m), and returns
    the per-outcome values, shape (n, m).  The search is a three-level
    barycentric grid refinement followed by pairwise-exchange descent,
    accepting the first point under the target (the barycenter is tried
    first, so trivially-satisfiable instances return it unchanged).
    Raises :class:`SlackExceeded` when the descent stalls above target.
    """
    delta = interior_delta(epsilon, m)
    target = (1.0 + epsilon) * C + tol

    def f_batch(P: np.ndarray) -> np.ndarray:
        vals = np.asarray(qfun(P), dtype=float)
        return vals.max(axis=1)

    center = np.full(m, 1.0 / m)
    f_center = float(f_batch(center[None, :])[0])
    if f_center <= target:
        return center
    best, best_val = center, f_center
    radius = 1.0
    for _ in range(3):
        pts = _local_simplex_points(best, radius, delta, subdiv)
        vals = f_batch(pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best, best_val = pts[i], float(vals[i])
        if best_val <= target:
            return best
        radius /= subdiv / 2.0

    # pairwise mass-exchange descent with a shrinking step ladder
    step = 2.0 / subdiv
    for _ in range(pair_sweeps):
        improved = False
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                t_max = min(best[j] - delta, step)
                if t_max <= 0:
                    continue
                ts = np.linspace(0.0, t_max, 9)[1:]
                cands = np.repeat(best[None, :], len(ts), axis=0)
                cands[:, i] += ts
                cands[:, j] -= ts
                vals = f_batch(cands)
                k = int(np.argmin(vals))
                if vals[k] < best_val - 1e-15:
                    best, best_val = cands[k], float(vals[k])
                    improved = True
        if best_val <= target:
            return best
        if not improved:
            step /= 4.0
            if step < 1e-14:
                break
    if best_val <= target:
        return best
    raise SlackExceeded(
        f"interior solve stalled at max_w q = {best_val:.6e} > target {target:.6e}",
        best_point=best,
        best_value=best_val,
    )


# ---------------------------------------------------------------------------
# The forecasting protocol step


@dataclass(frozen=True, eq=False)
class DFAState:
    """State of one defensive forecasting session.

    ``log_weights[t]`` tracks ``ln P0(t) + eta sum_n (lambda(pi_n, w_n)/c -
    g_n^t(w_n))`` and ``log_value`` is their log-sum-exp, the log of the
    prior-weighted supermartingale; it never rises above the accumulated
    solver slack ``slack_log_total = sum_n ln(1 + s_n)``.
    """

    game: Game
    c: float
    eta: float
    proper: ProperLoss
    prior: np.ndarray
    log_weights: np.ndarray
    log_value: float = 0.0
    step_count: int = 0
    cumulative_loss: float = 0.0
    learner_lambda_loss: float = 0.0
    per_expert_loss: np.ndarray | None = None
    slack_log_total: float = 0.0

    def __post_init__(self):
        if self.per_expert_loss is None:
            object.__setattr__(self, "per_expert_loss", np.zeros(len(self.prior)))

    @property
    def n_experts(self) -> int:
        return len(self.prior)


def dfa_start(game: Game, *, eta: float, c: float = 1.0,
              prior: Sequence[float] | np.ndarray | None = None,
              n_experts: int | None = None,
              proper: ProperLoss | None = None) -> DFAState:
    if prior is None:
        if n_experts is None:
            raise ValueError("need prior or n_experts")
        prior = np.full(n_experts, 1.0 / n_experts)
    prior = np.asarray(prior, dtype=float)
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior must be a probability vector")
    if c < 1.0 or eta <= 0.0:
        raise ValueError("need c >= 1 and eta > 0")
    if proper is None:
        proper = default_proper_loss(game, c, eta)
    with np.errstate(divide="ignore"):
        lw = np.where(prior > 0, np.log(np.where(prior > 0, prior, 1.0)), -np.inf)
    return DFAState(game=game, c=c, eta=eta, proper=proper, prior=prior,
                    log_weights=lw, log_value=float(log_sum_exp(lw)))


def _normalized_log_weights(state: DFAState) -> np.ndarray:
    return state.log_weights - state.log_value


def standard_qfun(state: DFAState, advice_matrix: np.ndarray):
    """q for fixed (standard) advice; the per-expert sum factors into
    per-outcome constants ``a_w = sum_t wbar_t exp(-eta g_t(w))`` so each
    candidate costs one proper-loss evaluation.

    Returns ``(qrow, qbatch)``: single-point and batched evaluators.
    """
    lwn = _normalized_log_weights(state)
    A = advice_matrix
    with np.errstate(invalid="ignore"):
        shifted = np.where(np.isinf(A), -np.inf,
                           lwn[:, None] - state.eta * np.where(np.isinf(A), 0.0, A))
    log_a = log_sum_exp(shifted, axis=0)  # (m,)
    c, eta, proper = state.c, state.eta, state.proper
    dead = np.isneginf(log_a)  # every positively-weighted expert is infinite there

    def _q_from_lam(lam: np.ndarray, la: np.ndarray, dd: np.ndarray) -> np.ndarray:
        lam_inf = np.isinf(lam)
        vals = np.exp(eta * np.where(lam_inf, 0.0, lam) / c + la)
        # lam infinite: q blows up against any finite advice, but cancels
        # (factor 1 per expert) when every weighted expert is infinite too
        vals = np.where(lam_inf & ~dd, np.inf, vals)
        return np.where(lam_inf & dd, 1.0, vals)

    def qrow(pi: np.ndarray) -> np.ndarray:
        return _q_from_lam(proper(pi), log_a, dead)

    def qbatch(P: np.ndarray) -> np.ndarray:
        return _q_from_lam(proper(P), log_a[None, :], dead[None, :])

    return qrow, qbatch


def _binary_interval_midpoint(qbatch, C: float, tol: float) -> float:
    """Midpoint of the admissible interval, running both endpoint
    bisections simultaneously on batched candidates."""
    ends = np.asarray(qbatch(np.array([[1.0, 0.0], [0.0, 1.0]])), dtype=float)
    q0, q1 = ends[0], ends[1]
    if q0[0] > C * (1.0 + 1e-9) + 1e-12 or q1[1] > C * (1.0 + 1e-9) + 1e-12:
        raise ContractViolation("expectation bound fails at an endpoint")
    lo_done = q0[1] <= C
    hi_done = q1[0] <= C
    a_lo, b_lo = 0.0, 1.0  # crossing of q(., 1)
    a_hi, b_hi = 0.0, 1.0  # crossing of q(., 0)
    while (not lo_done and b_lo - a_lo > tol) or (not hi_done and b_hi - a_hi > tol):
        m_lo = 0.5 * (a_lo + b_lo)
        m_hi = 0.5 * (a_hi + b_hi)
        P = np.array([[1.0 - m_lo, m_lo], [1.0 - m_hi, m_hi]])
        q = np.asarray(qbatch(P), dtype=float)
        if not lo_done:
            if q[0, 1] <= C:
                b_lo = m_lo
            else:
                a_lo = m_lo
        if not hi_done:
            if q[1, 0] <= C:
                a_hi = m_hi
            else:
                b_hi = m_hi
    lo = 0.0 if lo_done else b_lo
    hi = 1.0 if hi_done else a_hi
    if hi < lo:
        return 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


def choose_forecast(qrow, qbatch, m: int, *, C: float = 1.0,
                    epsilon: float = 1e-6, tol: float = 1e-9,
                    select: str = "midpoint") -> tuple[np.ndarray, float]:
    """Pick a forecast distribution keeping every coordinate of q under C
    (up to the documented slack); returns (pi, slack)."""
    if m == 2:
        if select == "midpoint":
            p = _binary_interval_midpoint(qbatch, C, tol)
        elif select == "root":
            def qp(pp: float) -> np.ndarray:
                return qrow(np.array([1.0 - pp, pp]))

            p = dfa_solve_binary(qp, C, tol)
        else:
            raise ValueError(f"unknown selection rule {select!r}")
        pi = np.array([1.0 - p, p])
    else:
        pi = dfa_solve_simplex(qbatch, C, m, epsilon, tol)
    slack = max(0.0, float(np.max(qrow(pi))) - C)
    return pi, slack


def dfa_propose(state: DFAState, advice, *, epsilon: float = 1e-6,
                tol: float = 1e-9, select: str = "midpoint",
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Choose the forecast for the given advice; returns
    ``(decision, pi, lambda(pi), slack)`` without touching the state."""
    A = _advice_matrix(advice, state.game.m)
    if A.shape[0] != state.n_experts:
        raise ValueError(f"{A.shape[0]} advice rows for {state.n_experts} experts")
    qrow, qbatch = standard_qfun(state, A)
    pi, slack = choose_forecast(qrow, qbatch, state.game.m,
                                epsilon=epsilon, tol=tol, select=select)
    lam = state.proper(pi)
    decision = np.asarray(state.game.substitution(lam), dtype=float)
    return decision, pi, lam, slack


def dfa_step(state: DFAState, advice, outcome: int, *,
             epsilon: float = 1e-6, tol: float = 1e-9,
             select: str = "midpoint",
             substitution_tol: float = 1e-7) -> tuple[np.ndarray, DFAState, float]:
    """One forecasting round: choose pi, substitute, observe, reweigh.

    Binary games default to the midpoint of the admissible interval (the
    same selection the midpoint substitution makes on the mixing side);
    pass ``select="root"`` for the coordinate-equalizing bisection point.
    Returns ``(decision, new_state, slack)`` where ``slack`` is the step's
    worst-case excess of q over 1 across outcomes.

    Raises :class:`SubstitutionFailure` when the loss parameterization's
    value cannot be dominated by a legal decision; with the default
    parameterizations that means (c, eta) violates the game's contract.
    """
    from .core import dominated_by
    from .errors import SubstitutionFailure

    A = _advice_matrix(advice, state.game.m)
    decision, pi, lam, slack = dfa_propose(state, A, epsilon=epsilon,
                                           tol=tol, select=select)
    lv = state.game.loss_vector(decision)
    if not dominated_by(lv, lam, substitution_tol):
        raise SubstitutionFailure(
            f"decision losses exceed the parameterized prediction by "
            f"{float(np.max(np.where(np.isfinite(lam), lv - lam, -np.inf))):.3e}; "
            f"(c={state.c}, eta={state.eta}) is outside the contract for "
            f"{state.game.name!r}"
        )
    new_lw = state.log_weights + pair_exponent(
        np.full(state.n_experts, lam[outcome]), A[:, outcome], state.c, state.eta
    )
    new_state = replace(
        state,
        log_weights=new_lw,
        log_value=float(log_sum_exp(new_lw)),
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + float(lv[outcome]),
        learner_lambda_loss=state.learner_lambda_loss + float(lam[outcome]),
        per_expert_loss=state.per_expert_loss + A[:, outcome],
        slack_log_total=state.slack_log_total + float(np.log1p(slack)),
    )
    return decision, new_state, slack


def dfa_bound_margins(state: DFAState) -> np.ndarray:
    """``L_N - c L_N^theta - (c/eta)(ln(1/P0) + slack allowance)`` per
    theta; nonpositive entries mean the guarantee holds."""
    with np.errstate(divide="ignore"):
        penalty = np.where(
            state.prior > 0, -np.log(np.where(state.prior > 0, state.prior, 1.0)), np.inf
        )
    allowance = (state.c / state.eta) * (penalty + state.slack_log_total)
    rhs = state.c * state.per_expert_loss + allowance
    safe = np.where(np.isinf(rhs), 0.0, rhs)
    return np.where(np.isinf(rhs), -np.inf, state.cumulative_loss - safe)


def dfa_bound_margin(state: DFAState, theta: int) -> float:
    return float(dfa_bound_margins(state)[theta])
