"""Built-in games, generalized entropy, proper-loss construction, and the
properness / mixability checkers.

Built-in games carry closed forms (loss, membership gap, substitution,
entropy, canonical proper loss) so membership and properness tests are
exact; the generic numeric machinery is reserved for user-supplied games.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .core import (
    Game,
    OutcomeSpace,
    as_probs,
    domination_gap,
    exp_mix,
    golden_min,
    simplex_grid,
)
from .errors import NonExtendable

BUILTIN_GAMES = ("log", "square", "brier", "hellinger", "kl", "absolute")


def _safe_neg_log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.log(np.where(x > 0, x, 1.0)), np.inf)


def _stack_binary(l0: np.ndarray, l1: np.ndarray, batched: bool) -> np.ndarray:
    out = np.stack([l0, l1], axis=-1)
    return out if batched else out[0]


# ---------------------------------------------------------------------------
# The six built-in games


def _log_binary() -> Game:
    def loss(dec):
        dec = np.asarray(dec, dtype=float)
        batched = dec.ndim == 2
        p = dec[:, 0] if batched else np.atleast_1d(dec)
        return _stack_binary(_safe_neg_log(1.0 - p), _safe_neg_log(p), batched)

    def membership_gap(g):
        s = float(np.sum(np.exp(-np.where(np.isinf(g), np.inf, g))))
        return -np.inf if s == 0.0 else float(np.log(s))

    def feasible_interval(g):
        return float(np.exp(-g[1])), float(1.0 - np.exp(-g[0]))

    def substitution(g):
        lo, hi = feasible_interval(g)
        return np.array([min(max(0.5 * (lo + hi), 0.0), 1.0)])

    def proper(pi):
        pi = np.asarray(pi, dtype=float)
        return _safe_neg_log(pi)

    def entropy(pi):
        pi = np.asarray(pi, dtype=float)
        live = pi > 0
        return float(-np.sum(pi[live] * np.log(pi[live])))

    return Game(
        name="log",
        outcomes=OutcomeSpace.of(2),
        decision_kind="box",
        decision_dim=1,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=(0.0, 1.0),
        proper_loss=proper,
        membership_gap=membership_gap,
        entropy=entropy,
        feasible_interval=feasible_interval,
    )


def _log_simplex(m: int, name: str = "log") -> Game:
    def loss(dec):
        return _safe_neg_log(np.asarray(dec, dtype=float))

    def membership_gap(g):
        s = float(np.sum(np.exp(-np.where(np.isinf(g), np.inf, g))))
        return -np.inf if s == 0.0 else float(np.log(s))

    def substitution(g):
        q = np.exp(-np.where(np.isinf(g), np.inf, np.asarray(g, dtype=float)))
        s = q.sum()
        if s == 0.0:
            return np.full(m, 1.0 / m)
        return q / s

    def entropy(pi):
        pi = np.asarray(pi, dtype=float)
        live = pi > 0
        return float(-np.sum(pi[live] * np.log(pi[live])))

    return Game(
        name=name,
        outcomes=OutcomeSpace.of(m),
        decision_kind="simplex",
        decision_dim=m,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=(0.0, 1.0),
        proper_loss=loss,
        membership_gap=membership_gap,
        entropy=entropy,
    )


def _square_binary() -> Game:
    def loss(dec):
        dec = np.asarray(dec, dtype=float)
        batched = dec.ndim == 2
        p = dec[:, 0] if batched else np.atleast_1d(dec)
        return _stack_binary(p**2, (1.0 - p) ** 2, batched)

    def membership_gap(g):
        g0, g1 = float(g[0]), float(g[1])
        if np.isinf(g0) and np.isinf(g1):
            return -np.inf
        p = min(max(0.5 * (1.0 + g0 - g1), 0.0), 1.0)
        return float(max(p**2 - g0, (1.0 - p) ** 2 - g1))

    def feasible_interval(g):
        return float(1.0 - np.sqrt(g[1])), float(np.sqrt(g[0]))

    def substitution(g):
        lo, hi = feasible_interval(g)
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        return np.array([min(max(0.5 * (lo + hi), 0.0), 1.0)])

    def proper(pi):
        pi = np.asarray(pi, dtype=float)
        p = pi[..., 1]
        return np.stack([p**2, (1.0 - p) ** 2], axis=-1)

    def entropy(pi):
        p = float(np.asarray(pi, dtype=float)[1])
        return p * (1.0 - p)

    return Game(
        name="square",
        outcomes=OutcomeSpace.of(2),
        decision_kind="box",
        decision_dim=1,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=(0.0, 2.0),
        proper_loss=proper,
        membership_gap=membership_gap,
        entropy=entropy,
        feasible_interval=feasible_interval,
    )


def _absolute_binary() -> Game:
    def loss(dec):
        dec = np.asarray(dec, dtype=float)
        batched = dec.ndim == 2
        p = dec[:, 0] if batched else np.atleast_1d(dec)
        return _stack_binary(p, 1.0 - p, batched)

    def membership_gap(g):
        g0, g1 = float(g[0]), float(g[1])
        if np.isinf(g0) and np.isinf(g1):
            return -np.inf
        p = min(max(0.5 * (1.0 + g0 - g1), 0.0), 1.0)
        return float(max(p - g0, 1.0 - p - g1))

    def feasible_interval(g):
        return float(1.0 - g[1]), float(g[0])

    def substitution(g):
        lo, hi = feasible_interval(g)
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        return np.array([min(max(0.5 * (lo + hi), 0.0), 1.0)])

    def hull_gap(g, eta):
        # exp(-eta * Sigma) has convex hull {u + v <= 1 + e^(-eta)} in the
        # unit square, so hull membership is a one-line test.
        beta = np.exp(-eta)
        s = float(np.sum(np.exp(-eta * np.where(np.isinf(g), np.inf, g))))
        return -np.inf if s == 0.0 else float(np.log(s / (1.0 + beta)) / eta)

    def hull_proper(pi, eta):
        # argmin of the expected loss over the hull boundary; clipping keeps
        # the curve parameter inside [e^(-eta), 1].
        beta = np.exp(-eta)
        u = np.clip(np.asarray(pi, dtype=float) * (1.0 + beta), beta, 1.0)
        return -np.log(u) / eta

    def boundary_proper(pi, c, eta):
        # radial projection of the hull point onto {x + y = 1}: both
        # coordinates sit in [0, 1] and their sum is at least 1/c, so the
        # scaling 1/(g0 + g1) is the projection's R(g)
        g = hull_proper(pi, eta)
        if g.ndim == 2:
            return g / g.sum(axis=1, keepdims=True)
        return g / g.sum()

    def entropy(pi):
        p = float(np.asarray(pi, dtype=float)[1])
        return min(p, 1.0 - p)

    return Game(
        name="absolute",
        outcomes=OutcomeSpace.of(2),
        decision_kind="box",
        decision_dim=1,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=None,
        proper_loss=None,
        membership_gap=membership_gap,
        hull_membership_gap=hull_gap,
        hull_proper_loss=hull_proper,
        boundary_proper_loss=boundary_proper,
        entropy=entropy,
        feasible_interval=feasible_interval,
    )


def _brier(m: int) -> Game:
    eye = np.eye(m)

    def loss(dec):
        # sum_o (delta_w(o) - pi(o))^2, kept in this exact form so vertex
        # evaluations of the simplex extension agree bit for bit
        pi = np.asarray(dec, dtype=float)
        if pi.ndim == 2:
            return np.sum((pi[:, None, :] - eye[None, :, :]) ** 2, axis=-1)
        return np.sum((pi[None, :] - eye) ** 2, axis=-1)

    def membership_gap(g):
        g = np.asarray(g, dtype=float)
        finite = np.isfinite(g)
        if not finite.any():
            return -np.inf
        if m == 2:
            g0, g1 = g
            p = min(max(0.25 * (2.0 + g0 - g1), 0.0), 1.0)
            lv = np.array([2.0 * p**2, 2.0 * (1.0 - p) ** 2])
            return float(np.max((lv - g)[finite]))
        idx = np.flatnonzero(finite)

        def objective(x):
            return x[-1]

        def jac(x):
            grad = np.zeros(m + 1)
            grad[-1] = 1.0
            return grad

        cons = [{"type": "eq", "fun": lambda x: np.sum(x[:m]) - 1.0}]
        for w in idx:
            cons.append(
                {
                    "type": "ineq",
                    # t - (||pi - e_w||^2 - g_w) >= 0
                    "fun": lambda x, w=w: x[-1]
                    - (np.sum(x[:m] ** 2) - 2.0 * x[w] + 1.0 - g[w]),
                }
            )
        x0 = np.concatenate([np.full(m, 1.0 / m), [1.0]])
        bounds = [(0.0, 1.0)] * m + [(None, None)]
        res = optimize.minimize(
            objective,
            x0,
            jac=jac,
            bounds=bounds,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": 300, "ftol": 1e-14},
        )
        pi = np.clip(res.x[:m], 0.0, None)
        pi = pi / pi.sum()
        lv = loss(pi)
        return float(np.max((lv - g)[finite]))

    def substitution(g):
        g = np.asarray(g, dtype=float)
        if np.all(np.isfinite(g)):
            # invert the standard form: g = 1 - 2 pi + ||pi||^2
            s = (2.0 - m + g.sum()) / m
            pi = 0.5 * (1.0 + s - g)
            if np.all(pi >= -1e-12):
                pi = np.clip(pi, 0.0, None)
                pi = pi / pi.sum()
                if np.all(loss(pi) <= g + 1e-9):
                    return pi
        finite = np.isfinite(g)

        def worst(pi):
            lv = loss(pi)
            return float(np.max((lv - g)[finite])) if finite.any() else -1.0

        res = optimize.minimize(
            lambda x: worst(np.clip(x, 0.0, None) / np.clip(x, 0.0, None).sum()),
            np.full(m, 1.0 / m),
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        pi = np.clip(res.x, 0.0, None)
        return pi / pi.sum()

    def entropy(pi):
        pi = np.asarray(pi, dtype=float)
        return float(1.0 - np.sum(pi**2))

    return Game(
        name="brier",
        outcomes=OutcomeSpace.of(m),
        decision_kind="simplex",
        decision_dim=m,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=(0.0, 1.0),
        proper_loss=loss,
        membership_gap=membership_gap,
        entropy=entropy,
    )


def _hellinger(m: int) -> Game:
    # 0.5 * sum_o (sqrt(delta) - sqrt(pi))^2 collapses to 1 - sqrt(pi(omega))
    def loss(dec):
        return 1.0 - np.sqrt(np.asarray(dec, dtype=float))

    def membership_gap(g):
        g = np.asarray(g, dtype=float)
        if not np.isfinite(g).any():
            return -np.inf

        def mass(t):
            return float(np.sum(np.clip(1.0 - g - t, 0.0, None) ** 2))

        lo, hi = -1.0, 1.0
        if mass(lo) < 1.0:
            return -1.0  # even shifting down by the full range stays feasible
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if mass(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        return float(hi)

    def substitution(g):
        g = np.asarray(g, dtype=float)
        a = np.clip(1.0 - g, 0.0, None) ** 2
        slack = 1.0 - a.sum()
        if slack < 0:
            a = a / a.sum()
            slack = 0.0
        return a + slack / m

    def proper(pi):
        pi = np.asarray(pi, dtype=float)
        norm = np.sqrt(np.sum(pi**2, axis=-1, keepdims=True))
        return 1.0 - pi / norm

    def entropy(pi):
        pi = np.asarray(pi, dtype=float)
        return float(1.0 - np.sqrt(np.sum(pi**2)))

    return Game(
        name="hellinger",
        outcomes=OutcomeSpace.of(m),
        decision_kind="simplex",
        decision_dim=m,
        loss=loss,
        substitution=substitution,
        eta_mixable_range=None,
        proper_loss=proper,
        membership_gap=membership_gap,
        entropy=entropy,
    )


def builtin_game(name: str, m: int) -> Game:
    """Construct one of the built-in games over ``m`` outcomes."""
    if name == "log":
        if m == 2:
            return _log_binary()
        if m > 2:
            return _log_simplex(m)
    elif name == "kl":
        if m >= 2:
            return _log_simplex(m, name="kl")
    elif name == "square":
        if m == 2:
            return _square_binary()
    elif name == "absolute":
        if m == 2:
            return _absolute_binary()
    elif name == "brier":
        if m >= 2:
            return _brier(m)
    elif name == "hellinger":
        if m >= 2:
            return _hellinger(m)
    else:
        raise ValueError(f"unknown game {name!r}; choose from {BUILTIN_GAMES}")
    raise ValueError(f"unsupported pair: game {name!r} with m={m}")


def realizability_constant(game: str, eta: float) -> float:
    """Smallest scaling constant printed for the absolute-loss game:
    ``eta / (2 ln(2 / (1 + e^-eta)))``."""
    if game != "absolute":
        raise ValueError(f"no realizability constant known for game {game!r}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return float(eta / (2.0 * np.log(2.0 / (1.0 + np.exp(-eta)))))


# ---------------------------------------------------------------------------
# Generalized entropy and proper losses


@dataclass(frozen=True, eq=False)
class ProperLoss:
    """A loss map ``pi -> loss vector`` proper with respect to the game's
    eta-hull.  ``domain_flag`` records whether boundary points are covered."""

    game: Game
    eta: float
    fn: Callable[[np.ndarray], np.ndarray]
    domain_flag: str = "whole-simplex"  # or "interior-only"
    label: str = ""

    def __call__(self, pi) -> np.ndarray:
        arr = np.asarray(pi, dtype=float)
        return np.asarray(self.fn(arr), dtype=float)


@dataclass(frozen=True, eq=False)
class EntropyResult:
    value: float
    exact: bool
    used_mixtures: bool


@dataclass(frozen=True, eq=False)
class EntropySurface:
    """The generalized entropy of a game as a function on the simplex:
    concave, nonnegative, with the canonical proper loss as its gradient."""

    game: Game
    eta: float
    fn: Callable[[np.ndarray], float]

    def __call__(self, pi) -> float:
        return float(self.fn(as_probs(pi)))

    def concavity_report(self, samples: int = 200, seed: int = 0) -> float:
        """Smallest value of ``H(mix) - (a H(p1) + (1-a) H(p2))`` over
        sampled triples; nonnegative (up to rounding) iff concave."""
        rng = np.random.default_rng(seed)
        m = self.game.m
        worst = np.inf
        for _ in range(samples):
            p1 = rng.dirichlet(np.ones(m))
            p2 = rng.dirichlet(np.ones(m))
            a = rng.random()
            mix = a * p1 + (1.0 - a) * p2
            worst = min(worst, self(mix) - (a * self(p1) + (1.0 - a) * self(p2)))
        return float(worst)

    def min_report(self, samples: int = 200, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        return float(min(self(rng.dirichlet(np.ones(self.game.m)))
                         for _ in range(samples)))


def entropy_surface(game: Game, eta: float, *, mixture_samples: int = 256,
                    seed: int = 0) -> EntropySurface:
    # the mixture sample set is a pure function of (game, eta, samples,
    # seed), so the surface is an exact minimum over a fixed family of
    # linear functionals and concavity holds by construction
    return EntropySurface(
        game=game, eta=eta,
        fn=lambda p: generalized_entropy(game, p, eta,
                                         mixture_samples=mixture_samples,
                                         seed=seed),
    )


def _min_expected_loss(game: Game, pi: np.ndarray) -> float:
    """Minimum of E_pi loss(dec) over the decision domain (numeric)."""
    pi = np.asarray(pi, dtype=float)

    def expect(dec):
        lv = game.loss_vector(dec)
        live = pi > 0
        if np.any(np.isinf(lv[live])):
            return np.inf
        return float(np.dot(pi[live], lv[live]))

    if game.decision_kind == "box" and game.decision_dim == 1:
        grid = np.linspace(0.0, 1.0, 513)
        vals = [expect(np.array([p])) for p in grid]
        i = int(np.argmin(vals))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        x, val = golden_min(lambda p: expect(np.array([p])), lo, hi, tol=1e-14)
        return min(val, vals[i])

    m = game.decision_dim
    cons = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0}]
    bounds = [(1e-12, 1.0)] * m
    best = np.inf
    for start in (np.full(m, 1.0 / m), np.clip(pi, 1e-9, None) / np.clip(pi, 1e-9, None).sum()):
        res = optimize.minimize(
            lambda x: expect(x),
            start,
            bounds=bounds,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": 400, "ftol": 1e-15},
        )
        # evaluate at the feasible projection so constraint drift cannot
        # produce a value below the true minimum
        x = np.clip(res.x, 1e-15, None)
        best = min(best, expect(x / x.sum()))
    return best


def _mixture_min(game: Game, pi: np.ndarray, eta: float,
                 samples: int, seed: int) -> float:
    """Sampled lower estimate of min E_pi over the eta-hull for games where
    mixability at eta is not asserted."""
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(samples):
        k = int(rng.integers(2, 6))
        if game.decision_kind == "box":
            decs = rng.random((k, game.decision_dim))
        else:
            decs = rng.dirichlet(np.ones(game.decision_dim), size=k)
        pts = [game.loss_vector(d) for d in decs]
        w = rng.dirichlet(np.ones(k))
        mix = exp_mix(pts, w, eta)
        live = pi > 0
        if np.any(np.isinf(mix[live])):
            continue
        best = min(best, float(np.dot(pi[live], mix[live])))
    return best


def generalized_entropy(game: Game, pi, eta: float, *, full_output: bool = False,
                        mixture_samples: int = 256, seed: int = 0):
    """Minimal expected loss over the eta-hull of the superprediction set.

    For eta inside the game's asserted mixable range the minimum over the
    hull equals the minimum over the decisions and the game's closed form
    (when present) is exact.  Outside that range the hull can dip below the
    decision set; the value is then the min of the decision-domain search,
    the game's hull closed form when supplied, and sampled exponential
    mixtures, and is flagged as approximate unless a closed form covered it.
    """
    p = as_probs(pi)
    mixable = game.mixable_at(eta)
    if mixable and game.entropy is not None:
        res = EntropyResult(float(game.entropy(p)), exact=True, used_mixtures=False)
        return res if full_output else res.value
    value = _min_expected_loss(game, p)
    exact = mixable
    used_mixtures = False
    if not mixable:
        if game.hull_proper_loss is not None:
            hp = game.hull_proper_loss(p, eta)
            live = p > 0
            value = min(value, float(np.dot(p[live], hp[live])))
            exact = True
        else:
            value = min(value, _mixture_min(game, p, eta, mixture_samples, seed))
            used_mixtures = True
    res = EntropyResult(float(max(value, 0.0)), exact=exact, used_mixtures=used_mixtures)
    return res if full_output else res.value


_RICHARDSON_T = (1e-3, 1e-4, 1e-5)


def _richardson(values: np.ndarray) -> np.ndarray:
    """Extrapolate f(t) -> f(0) from samples at t, t/10, t/100 assuming a
    smooth first-order error term."""
    v1 = (10.0 * values[1] - values[0]) / 9.0
    v2 = (10.0 * values[2] - values[1]) / 9.0
    return (10.0 * v2 - v1) / 9.0


def _boundary_anchor(m: int) -> np.ndarray:
    w = np.arange(m, 0, -1, dtype=float)
    return w / w.sum()


def proper_loss_from_entropy(game: Game, eta: float, *, fd_step: float = 1e-6,
                             prefer_closed_form: bool = True,
                             probe_boundary: bool = True,
                             consistency_tol: float = 1e-3) -> ProperLoss:
    """Construct the canonical proper loss as the entropy gradient.

    Interior values come from the Savage identity
    ``lambda(pi, w) = phi(pi) - sum_o pi_o phi'_o(pi) + phi'_w(pi)`` with
    central finite differences on the positively-homogeneous extension
    ``phi(x) = |x| H(x / |x|)``.  Boundary values are limits from the
    interior along two fixed approach paths, Richardson-extrapolated;
    construction raises :class:`NonExtendable` when the two paths disagree
    on a face (limits that diverge consistently count as ``inf``).
    """
    m = game.m
    if prefer_closed_form and game.proper_loss is not None:
        return ProperLoss(game=game, eta=eta, fn=game.proper_loss,
                          domain_flag="whole-simplex", label=f"{game.name}-canonical")

    def H(p: np.ndarray) -> float:
        return generalized_entropy(game, p, eta)

    def phi(x: np.ndarray) -> float:
        s = float(np.sum(x))
        if s <= 0:
            return 0.0
        return s * H(x / s)

    def savage(pi: np.ndarray) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        # truncation error scales with (h / min coordinate)^2, so the step
        # must shrink proportionally on approach paths to the boundary
        h = min(fd_step, 1e-3 * float(pi.min()))
        base = phi(pi)
        grads = np.empty(m)
        for o in range(m):
            e = np.zeros(m)
            e[o] = h
            grads[o] = (phi(pi + e) - phi(pi - e)) / (2.0 * h)
        return base - float(np.dot(pi, grads)) + grads

    uniform = np.full(m, 1.0 / m)
    anchor = _boundary_anchor(m)

    def limit_along(pi_b: np.ndarray, target: np.ndarray) -> np.ndarray:
        samples = np.stack([savage((1.0 - t) * pi_b + t * target) for t in _RICHARDSON_T])
        out = np.empty(m)
        for w in range(m):
            col = samples[:, w]
            d1, d2 = col[1] - col[0], col[2] - col[1]
            # increments below the finite-difference noise floor mean the
            # sequence has converged as far as we can resolve
            if max(abs(d1), abs(d2)) <= 1e-5 or abs(d2) <= 0.5 * abs(d1):
                # increments shrink with t: a finite limit, extrapolate
                out[w] = _richardson(col)
            elif d1 > 0 and d2 > 0:
                # increments persist while t -> 0: divergence to +inf
                # (log-divergence keeps increments constant per decade)
                out[w] = np.inf
            else:
                face = tuple(int(i) for i in np.flatnonzero(pi_b > 0))
                raise NonExtendable(
                    f"no limit at boundary point {pi_b} along path toward "
                    f"{target} (samples {col})",
                    face=face,
                    point=pi_b.copy(),
                )
        return out

    def boundary_value(pi_b: np.ndarray, *, check: bool) -> np.ndarray:
        lim_u = limit_along(pi_b, uniform)
        if not check:
            return np.maximum(lim_u, 0.0)
        lim_a = limit_along(pi_b, anchor)
        both_fin = np.isfinite(lim_u) & np.isfinite(lim_a)
        agree_inf = np.isinf(lim_u) == np.isinf(lim_a)
        if not np.all(agree_inf) or \
                np.any(np.abs(lim_u[both_fin] - lim_a[both_fin]) > consistency_tol):
            face = tuple(int(i) for i in np.flatnonzero(pi_b > 0))
            raise NonExtendable(
                f"interior limits disagree at boundary point {pi_b} "
                f"(uniform path {lim_u}, skew path {lim_a})",
                face=face,
                point=pi_b.copy(),
            )
        return np.maximum(lim_u, 0.0)

    if probe_boundary:
        supports = []
        for size in range(1, m):
            from itertools import combinations

            supports.extend(combinations(range(m), size))
        for sup in supports:
            pi_b = np.zeros(m)
            pi_b[list(sup)] = 1.0 / len(sup)
            boundary_value(pi_b, check=True)
        domain = "whole-simplex"
    else:
        domain = "interior-only"

    def fn(pi: np.ndarray) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if pi.ndim == 2:
            return np.stack([fn(row) for row in pi])
        if np.all(pi > 0):
            return np.maximum(savage(pi), 0.0)
        return boundary_value(pi, check=False)

    return ProperLoss(game=game, eta=eta, fn=fn, domain_flag=domain,
                      label=f"{game.name}-entropy-gradient")


def direct_argmin_loss(game: Game, pi, eta: float) -> np.ndarray:
    """Loss vector of the decision minimizing E_pi over the decision domain;
    the independent cross-check for the Savage-formula construction."""
    p = as_probs(pi)

    def expect(dec):
        lv = game.loss_vector(dec)
        live = p > 0
        if np.any(np.isinf(lv[live])):
            return np.inf
        return float(np.dot(p[live], lv[live]))

    if game.decision_kind == "box" and game.decision_dim == 1:
        grid = np.linspace(0.0, 1.0, 513)
        vals = [expect(np.array([x])) for x in grid]
        i = int(np.argmin(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        x, _ = golden_min(lambda t: expect(np.array([t])), lo, hi, tol=1e-14)
        return game.loss_vector(np.array([x]))
    m = game.decision_dim
    cons = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0}]
    best_dec, best_val = None, np.inf
    for start in (np.full(m, 1.0 / m), np.clip(p, 1e-9, None) / np.clip(p, 1e-9, None).sum()):
        res = optimize.minimize(
            lambda x: expect(x),
            start,
            bounds=[(1e-12, 1.0)] * m,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": 400, "ftol": 1e-15},
        )
        if float(res.fun) < best_val:
            best_val = float(res.fun)
            best_dec = res.x
    return game.loss_vector(best_dec)


# ---------------------------------------------------------------------------
# Property checkers


@dataclass(frozen=True)
class ProperReport:
    max_violation: float
    strictness: bool
    witness: tuple | None = None  # (pi, pi_prime) attaining max_violation


def _pi_grid(m: int, density: int) -> np.ndarray:
    if m == 2:
        p = np.linspace(0.0, 1.0, density)
        return np.column_stack([1.0 - p, p])
    return simplex_grid(m, density - 1)


def check_proper(proper: ProperLoss, grid_density: int = 50,
                 *, interior_margin: float = 0.0) -> ProperReport:
    """Scan E_pi lambda(pi) - E_pi lambda(pi') over a (pi, pi') grid.

    ``max_violation`` is the largest positive excess (0 for a proper loss up
    to rounding); ``strictness`` is true iff the defining inequality is
    strict at every grid pair with pi != pi'.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    m = proper.game.m
    P = _pi_grid(m, grid_density)
    if interior_margin > 0.0:
        P = interior_margin + (1.0 - m * interior_margin) * P
    L = proper(P)
    if L.shape != P.shape:
        L = np.stack([proper(row) for row in P])
    Lfin = np.where(np.isinf(L), 0.0, L)
    D = P @ Lfin.T
    has_inf = (P > 0).astype(float) @ np.isinf(L).astype(float).T
    D = np.where(has_inf > 0, np.inf, D)
    own = np.diag(D)
    finite_own = np.isfinite(own)
    diff = own[:, None] - D  # positive entries are properness violations
    with np.errstate(invalid="ignore"):
        viol = np.where(np.isinf(D) & np.isinf(own)[:, None], -np.inf, diff)
    viol = np.where(finite_own[:, None] | np.isfinite(D), viol, -np.inf)
    max_violation = float(np.nanmax(viol)) if viol.size else 0.0
    i, j = np.unravel_index(int(np.nanargmax(viol)), viol.shape)
    off = ~np.eye(len(P), dtype=bool)
    gaps = np.where(off, D - own[:, None], np.inf)
    strict = bool(np.nanmin(gaps) > 0.0)
    return ProperReport(max_violation=max_violation, strictness=strict,
                        witness=(P[i].copy(), P[j].copy()))


@dataclass(frozen=True)
class MixabilityReport:
    mixable: bool
    worst_gap: float


def check_mixability(game: Game, eta: float, samples: int = 200,
                     tol: float = 1e-6, *, seed: int = 0,
                     set_size_range: tuple[int, int] = (2, 5)) -> MixabilityReport:
    """Sample finite prediction sets and Dirichlet weights, form their
    eta-exponential mixtures, and test superprediction membership with
    c = 1.  ``worst_gap`` is the largest membership deficit seen."""
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = set_size_range
    worst = -np.inf
    for _ in range(samples):
        k = int(rng.integers(lo, hi + 1))
        if game.decision_kind == "box":
            decs = rng.random((k, game.decision_dim))
        else:
            decs = rng.dirichlet(np.ones(game.decision_dim), size=k)
        pts = [game.loss_vector(d) for d in decs]
        w = rng.dirichlet(np.ones(k))
        mix = exp_mix(pts, w, eta)
        gap = domination_gap(game, mix)
        worst = max(worst, gap)
    return MixabilityReport(mixable=bool(worst <= tol), worst_gap=float(worst))
