"""Scenario execution with the protocol move order (experts, Learner,
Reality, loss updates), JSONL trajectory logging, and CSV summaries.

Every run is a pure function of its config: randomness flows from one
``SeedSequence`` (child 0 -> experts, one grandchild each; child 1 ->
reality), and records are serialized with a fixed key order, so identical
configs produce byte-identical JSONL.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..aggregating import (aa_propose, aa_start, aa_step, log_semi_invariant,
                            theorem_bound_margins)
from ..core import Game
from ..defensive import (
    dfa_bound_margins,
    dfa_propose,
    dfa_start,
    dfa_step,
)
from ..errors import ConfigError
from ..extensions import (
    EvaluatedExpert,
    brier_simplex,
    kl_simplex,
    ml_bound_margins,
    ml_dfa_start,
    ml_dfa_step,
    simplex_bound_margins,
    simplex_dfa_start,
    simplex_dfa_step,
)
from ..losses import builtin_game
from ..secondguess import sg_aa_step, sg_dfa_step
from .config import ScenarioConfig
from .strategies import build_reality, build_sg_expert, build_standard_expert

RECORD_KEYS = (
    "step",
    "advice",
    "learner_pi",
    "learner_decision",
    "outcome",
    "learner_loss",
    "expert_losses",
    "cumulative_learner_loss",
    "cumulative_expert_losses",
    "log_supermartingale",
    "slack",
    "slack_total",
    "bound_margins",
)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and np.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


@dataclass
class StepRecord:
    step: int
    advice: list
    learner_pi: list | None
    learner_decision: list
    outcome: object
    learner_loss: object
    expert_losses: list
    cumulative_learner_loss: object
    cumulative_expert_losses: list
    log_supermartingale: float
    slack: float
    slack_total: float
    bound_margins: list

    def to_obj(self) -> dict:
        data = {"type": "step"}
        for key in RECORD_KEYS:
            data[key] = _jsonable(getattr(self, key))
        return data


@dataclass
class RunResult:
    config: ScenarioConfig
    records: list[StepRecord]
    summary: dict

    @property
    def bound_ok(self) -> bool:
        return bool(self.summary.get("bound_ok", False))


def _spawn_rngs(seed: int, k: int):
    root = np.random.SeedSequence(seed)
    ss_experts, ss_reality = root.spawn(2)
    expert_rngs = [np.random.Generator(np.random.PCG64(s))
                   for s in ss_experts.spawn(k)] if k else []
    reality_rng = np.random.Generator(np.random.PCG64(ss_reality))
    return expert_rngs, reality_rng


def _prior(config: ScenarioConfig, k: int) -> np.ndarray:
    if config.prior is None:
        return np.full(k, 1.0 / k)
    prior = np.asarray(config.prior, dtype=float)
    if prior.shape != (k,):
        raise ConfigError(f"prior of length {len(prior)} for {k} experts")
    return prior


def _binary_pi_from_decision(game: Game, decision: np.ndarray) -> list | None:
    if game.m == 2 and game.decision_kind == "box":
        p = float(decision[0])
        return [1.0 - p, p]
    if game.decision_kind == "simplex":
        return [float(v) for v in decision]
    return None


def _evaluator_specs(config: ScenarioConfig):
    from ..defensive import default_proper_loss

    specs = []
    for ev in config.evaluators or []:
        game = builtin_game(ev["loss"], config.m)
        eta = float(ev.get("eta", 1.0))
        c = float(ev.get("c", 1.0))
        specs.append((default_proper_loss(game, c, eta), c, eta, ev["loss"]))
    return specs


def run_scenario(config: ScenarioConfig) -> RunResult:
    """Execute a scenario and return its trajectory plus summary."""
    algo = config.algorithm
    if algo in ("aa", "dfa", "sg-dfa", "sg-aa", "simplex-dfa"):
        game = builtin_game(config.game, config.m)
    else:
        game = builtin_game(config.game, config.m)  # base game for evaluators
    k = len(config.experts)
    if k == 0:
        raise ConfigError("scenario needs at least one expert")
    expert_rngs, reality_rng = _spawn_rngs(config.seed, k)
    reality = build_reality(config.reality, config.m, reality_rng)
    eps = float(config.solver["epsilon"])
    tol = float(config.solver["tol"])

    if algo in ("sg-dfa", "sg-aa") and reality.depends_on_prediction:
        raise ConfigError("adversarial reality is not wired for sg algorithms")

    records: list[StepRecord] = []
    outcomes: list = []
    max_margin = -np.inf
    worst_step = -1

    def track(margins: list[float], step: int) -> None:
        nonlocal max_margin, worst_step
        m = max(margins) if margins else -np.inf
        if m > max_margin:
            max_margin = m
            worst_step = step

    if algo == "aa":
        prior = _prior(config, k)
        state = aa_start(game, eta=config.eta, c=config.c, prior=prior)
        strategies = [build_standard_expert(game, s, r)
                      for s, r in zip(config.experts, expert_rngs)]
        for n in range(config.horizon):
            decisions = [s.advise(n, outcomes) for s in strategies]
            A = np.asarray(game.loss(np.stack(decisions)), dtype=float)
            if reality.depends_on_prediction:
                dec, _g = aa_propose(state, A)
                w = reality.pick(n, game.loss_vector(dec))
                dec, state = aa_step(state, A, w)
            else:
                w = reality.pick(n, None)
                dec, state = aa_step(state, A, w)
            lv = game.loss_vector(dec)
            outcomes.append(w)
            margins = list(theorem_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[list(map(float, d)) for d in decisions],
                learner_pi=_binary_pi_from_decision(game, dec),
                learner_decision=[float(v) for v in dec],
                outcome=w,
                learner_loss=float(lv[w]),
                expert_losses=[float(v) for v in A[:, w]],
                cumulative_learner_loss=state.cumulative_loss,
                cumulative_expert_losses=list(state.per_expert_loss),
                log_supermartingale=log_semi_invariant(state),
                slack=0.0,
                slack_total=0.0,
                bound_margins=margins,
            ))
        final_learner = state.cumulative_loss
        final_experts = list(state.per_expert_loss)
        slack_allowance = 0.0
        constants = [{"c": config.c, "eta": config.eta, "prior": float(prior[t])}
                     for t in range(k)]

    elif algo == "dfa":
        prior = _prior(config, k)
        state = dfa_start(game, eta=config.eta, c=config.c, prior=prior)
        strategies = [build_standard_expert(game, s, r)
                      for s, r in zip(config.experts, expert_rngs)]
        for n in range(config.horizon):
            decisions = [s.advise(n, outcomes) for s in strategies]
            A = np.asarray(game.loss(np.stack(decisions)), dtype=float)
            if reality.depends_on_prediction:
                dec, pi, lam, _s = dfa_propose(state, A, epsilon=eps, tol=tol)
                w = reality.pick(n, game.loss_vector(dec))
            else:
                w = reality.pick(n, None)
            dec, state, slack = dfa_step(state, A, w, epsilon=eps, tol=tol)
            lv = game.loss_vector(dec)
            pi_rec = _binary_pi_from_decision(game, dec)
            outcomes.append(w)
            margins = list(dfa_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[list(map(float, d)) for d in decisions],
                learner_pi=pi_rec,
                learner_decision=[float(v) for v in dec],
                outcome=w,
                learner_loss=float(lv[w]),
                expert_losses=[float(v) for v in A[:, w]],
                cumulative_learner_loss=state.cumulative_loss,
                cumulative_expert_losses=list(state.per_expert_loss),
                log_supermartingale=state.log_value,
                slack=slack,
                slack_total=state.slack_log_total,
                bound_margins=margins,
            ))
        final_learner = state.cumulative_loss
        final_experts = list(state.per_expert_loss)
        slack_allowance = (config.c / config.eta) * state.slack_log_total
        constants = [{"c": config.c, "eta": config.eta, "prior": float(prior[t])}
                     for t in range(k)]

    elif algo == "sg-dfa":
        prior = _prior(config, k)
        state = dfa_start(game, eta=config.eta, c=config.c, prior=prior)
        experts = [build_sg_expert(game, s) for s in config.experts]
        for n in range(config.horizon):
            w = reality.pick(n, None)
            gamma, state, slack = sg_dfa_step(state, experts, w,
                                              epsilon=eps, tol=tol)
            outcomes.append(w)
            dec = np.asarray(game.substitution(gamma), dtype=float)
            realized = [float(ex(gamma)[w]) for ex in experts]
            margins = list(dfa_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[[float(v) for v in ex(gamma)] for ex in experts],
                learner_pi=_binary_pi_from_decision(game, dec),
                learner_decision=[float(v) for v in gamma],
                outcome=w,
                learner_loss=float(gamma[w]),
                expert_losses=realized,
                cumulative_learner_loss=state.cumulative_loss,
                cumulative_expert_losses=list(state.per_expert_loss),
                log_supermartingale=state.log_value,
                slack=slack,
                slack_total=state.slack_log_total,
                bound_margins=margins,
            ))
        final_learner = state.cumulative_loss
        final_experts = list(state.per_expert_loss)
        slack_allowance = (config.c / config.eta) * state.slack_log_total
        constants = [{"c": config.c, "eta": config.eta, "prior": float(prior[t])}
                     for t in range(k)]

    elif algo == "sg-aa":
        prior = _prior(config, k)
        state = aa_start(game, eta=config.eta, c=config.c, prior=prior)
        experts = [build_sg_expert(game, s) for s in config.experts]
        for n in range(config.horizon):
            w = reality.pick(n, None)
            gamma, state = sg_aa_step(state, experts, w, tol=tol)
            outcomes.append(w)
            realized = [float(ex(gamma)[w]) for ex in experts]
            margins = list(theorem_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[[float(v) for v in ex(gamma)] for ex in experts],
                learner_pi=None,
                learner_decision=[float(v) for v in gamma],
                outcome=w,
                learner_loss=float(gamma[w]),
                expert_losses=realized,
                cumulative_learner_loss=state.cumulative_loss,
                cumulative_expert_losses=list(state.per_expert_loss),
                log_supermartingale=log_semi_invariant(state),
                slack=0.0,
                slack_total=0.0,
                bound_margins=margins,
            ))
        final_learner = state.cumulative_loss
        final_experts = list(state.per_expert_loss)
        slack_allowance = 0.0
        constants = [{"c": config.c, "eta": config.eta, "prior": float(prior[t])}
                     for t in range(k)]

    elif algo == "ml-dfa":
        specs = _evaluator_specs(config)
        n_specs = len(specs)
        evaluators = []
        total = n_specs * k
        for proper, c_t, eta_t, loss_name in specs:
            for j in range(k):
                evaluators.append(EvaluatedExpert(
                    proper=proper, c=c_t, eta=eta_t, prior=1.0 / total,
                    name=f"{loss_name}#{j}",
                ))
        state = ml_dfa_start(evaluators, config.m, verify=True)
        strategies = [build_standard_expert(game, s, r)
                      for s, r in zip(config.experts, expert_rngs)]
        for n in range(config.horizon):
            base = [s.advise(n, outcomes) for s in strategies]
            base_pi = [np.array([1.0 - d[0], d[0]]) if game.decision_kind == "box"
                       else np.asarray(d, dtype=float) for d in base]
            advice = [base_pi[j % k] for j in range(total)]
            w = reality.pick(n, None)
            pi, state, slack = ml_dfa_step(state, advice, w, epsilon=eps, tol=tol)
            outcomes.append(w)
            margins = list(ml_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[[float(v) for v in a] for a in advice],
                learner_pi=[float(v) for v in pi],
                learner_decision=[float(v) for v in pi],
                outcome=w,
                learner_loss=[float(e.proper(pi)[w]) for e in state.experts],
                expert_losses=[float(e.proper(a)[w])
                               for e, a in zip(state.experts, advice)],
                cumulative_learner_loss=list(state.learner_losses),
                cumulative_expert_losses=list(state.expert_losses),
                log_supermartingale=state.log_value,
                slack=slack,
                slack_total=state.slack_log_total,
                bound_margins=margins,
            ))
        final_learner = list(state.learner_losses)
        final_experts = list(state.expert_losses)
        slack_allowance = state.slack_log_total
        constants = [{"c": e.c, "eta": e.eta, "prior": e.prior}
                     for e in state.experts]

    elif algo == "simplex-dfa":
        if config.game == "brier":
            sg = brier_simplex(config.m)
        elif config.game == "kl":
            sg = kl_simplex(config.m)
        else:
            raise ConfigError(f"no simplex extension for game {config.game!r}")
        prior = _prior(config, k)
        state = simplex_dfa_start(sg, eta=config.eta, c=config.c, prior=prior,
                                  verify=True)
        strategies = [build_standard_expert(sg.base, s, r)
                      for s, r in zip(config.experts, expert_rngs)]
        for n in range(config.horizon):
            decisions = [s.advise(n, outcomes) for s in strategies]
            p = reality.pick(n, None)
            dec, state, slack = simplex_dfa_step(state, decisions, p,
                                                 epsilon=eps, tol=tol)
            outcomes.append(p)
            inst_learner = sg.loss_on_simplex(dec, p)
            margins = list(simplex_bound_margins(state))
            track(margins, n)
            records.append(StepRecord(
                step=n,
                advice=[[float(v) for v in d] for d in decisions],
                learner_pi=[float(v) for v in dec],
                learner_decision=[float(v) for v in dec],
                outcome=[float(v) for v in p],
                learner_loss=float(inst_learner),
                expert_losses=[float(sg.loss_on_simplex(d, p)) for d in decisions],
                cumulative_learner_loss=state.cumulative_loss,
                cumulative_expert_losses=list(state.per_expert_loss),
                log_supermartingale=state.log_value,
                slack=slack,
                slack_total=state.slack_log_total,
                bound_margins=margins,
            ))
        final_learner = state.cumulative_loss
        final_experts = list(state.per_expert_loss)
        slack_allowance = (config.c / config.eta) * state.slack_log_total
        constants = [{"c": config.c, "eta": config.eta, "prior": float(prior[t])}
                     for t in range(k)]

    else:
        raise ConfigError(f"unknown algorithm {algo!r}")

    summary = {
        "name": config.name,
        "algorithm": algo,
        "game": config.game,
        "m": config.m,
        "horizon": config.horizon,
        "seed": config.seed,
        "final_learner_loss": _jsonable(final_learner),
        "final_expert_losses": _jsonable(final_experts),
        "bound_constants": constants,
        "slack_allowance": _jsonable(slack_allowance),
        "max_bound_margin": _jsonable(max_margin if records else 0.0),
        "worst_margin_step": worst_step,
        "bound_ok": bool((max_margin if records else 0.0) <= 1e-7),
        "expected_failure": False,
    }
    return RunResult(config=config, records=records, summary=summary)


# ---------------------------------------------------------------------------
# Serialization


def trajectory_lines(result: RunResult) -> list[str]:
    meta = {"type": "meta", "format_version": 1,
            "config": result.config.to_jsonable()}
    lines = [json.dumps(meta, separators=(",", ":"))]
    for rec in result.records:
        lines.append(json.dumps(rec.to_obj(), separators=(",", ":")))
    return lines


def write_outputs(result: RunResult, out_dir: str | Path,
                  fmt: str = "both") -> dict[str, Path]:
    """Write the JSONL trajectory and/or CSV summary; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    name = result.config.name
    if fmt in ("jsonl", "both"):
        path = out / f"{name}.jsonl"
        path.write_text("\n".join(trajectory_lines(result)) + "\n")
        paths["jsonl"] = path
    if fmt in ("csv", "both"):
        path = out / f"{name}_summary.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "prior", "c", "eta", "final_expert_loss",
                             "final_learner_loss", "slack_allowance",
                             "max_bound_margin", "bound_ok"])
            consts = result.summary["bound_constants"]
            fl = result.summary["final_learner_loss"]
            fe = result.summary["final_expert_losses"]
            for t, cst in enumerate(consts):
                learner_t = fl[t] if isinstance(fl, list) else fl
                writer.writerow([
                    t, cst["prior"], cst["c"], cst["eta"], fe[t], learner_t,
                    result.summary["slack_allowance"],
                    result.summary["max_bound_margin"],
                    result.summary["bound_ok"],
                ])
        paths["csv"] = path
    return paths
