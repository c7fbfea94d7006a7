"""Measurement protocol: per-task score/cost under deterministic inference,
preference sweeps, and relative comparisons between reports.

Scores are reported as percentages (two decimals when rendered); costs stay
in USD at full float precision in JSON and are scaled by 1e3 only in
rendered text tables.  Aggregates are unweighted means over per-task means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import BanditEnvironment, EvalCapability
from .reward import PreferenceVector, compute_reward

DEFAULT_SWEEP_GRID = (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0)


def format_pct(value: float) -> str:
    return f"{value:.2f}"


@dataclass(frozen=True)
class TaskMetrics:
    score_pct: float
    cost_usd: float
    n_records: int


@dataclass(frozen=True)
class SweepPoint:
    w_c: float
    score_pct: float
    cost_usd: float


@dataclass
class EvaluationReport:
    per_task: dict[str, TaskMetrics]
    avg_score_pct: float
    avg_cost_usd: float
    metadata: dict = field(default_factory=dict)
    sweep: list[SweepPoint] | None = None

    @classmethod
    def from_per_task(cls, per_task: dict[str, TaskMetrics],
                      metadata: dict | None = None) -> "EvaluationReport":
        if not per_task:
            raise ValueError("report needs at least one task")
        scores = [m.score_pct for m in per_task.values()]
        costs = [m.cost_usd for m in per_task.values()]
        return cls(per_task=dict(sorted(per_task.items())),
                   avg_score_pct=float(np.mean(scores)),
                   avg_cost_usd=float(np.mean(costs)),
                   metadata=metadata or {})

    def to_dict(self) -> dict:
        out = {
            "per_task": {
                task: {"score_pct": m.score_pct, "cost_usd": m.cost_usd,
                       "n_records": m.n_records}
                for task, m in self.per_task.items()
            },
            "avg_score_pct": self.avg_score_pct,
            "avg_cost_usd": self.avg_cost_usd,
            "metadata": self.metadata,
        }
        if self.sweep is not None:
            out["sweep"] = [{"w_c": p.w_c, "score_pct": p.score_pct, "cost_usd": p.cost_usd}
                            for p in self.sweep]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "EvaluationReport":
        per_task = {
            task: TaskMetrics(score_pct=float(m["score_pct"]), cost_usd=float(m["cost_usd"]),
                              n_records=int(m.get("n_records", 0)))
            for task, m in payload["per_task"].items()
        }
        sweep = None
        if "sweep" in payload:
            sweep = [SweepPoint(float(p["w_c"]), float(p["score_pct"]), float(p["cost_usd"]))
                     for p in payload["sweep"]]
        return cls(per_task=per_task, avg_score_pct=float(payload["avg_score_pct"]),
                   avg_cost_usd=float(payload["avg_cost_usd"]),
                   metadata=payload.get("metadata", {}), sweep=sweep)

    def csv_rows(self, w_c: float | None = None) -> list[tuple]:
        """Flat rows (task, w_c, score_pct, cost_usd) for plotting."""
        rows = []
        for task, m in self.per_task.items():
            rows.append((task, w_c, m.score_pct, m.cost_usd))
        rows.append(("all", w_c, self.avg_score_pct, self.avg_cost_usd))
        return rows


def render_text_table(report: EvaluationReport) -> str:
    """Human-readable view; cost shown x1e3 for readability."""
    lines = [f"{'task':<24} {'score (%)':>10} {'cost (x1e-3 USD)':>18}"]
    for task, m in report.per_task.items():
        lines.append(f"{task:<24} {format_pct(m.score_pct):>10} {m.cost_usd * 1e3:>18.4f}")
    lines.append(f"{'avg':<24} {format_pct(report.avg_score_pct):>10} "
                 f"{report.avg_cost_usd * 1e3:>18.4f}")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# deterministic evaluation
# ----------------------------------------------------------------------

def decisions_for(policy, env: BanditEnvironment, preference: PreferenceVector) -> np.ndarray:
    """Deterministic per-record arm choices from anything with decide()."""
    return np.array([policy.decide(env.embedding(i), preference)
                     for i in range(env.n_records)], dtype=np.int64)


def oracle_decisions(env: BanditEnvironment, preference: PreferenceVector,
                     capability: EvalCapability) -> np.ndarray:
    """Brute-force best arm per record by exhaustive reward comparison."""
    picks = np.empty(env.n_records, dtype=np.int64)
    for i in range(env.n_records):
        outcomes = env.full_outcomes(i, capability)
        rewards = [compute_reward(preference, oc, env.reward_spec) for oc in outcomes]
        picks[i] = int(np.argmax(rewards))
    return picks


def evaluate_decisions(decisions: np.ndarray, env: BanditEnvironment,
                       capability: EvalCapability,
                       metadata: dict | None = None) -> EvaluationReport:
    """Score fixed per-record choices against the full-information rows."""
    if len(decisions) != env.n_records:
        raise ValueError(f"got {len(decisions)} decisions for {env.n_records} records")
    by_task: dict[str, list[tuple[float, float]]] = {}
    for i in range(env.n_records):
        outcome = env.full_outcomes(i, capability)[int(decisions[i])]
        by_task.setdefault(env.task_id(i), []).append((outcome.score, outcome.cost))
    per_task = {
        task: TaskMetrics(
            score_pct=float(np.mean([s for s, _ in pairs])) * 100.0,
            cost_usd=float(np.mean([c for _, c in pairs])),
            n_records=len(pairs),
        )
        for task, pairs in by_task.items()
    }
    return EvaluationReport.from_per_task(per_task, metadata=metadata)


def evaluate(policy, env: BanditEnvironment, preference: PreferenceVector,
             capability: EvalCapability, metadata: dict | None = None) -> EvaluationReport:
    """Deterministic-inference report for one preference setting."""
    meta = dict(metadata or {})
    meta.setdefault("w_c", preference.w_c)
    meta.setdefault("split", env.split)
    return evaluate_decisions(decisions_for(policy, env, preference), env, capability, meta)


def mean_realized_reward(policy, env: BanditEnvironment, preference: PreferenceVector,
                         capability: EvalCapability) -> float:
    """Mean preference-weighted reward of the deterministic choices."""
    decisions = decisions_for(policy, env, preference)
    total = 0.0
    for i in range(env.n_records):
        outcome = env.full_outcomes(i, capability)[int(decisions[i])]
        total += compute_reward(preference, outcome, env.reward_spec)
    return total / env.n_records


def sweep_preferences(policy, env: BanditEnvironment, grid, capability: EvalCapability,
                      metadata: dict | None = None) -> list[SweepPoint]:
    """Evaluate at w = (1 - w_c, w_c) for each grid value; sorted by w_c."""
    grid = [float(g) for g in grid]
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError(f"grid values must lie in [0, 1], got {grid}")
    points = []
    for w_c in sorted(grid):
        report = evaluate(policy, env, PreferenceVector.from_cost_weight(w_c),
                          capability, metadata)
        points.append(SweepPoint(w_c=w_c, score_pct=report.avg_score_pct,
                                 cost_usd=report.avg_cost_usd))
    return points


# ----------------------------------------------------------------------
# relative comparisons
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CompareResult:
    score_improvement_pct: float
    cost_reduction_pct: float

    def rendered(self) -> dict:
        return {
            "score_improvement_pct": format_pct(self.score_improvement_pct),
            "cost_reduction_pct": format_pct(self.cost_reduction_pct),
        }


def relative_deltas(score_ref: float, score_cand: float,
                    cost_ref: float, cost_cand: float) -> CompareResult:
    """Score improvement and cost reduction of a candidate vs. a reference."""
    if score_ref == 0.0 or cost_ref == 0.0:
        raise ValueError("reference score and cost must be nonzero")
    return CompareResult(
        score_improvement_pct=(score_cand - score_ref) / score_ref * 100.0,
        cost_reduction_pct=(cost_ref - cost_cand) / cost_ref * 100.0,
    )


def compare(reference: EvaluationReport, candidate: EvaluationReport) -> CompareResult:
    """Relative deltas between two reports covering the same tasks."""
    if set(reference.per_task) != set(candidate.per_task):
        raise ValueError(
            f"task coverage differs: {sorted(reference.per_task)} vs {sorted(candidate.per_task)}"
        )
    return relative_deltas(reference.avg_score_pct, candidate.avg_score_pct,
                           reference.avg_cost_usd, candidate.avg_cost_usd)
