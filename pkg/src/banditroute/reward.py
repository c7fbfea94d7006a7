"""Core problem-setting types and the preference-weighted reward.

A routing round observes a context (prompt embedding + user preference),
picks one arm (candidate LLM), and receives that arm's outcome: a score in
[0, 1] and a cost in USD.  The scalar reward blends the two according to
the preference, with cost normalized against a cap ``tau`` so that both
objectives live on comparable scales:

    reward = w_q * score - w_c * min(cost / tau, 1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True)
class PreferenceVector:
    """User trade-off (w_q, w_c) on the 1-simplex: weight on score vs. cost."""

    w_q: float
    w_c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.w_q) and math.isfinite(self.w_c)):
            raise ValueError("preference weights must be finite")
        if self.w_q < 0.0 or self.w_c < 0.0:
            raise ValueError(f"preference weights must be >= 0, got ({self.w_q}, {self.w_c})")
        if abs(self.w_q + self.w_c - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"preference weights must sum to 1, got {self.w_q + self.w_c!r}")

    @classmethod
    def from_cost_weight(cls, w_c: float) -> "PreferenceVector":
        """Build (1 - w_c, w_c); the complement is computed, never re-derived."""
        w_c = float(w_c)
        return cls(1.0 - w_c, w_c)

    @classmethod
    def balanced(cls) -> "PreferenceVector":
        return cls(0.5, 0.5)

    def as_array(self) -> np.ndarray:
        return np.array([self.w_q, self.w_c], dtype=np.float64)


@dataclass(frozen=True)
class Arm:
    """One candidate LLM."""

    arm_id: str
    name: str = ""


@dataclass(frozen=True)
class ArmSet:
    """Ordered, immutable set of arms; list position is the action index."""

    arms: tuple[Arm, ...]

    def __post_init__(self) -> None:
        if len(self.arms) < 2:
            raise ValueError(f"need at least 2 arms, got {len(self.arms)}")
        ids = [a.arm_id for a in self.arms]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate arm ids: {ids}")

    @classmethod
    def from_ids(cls, ids: list[str] | tuple[str, ...]) -> "ArmSet":
        return cls(tuple(Arm(i, i) for i in ids))

    @property
    def k(self) -> int:
        return len(self.arms)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(a.arm_id for a in self.arms)

    def index_of(self, arm_id: str) -> int:
        for i, a in enumerate(self.arms):
            if a.arm_id == arm_id:
                return i
        raise KeyError(arm_id)


@dataclass(frozen=True)
class Outcome:
    """Observed result of routing one prompt to one arm."""

    score: float
    cost: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and math.isfinite(self.cost)):
            raise ValueError(f"outcome must be finite, got ({self.score}, {self.cost})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.cost < 0.0:
            raise ValueError(f"cost must be >= 0, got {self.cost}")


@dataclass(frozen=True)
class RewardSpec:
    """Reward configuration: ``tau`` is the cost cap in USD."""

    tau: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.tau) or self.tau <= 0.0:
            raise ValueError(f"tau must be a positive finite number, got {self.tau}")


@dataclass(frozen=True)
class Context:
    """What the router sees before acting: embedding plus preference."""

    embedding: np.ndarray
    preference: PreferenceVector
    prompt_id: str = ""
    task_id: str = ""


def normalize_cost(cost: float, spec: RewardSpec) -> float:
    """Map a USD cost to [0, 1]: cost / tau, capped at 1."""
    if cost < 0.0 or not math.isfinite(cost):
        raise ValueError(f"cost must be finite and >= 0, got {cost}")
    return min(cost / spec.tau, 1.0)


def compute_reward(preference: PreferenceVector, outcome: Outcome, spec: RewardSpec) -> float:
    """Preference-weighted reward: w_q * score - w_c * normalized cost.

    Always lies in [-1, 1] for valid inputs.
    """
    return preference.w_q * outcome.score - preference.w_c * normalize_cost(outcome.cost, spec)
