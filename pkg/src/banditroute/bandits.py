"""Classic contextual-bandit baselines over the joint context [embedding; w].

Each agent keeps disjoint per-arm ridge statistics

    A_a = lambda * I + sum z z^T        b_a = sum reward * z

so the point estimate theta_hat_a = A_a^{-1} b_a equals batch ridge
regression on that arm's own observations.  A_a^{-1} is maintained
incrementally by the Sherman-Morrison identity and re-factorized from A_a
every ``REFACTOR_EVERY`` updates to bound drift.

The preference enters the feature vector raw (d = d_e + 2): the agents are
linear anyway, so a learned preference lift would buy nothing and cost
convexity.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import SeededRng, spd_solve
from .reward import PreferenceVector

REFACTOR_EVERY = 1000

AGENT_KINDS = ("linucb", "lints", "epsilon-greedy")


def joint_features(embedding: np.ndarray, preference: PreferenceVector) -> np.ndarray:
    """Agent context: [embedding; w_q; w_c]."""
    return np.concatenate([np.asarray(embedding, dtype=np.float64), preference.as_array()])


class _RidgeStats:
    """Per-arm Gram matrices, response vectors, and their tracked inverses."""

    def __init__(self, k_arms: int, dim: int, ridge_lambda: float):
        if ridge_lambda <= 0.0:
            raise ValueError(f"ridge_lambda must be > 0, got {ridge_lambda}")
        self.k_arms = k_arms
        self.dim = dim
        self.ridge_lambda = ridge_lambda
        self.gram = np.stack([ridge_lambda * np.eye(dim) for _ in range(k_arms)])
        self.response = np.zeros((k_arms, dim))
        self.gram_inv = np.stack([np.eye(dim) / ridge_lambda for _ in range(k_arms)])
        self.pulls = np.zeros(k_arms, dtype=np.int64)

    def theta_hat(self, arm: int) -> np.ndarray:
        return self.gram_inv[arm] @ self.response[arm]

    def theta_hat_all(self) -> np.ndarray:
        return np.einsum("kij,kj->ki", self.gram_inv, self.response)

    def update(self, arm: int, z: np.ndarray, reward: float) -> None:
        if z.shape != (self.dim,):
            raise ValueError(f"feature vector has shape {z.shape}, expected ({self.dim},)")
        if not math.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward}")
        self.gram[arm] += np.outer(z, z)
        self.response[arm] += reward * z
        self.pulls[arm] += 1
        if self.pulls[arm] % REFACTOR_EVERY == 0:
            self.gram_inv[arm] = spd_solve(self.gram[arm], np.eye(self.dim))
        else:
            inv = self.gram_inv[arm]
            iv = inv @ z
            inv -= np.outer(iv, iv) / (1.0 + float(z @ iv))
            # Sherman-Morrison keeps symmetry only up to rounding; restore it.
            self.gram_inv[arm] = 0.5 * (inv + inv.T)

    def refactor(self) -> None:
        for arm in range(self.k_arms):
            self.gram_inv[arm] = spd_solve(self.gram[arm], np.eye(self.dim))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "k_arms": self.k_arms,
            "ridge_lambda": self.ridge_lambda,
            "gram": self.gram.tolist(),
            "response": self.response.tolist(),
            "pulls": self.pulls.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "_RidgeStats":
        stats = cls(int(payload["k_arms"]), int(payload["dim"]), float(payload["ridge_lambda"]))
        stats.gram = np.asarray(payload["gram"], dtype=np.float64)
        stats.response = np.asarray(payload["response"], dtype=np.float64)
        stats.pulls = np.asarray(payload["pulls"], dtype=np.int64)
        stats.refactor()
        return stats


class LinearAgentBase:
    """Shared plumbing: update rule, greedy inference, serialization."""

    kind = "base"

    def __init__(self, k_arms: int, dim: int, ridge_lambda: float = 1.0):
        self.stats = _RidgeStats(k_arms, dim, ridge_lambda)

    @property
    def k_arms(self) -> int:
        return self.stats.k_arms

    @property
    def dim(self) -> int:
        return self.stats.dim

    def update(self, z: np.ndarray, arm: int, reward: float) -> None:
        """Ridge update for the pulled arm only; other arms stay untouched."""
        if not 0 <= arm < self.k_arms:
            raise ValueError(f"arm {arm} out of range for {self.k_arms} arms")
        self.stats.update(arm, np.asarray(z, dtype=np.float64), reward)

    def greedy(self, z: np.ndarray) -> int:
        scores = self.stats.theta_hat_all() @ np.asarray(z, dtype=np.float64)
        return int(np.argmax(scores))

    def decide(self, embedding: np.ndarray, preference: PreferenceVector) -> int:
        """Deterministic inference on the point estimates (no exploration)."""
        return self.greedy(joint_features(embedding, preference))

    def select(self, z: np.ndarray, rng: SeededRng) -> int:
        raise NotImplementedError

    def _extra_params(self) -> dict:
        return {}

    def to_checkpoint_dict(self) -> dict:
        payload = {"kind": self.kind, "stats": self.stats.to_dict()}
        payload.update(self._extra_params())
        return payload


class LinUCBAgent(LinearAgentBase):
    """Optimism in the face of uncertainty: score + alpha * ridge half-width."""

    kind = "linucb"

    def __init__(self, k_arms: int, dim: int, alpha: float = 1.0, ridge_lambda: float = 1.0):
        super().__init__(k_arms, dim, ridge_lambda)
        self.alpha = float(alpha)

    def ucb_scores(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        means = self.stats.theta_hat_all() @ z
        widths = np.sqrt(np.maximum(np.einsum("j,kji,i->k", z, self.stats.gram_inv, z), 0.0))
        return means + self.alpha * widths

    def select(self, z: np.ndarray, rng: SeededRng) -> int:
        return int(np.argmax(self.ucb_scores(z)))

    def _extra_params(self) -> dict:
        return {"alpha": self.alpha}

    @classmethod
    def from_checkpoint_dict(cls, payload: dict) -> "LinUCBAgent":
        stats = _RidgeStats.from_dict(payload["stats"])
        agent = cls(stats.k_arms, stats.dim, alpha=float(payload["alpha"]),
                    ridge_lambda=stats.ridge_lambda)
        agent.stats = stats
        return agent


class LinTSAgent(LinearAgentBase):
    """Thompson sampling with per-arm posterior N(theta_hat, nu^2 A^{-1})."""

    kind = "lints"

    def __init__(self, k_arms: int, dim: int, nu: float = 0.5, ridge_lambda: float = 1.0):
        super().__init__(k_arms, dim, ridge_lambda)
        if nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {nu}")
        self.nu = float(nu)

    def select(self, z: np.ndarray, rng: SeededRng) -> int:
        z = np.asarray(z, dtype=np.float64)
        scores = np.empty(self.k_arms)
        for arm in range(self.k_arms):
            theta = self.stats.theta_hat(arm)
            if self.nu > 0.0:
                try:
                    chol = np.linalg.cholesky(self.stats.gram_inv[arm])
                except np.linalg.LinAlgError:
                    self.stats.refactor()
                    chol = np.linalg.cholesky(self.stats.gram_inv[arm])
                theta = theta + self.nu * chol @ rng.standard_normal(self.dim)
            scores[arm] = float(theta @ z)
        return int(np.argmax(scores))

    def _extra_params(self) -> dict:
        return {"nu": self.nu}

    @classmethod
    def from_checkpoint_dict(cls, payload: dict) -> "LinTSAgent":
        stats = _RidgeStats.from_dict(payload["stats"])
        agent = cls(stats.k_arms, stats.dim, nu=float(payload["nu"]),
                    ridge_lambda=stats.ridge_lambda)
        agent.stats = stats
        return agent


class EpsilonGreedyAgent(LinearAgentBase):
    """Uniform exploration with probability epsilon, otherwise greedy."""

    kind = "epsilon-greedy"

    def __init__(self, k_arms: int, dim: int, epsilon: float = 0.1, ridge_lambda: float = 1.0):
        super().__init__(k_arms, dim, ridge_lambda)
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.epsilon = float(epsilon)

    def select(self, z: np.ndarray, rng: SeededRng) -> int:
        if self.epsilon > 0.0 and rng.uniform() < self.epsilon:
            return rng.integers(0, self.k_arms)
        return self.greedy(z)

    def _extra_params(self) -> dict:
        return {"epsilon": self.epsilon}

    @classmethod
    def from_checkpoint_dict(cls, payload: dict) -> "EpsilonGreedyAgent":
        stats = _RidgeStats.from_dict(payload["stats"])
        agent = cls(stats.k_arms, stats.dim, epsilon=float(payload["epsilon"]),
                    ridge_lambda=stats.ridge_lambda)
        agent.stats = stats
        return agent


_AGENT_CLASSES = {
    "linucb": LinUCBAgent,
    "lints": LinTSAgent,
    "epsilon-greedy": EpsilonGreedyAgent,
}


def agent_from_checkpoint_dict(payload: dict) -> LinearAgentBase:
    kind = payload.get("kind")
    if kind not in _AGENT_CLASSES:
        raise ValueError(f"not an agent checkpoint: kind={kind!r}")
    return _AGENT_CLASSES[kind].from_checkpoint_dict(payload)


def make_agent(kind: str, k_arms: int, dim: int, *, alpha: float = 1.0, nu: float = 0.5,
               epsilon: float = 0.1, ridge_lambda: float = 1.0) -> LinearAgentBase:
    if kind == "linucb":
        return LinUCBAgent(k_arms, dim, alpha=alpha, ridge_lambda=ridge_lambda)
    if kind == "lints":
        return LinTSAgent(k_arms, dim, nu=nu, ridge_lambda=ridge_lambda)
    if kind == "epsilon-greedy":
        return EpsilonGreedyAgent(k_arms, dim, epsilon=epsilon, ridge_lambda=ridge_lambda)
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
