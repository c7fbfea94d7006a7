"""Scikit-learn style routers: fit on a logged dataset, predict arms per query.

All estimators share the surface

    fit(dataset)                      train on the dataset's train split
    predict(X, preference)           -> arm indices, deterministic inference
    decide(embedding, preference)    -> one arm (the evaluation protocol)

plus ``get_params`` / ``set_params`` from :class:`sklearn.base.BaseEstimator`,
so they clone and compose with the wider ecosystem.  ``ReinforceRouter``
additionally exposes ``predict_proba``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .bandits import make_agent
from .data import BanditEnvironment, LoggedDataset
from .numerics import SeededRng
from .policy import PolicyDims, PolicyNetwork
from .reward import RewardSpec
from .training import TrainingConfig, train, train_agent
from .validation import check_embedding_matrix, check_preference


def resolve_reward_spec(dataset: LoggedDataset, tau: float | None) -> RewardSpec:
    """Cost cap preference order: explicit tau, dataset header, train-cost quantile."""
    if tau is not None:
        return RewardSpec(tau=float(tau))
    if dataset.suggested_tau is not None:
        return RewardSpec(tau=float(dataset.suggested_tau))
    return RewardSpec(tau=dataset.quantile_tau())


class _RouterMixin:
    """Prediction plumbing shared by every fitted router."""

    def _check_fitted(self):
        if not hasattr(self, "reward_spec_"):
            raise RuntimeError("router is not fitted; call fit() first")

    def decide(self, embedding, preference) -> int:
        self._check_fitted()
        X = check_embedding_matrix(embedding, self.d_e_)
        return self._decide_one(X[0], check_preference(preference))

    def predict(self, X, preference) -> np.ndarray:
        """Deterministic arm index per row of X at one preference setting."""
        self._check_fitted()
        X = check_embedding_matrix(X, self.d_e_)
        pref = check_preference(preference)
        return np.array([self._decide_one(row, pref) for row in X], dtype=np.int64)

    def predict_arm_ids(self, X, preference) -> list[str]:
        ids = self.arm_set_.ids
        return [ids[a] for a in self.predict(X, preference)]


class ReinforceRouter(_RouterMixin, BaseEstimator):
    """Preference-conditioned softmax policy trained by REINFORCE.

    The policy samples arms during training, observes only the chosen arm's
    outcome from the simulated bandit environment, and fits by
    entropy-regularized policy gradients with a batch-mean reward baseline.
    Inference is deterministic argmax, tunable per request through the
    preference argument (no retraining).
    """

    def __init__(self, head: str = "mlp", d_p: int = 64, pref_hidden: int = 64,
                 mlp_hidden: int = 256, bilinear_rank: int = 8, epochs: int = 100,
                 batch_size: int = 32, learning_rate: float = 1e-4,
                 entropy_coef: float = 0.05, tau: float | None = None, seed: int = 0):
        self.head = head
        self.d_p = d_p
        self.pref_hidden = pref_hidden
        self.mlp_hidden = mlp_hidden
        self.bilinear_rank = bilinear_rank
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.entropy_coef = entropy_coef
        self.tau = tau
        self.seed = seed

    def fit(self, dataset: LoggedDataset, split: str = "train",
            checkpoint_dir=None, checkpoint_every: int | None = None) -> "ReinforceRouter":
        self.reward_spec_ = resolve_reward_spec(dataset, self.tau)
        env = BanditEnvironment(dataset, self.reward_spec_, split=split)
        dims = PolicyDims(d_e=dataset.d_e, k_arms=dataset.arm_set.k, d_p=self.d_p,
                          pref_hidden=self.pref_hidden, mlp_hidden=self.mlp_hidden,
                          bilinear_rank=self.bilinear_rank)
        cfg = TrainingConfig(epochs=self.epochs, batch_size=self.batch_size,
                             learning_rate=self.learning_rate,
                             entropy_coef=self.entropy_coef, seed=self.seed,
                             head_kind=self.head, tau=self.reward_spec_.tau,
                             checkpoint_every=checkpoint_every)
        net = PolicyNetwork.initialize(self.head, dims, seed=self.seed)
        self.trace_ = train(net, env, cfg, checkpoint_dir=checkpoint_dir)
        self.network_ = net
        self.arm_set_ = dataset.arm_set
        self.d_e_ = dataset.d_e
        return self

    def _decide_one(self, embedding, preference) -> int:
        return self.network_.decide(embedding, preference)

    def predict_proba(self, X, preference) -> np.ndarray:
        self._check_fitted()
        X = check_embedding_matrix(X, self.d_e_)
        pref = check_preference(preference)
        return np.stack([self.network_.probabilities(row, pref) for row in X])


class _AgentRouterBase(_RouterMixin, BaseEstimator):
    """Linear bandit baselines behind the same fit/predict surface."""

    agent_kind = ""

    def _agent_kwargs(self) -> dict:
        return {}

    def fit(self, dataset: LoggedDataset, split: str = "train") -> "_AgentRouterBase":
        self.reward_spec_ = resolve_reward_spec(dataset, self.tau)
        env = BanditEnvironment(dataset, self.reward_spec_, split=split)
        agent = make_agent(self.agent_kind, k_arms=dataset.arm_set.k,
                           dim=dataset.d_e + 2, ridge_lambda=self.ridge_lambda,
                           **self._agent_kwargs())
        rounds = self.rounds if self.rounds is not None else self.passes * env.n_records
        train_agent(agent, env, rounds=rounds, rng=SeededRng(self.seed).child("agent"))
        self.agent_ = agent
        self.arm_set_ = dataset.arm_set
        self.d_e_ = dataset.d_e
        return self

    def _decide_one(self, embedding, preference) -> int:
        return self.agent_.decide(embedding, preference)


class LinUCBRouter(_AgentRouterBase):
    """Disjoint LinUCB over [embedding; preference] features."""

    agent_kind = "linucb"

    def __init__(self, alpha: float = 1.0, ridge_lambda: float = 1.0, passes: int = 1,
                 rounds: int | None = None, tau: float | None = None, seed: int = 0):
        self.alpha = alpha
        self.ridge_lambda = ridge_lambda
        self.passes = passes
        self.rounds = rounds
        self.tau = tau
        self.seed = seed

    def _agent_kwargs(self) -> dict:
        return {"alpha": self.alpha}


class LinTSRouter(_AgentRouterBase):
    """Linear Thompson sampling over [embedding; preference] features."""

    agent_kind = "lints"

    def __init__(self, nu: float = 0.5, ridge_lambda: float = 1.0, passes: int = 1,
                 rounds: int | None = None, tau: float | None = None, seed: int = 0):
        self.nu = nu
        self.ridge_lambda = ridge_lambda
        self.passes = passes
        self.rounds = rounds
        self.tau = tau
        self.seed = seed

    def _agent_kwargs(self) -> dict:
        return {"nu": self.nu}


class EpsilonGreedyRouter(_AgentRouterBase):
    """Epsilon-greedy over per-arm ridge estimates."""

    agent_kind = "epsilon-greedy"

    def __init__(self, epsilon: float = 0.1, ridge_lambda: float = 1.0, passes: int = 1,
                 rounds: int | None = None, tau: float | None = None, seed: int = 0):
        self.epsilon = epsilon
        self.ridge_lambda = ridge_lambda
        self.passes = passes
        self.rounds = rounds
        self.tau = tau
        self.seed = seed

    def _agent_kwargs(self) -> dict:
        return {"epsilon": self.epsilon}
