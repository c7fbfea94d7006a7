"""Policy-gradient training under bandit feedback.

One epoch shuffles the training records, and for each record: samples a
preference on the 1-simplex, runs the policy forward, samples an arm,
queries the environment for that arm's outcome only, and scores it with
the preference-weighted reward.  Per mini-batch, the mean reward serves as
the baseline, per-sample gradients of

    loss = -(reward - baseline) * log pi[arm] - beta * entropy(pi)

are averaged, and one Adam step is applied.  The batch-mean baseline
includes the current sample; the induced bias is standard and accepted.

``train_agent`` runs the linear bandit baselines through the identical
record/preference stream for a fair comparison.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bandits import LinearAgentBase, joint_features
from .checkpoint import save_checkpoint
from .data import BanditEnvironment, EvalCapability
from .exceptions import NumericalDivergenceError
from .numerics import AdamState, SeededRng, adam_step, sample_simplex_preference
from .policy import PolicyNetwork, entropy, select_sample
from .reward import PreferenceVector, compute_reward

logger = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-4
    entropy_coef: float = 0.05
    seed: int = 0
    head_kind: str = "mlp"
    tau: float | None = None  # None: callers derive the cap from training costs
    checkpoint_every: int | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0.0 or self.entropy_coef < 0.0:
            raise ValueError("learning_rate must be > 0 and entropy_coef >= 0")


@dataclass
class EpochStats:
    """Per-epoch observability. Wall-clock stays out of serialized traces so
    identical seeds produce bit-identical trace files."""

    epoch: int
    mean_reward: float
    mean_entropy: float
    mean_loss: float
    baselines: list[float]
    wall_clock_s: float = 0.0

    def to_row(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_reward": self.mean_reward,
            "mean_entropy": self.mean_entropy,
            "mean_loss": self.mean_loss,
            "baselines": self.baselines,
        }


@dataclass
class TrainingTrace:
    epochs: list[EpochStats] = field(default_factory=list)

    def append(self, stats: EpochStats) -> None:
        self.epochs.append(stats)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_row(), sort_keys=True) for e in self.epochs) + "\n"

    @property
    def mean_rewards(self) -> list[float]:
        return [e.mean_reward for e in self.epochs]

    @property
    def mean_entropies(self) -> list[float]:
        return [e.mean_entropy for e in self.epochs]


def batch_baseline(rewards: list[float]) -> float:
    """Mean reward over the current mini-batch, current sample included."""
    if not rewards:
        raise ValueError("cannot take a baseline over an empty batch")
    return float(np.mean(rewards))


def train_epoch(net: PolicyNetwork, env: BanditEnvironment, cfg: TrainingConfig,
                adam: AdamState, rng: SeededRng, epoch_index: int = 0) -> EpochStats:
    """One pass over the shuffled training records, one Adam step per batch."""
    if env.d_e != net.dims.d_e or env.k_arms != net.dims.k_arms:
        raise ValueError(
            f"environment ({env.d_e}, {env.k_arms}) does not match "
            f"network dims ({net.dims.d_e}, {net.dims.k_arms})"
        )
    if env.n_records == 0:
        raise ValueError("environment has no records")

    start_time = time.perf_counter()
    order = rng.permutation(env.n_records)
    rewards_epoch: list[float] = []
    entropies_epoch: list[float] = []
    losses_epoch: list[float] = []
    baselines: list[float] = []

    for start in range(0, len(order), cfg.batch_size):
        batch = order[start:start + cfg.batch_size]
        outs, actions, rewards = [], [], []
        for i in batch:
            pref = sample_simplex_preference(rng)
            out = net.forward(env.context(int(i), pref))
            action = select_sample(out, rng)
            outcome = env.step(int(i), action)  # chosen arm only
            reward = compute_reward(pref, outcome, env.reward_spec)
            outs.append(out)
            actions.append(action)
            rewards.append(reward)

        baseline = batch_baseline(rewards)
        baselines.append(baseline)
        grad = np.zeros(net.n_params)
        batch_loss = 0.0
        for out, action, reward in zip(outs, actions, rewards):
            advantage = reward - baseline
            grad += net.backward(out, action, advantage, cfg.entropy_coef)
            h = entropy(out)
            batch_loss += -advantage * float(out.log_probs[action]) - cfg.entropy_coef * h
            entropies_epoch.append(h)
        grad /= len(batch)
        batch_loss /= len(batch)
        if not np.isfinite(batch_loss):
            raise NumericalDivergenceError(
                f"non-finite loss at epoch {epoch_index}, batch starting {start}"
            )
        losses_epoch.append(batch_loss)
        rewards_epoch.extend(rewards)

        net.set_flat(adam_step(net.get_flat(), grad, adam))
        net.train_steps += 1

    return EpochStats(
        epoch=epoch_index,
        mean_reward=float(np.mean(rewards_epoch)),
        mean_entropy=float(np.mean(entropies_epoch)),
        mean_loss=float(np.mean(losses_epoch)),
        baselines=baselines,
        wall_clock_s=time.perf_counter() - start_time,
    )


def train(net: PolicyNetwork, env: BanditEnvironment, cfg: TrainingConfig,
          checkpoint_dir=None) -> TrainingTrace:
    """Full training run; optionally checkpoints every ``cfg.checkpoint_every`` epochs."""
    adam = AdamState.for_size(net.n_params, lr=cfg.learning_rate)
    rng = SeededRng(cfg.seed).child("train")
    trace = TrainingTrace()
    for epoch in range(cfg.epochs):
        stats = train_epoch(net, env, cfg, adam, rng, epoch_index=epoch)
        trace.append(stats)
        if checkpoint_dir is not None and cfg.checkpoint_every is not None \
                and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"checkpoint_epoch{epoch + 1:04d}.json",
                            net.to_checkpoint_dict())
        logger.debug("epoch %d: reward %.4f entropy %.4f loss %.4f",
                     epoch, stats.mean_reward, stats.mean_entropy, stats.mean_loss)
    return trace


def expected_reward(net: PolicyNetwork, env: BanditEnvironment,
                    preference: PreferenceVector, capability: EvalCapability) -> float:
    """Exact per-record expectation sum_a pi(a|s) * r(a, s), averaged over records.

    Requires full-information access, so it is evaluation-only.
    """
    total = 0.0
    for i in range(env.n_records):
        out = net.forward(env.context(i, preference))
        outcomes = env.full_outcomes(i, capability)
        r = np.array([compute_reward(preference, oc, env.reward_spec) for oc in outcomes])
        total += float(out.probs @ r)
    return total / env.n_records


def train_agent(agent: LinearAgentBase, env: BanditEnvironment, rounds: int,
                rng: SeededRng) -> None:
    """Online bandit loop: shuffled record stream with freshly sampled preferences."""
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    n = env.n_records
    order = rng.permutation(n)
    pos = 0
    for _ in range(rounds):
        if pos == n:
            order = rng.permutation(n)
            pos = 0
        i = int(order[pos])
        pos += 1
        pref = sample_simplex_preference(rng)
        z = joint_features(env.embedding(i), pref)
        arm = agent.select(z, rng)
        outcome = env.step(i, arm)
        agent.update(z, arm, compute_reward(pref, outcome, env.reward_spec))
