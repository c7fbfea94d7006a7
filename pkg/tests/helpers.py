"""Shared test utilities: finite-difference oracle and the poisoned spy env."""

from __future__ import annotations

import copy

import numpy as np

from banditroute.data import BanditEnvironment
from banditroute.policy import PolicyDims, PolicyNetwork, entropy
from banditroute.reward import Context, PreferenceVector


def small_dims(d_e: int = 8, k_arms: int = 3, **overrides) -> PolicyDims:
    kwargs = dict(d_p=8, pref_hidden=16, mlp_hidden=32, bilinear_rank=4)
    kwargs.update(overrides)
    return PolicyDims(d_e=d_e, k_arms=k_arms, **kwargs)


def sample_loss(net: PolicyNetwork, ctx: Context, action: int, advantage: float,
                beta: float, theta: np.ndarray) -> float:
    """The per-sample loss as a pure function of the flat parameter vector."""
    net.set_flat(theta)
    out = net.forward(ctx)
    return -advantage * float(out.log_probs[action]) - beta * entropy(out)


def fd_gradient(net: PolicyNetwork, ctx: Context, action: int, advantage: float,
                beta: float, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the per-sample loss; the gradient oracle."""
    grad = np.empty_like(theta)
    for j in range(len(theta)):
        plus = theta.copy()
        plus[j] += step
        minus = theta.copy()
        minus[j] -= step
        grad[j] = (sample_loss(net, ctx, action, advantage, beta, plus)
                   - sample_loss(net, ctx, action, advantage, beta, minus)) / (2.0 * step)
    net.set_flat(theta)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Per-coordinate relative error.

    The denominator is floored at 1e-3: below that scale the central-difference
    oracle's own rounding noise (~1e-10) dominates, so the comparison becomes
    an absolute one at 1e-9 when the stated 1e-6 bound is applied.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    return float((np.abs(analytic - numeric) / scale).max())


def random_gradcheck_case(head: str, seed: int, d_e: int = 8, k_arms: int = 3,
                          d_p: int = 8):
    """One seeded configuration: perturbed net, random context/action/advantage."""
    rng = np.random.default_rng(seed)
    dims = small_dims(d_e=d_e, k_arms=k_arms, d_p=d_p)
    net = PolicyNetwork.initialize(head, dims, seed=seed)
    theta = net.get_flat() + rng.normal(size=net.n_params) * 0.3
    net.set_flat(theta)
    u = float(rng.uniform())
    ctx = Context(embedding=rng.normal(size=d_e), preference=PreferenceVector(u, 1.0 - u))
    action = int(rng.integers(0, k_arms))
    advantage = float(rng.normal())
    return net, theta, ctx, action, advantage


class PoisonedEnvironment(BanditEnvironment):
    """Spy environment: every stored outcome is NaN; only step() serves real
    values, and only for the chosen arm.  Any training code that reads a
    non-chosen outcome therefore propagates NaN into its losses."""

    def __init__(self, dataset, reward_spec, split: str = "train"):
        pristine = copy.deepcopy(dataset)
        poisoned = copy.deepcopy(dataset)
        for rec in poisoned.records:
            rec.scores = np.full_like(rec.scores, np.nan)
            rec.costs = np.full_like(rec.costs, np.nan)
        super().__init__(poisoned, reward_spec, split)
        self._pristine = pristine

    def step(self, index, arm):
        if not 0 <= arm < self.arm_set.k:
            raise ValueError(f"arm {arm} out of range for {self.arm_set.k} arms")
        outcome = self._pristine.records[self._indices[index]].outcome(arm)
        self._steps += 1
        return outcome
