"""Routing policy: preference encoder, decision heads, softmax, exact gradients.

The policy maps a context (frozen prompt embedding ``e``, preference ``w``)
to a distribution over K arms:

    u = phi(w)              # small MLP lifting the 2-d preference to d_p dims
    z = [e; u]              # joint representation
    o = g(z)                # decision head: linear | bilinear | mlp
    pi = softmax(o)

Gradients are computed analytically (manual backprop) so they can be
verified against finite differences to tight tolerance.  Nothing ever
propagates into the embedding: the prompt encoder is frozen and lives
outside this package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from .numerics import SeededRng
from .reward import Context, PreferenceVector

logger = logging.getLogger(__name__)

HEAD_KINDS = ("linear", "bilinear", "mlp")

# Centered logits are clamped from below at -LOGIT_SPAN before softmax. The
# clamp acts on (o - max(o)), so adding a constant to every logit can never
# change the policy; it only guards entropy gradients in pathological states.
LOGIT_SPAN = 50.0


@dataclass(frozen=True)
class PolicyDims:
    """Layer sizes for the policy network; everything is configurable."""

    d_e: int
    k_arms: int
    d_p: int = 64
    pref_hidden: int = 64
    mlp_hidden: int = 256
    bilinear_rank: int = 8

    def __post_init__(self) -> None:
        for name in ("d_e", "k_arms", "d_p", "pref_hidden", "mlp_hidden", "bilinear_rank"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.k_arms < 2:
            raise ValueError(f"k_arms must be >= 2, got {self.k_arms}")

    @property
    def d_z(self) -> int:
        return self.d_e + self.d_p

    def to_dict(self) -> dict:
        return {
            "d_e": self.d_e,
            "k_arms": self.k_arms,
            "d_p": self.d_p,
            "pref_hidden": self.pref_hidden,
            "mlp_hidden": self.mlp_hidden,
            "bilinear_rank": self.bilinear_rank,
        }


@dataclass
class PolicyOutput:
    """Result of one forward pass, with activations cached for backprop."""

    logits: np.ndarray
    log_probs: np.ndarray
    probs: np.ndarray
    cache: dict[str, Any]
    clamped: bool = False


def _param_layout(head_kind: str, dims: PolicyDims) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs; the order defines the flat-vector layout."""
    layout = [
        ("pe_w1", (dims.pref_hidden, 2)),
        ("pe_b1", (dims.pref_hidden,)),
        ("pe_w2", (dims.d_p, dims.pref_hidden)),
        ("pe_b2", (dims.d_p,)),
    ]
    if head_kind == "linear":
        layout += [
            ("head_w", (dims.k_arms, dims.d_z)),
            ("head_b", (dims.k_arms,)),
        ]
    elif head_kind == "mlp":
        layout += [
            ("head_w1", (dims.mlp_hidden, dims.d_z)),
            ("head_b1", (dims.mlp_hidden,)),
            ("head_w2", (dims.k_arms, dims.mlp_hidden)),
            ("head_b2", (dims.k_arms,)),
        ]
    elif head_kind == "bilinear":
        layout += [
            ("bl_u", (dims.k_arms, dims.d_e, dims.bilinear_rank)),
            ("bl_v", (dims.k_arms, dims.d_p, dims.bilinear_rank)),
            ("bl_lin", (dims.k_arms, dims.d_z)),
            ("bl_b", (dims.k_arms,)),
        ]
    else:
        raise ValueError(f"unknown head kind {head_kind!r}; expected one of {HEAD_KINDS}")
    return layout


# fan_in/fan_out per parameter for Glorot-uniform init; biases stay zero.
_INIT_FANS = {
    "pe_w1": lambda d: (2, d.pref_hidden),
    "pe_w2": lambda d: (d.pref_hidden, d.d_p),
    "head_w": lambda d: (d.d_z, d.k_arms),
    "head_w1": lambda d: (d.d_z, d.mlp_hidden),
    "head_w2": lambda d: (d.mlp_hidden, d.k_arms),
    "bl_u": lambda d: (d.d_e, d.bilinear_rank),
    "bl_v": lambda d: (d.d_p, d.bilinear_rank),
    "bl_lin": lambda d: (d.d_z, d.k_arms),
}


class PolicyNetwork:
    """Trainable routing policy with a flat-parameter view for the optimizer."""

    def __init__(self, head_kind: str, dims: PolicyDims,
                 params: dict[str, np.ndarray], init_seed: int = 0):
        if head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {head_kind!r}; expected one of {HEAD_KINDS}")
        self.head_kind = head_kind
        self.dims = dims
        self.init_seed = int(init_seed)
        self.train_steps = 0
        self._clamp_reported = False
        self._layout = _param_layout(head_kind, dims)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in self._layout:
            if name not in params:
                raise ValueError(f"missing parameter {name!r}")
            arr = np.asarray(params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name!r} contains non-finite entries")
            self.params[name] = arr

    @classmethod
    def initialize(cls, head_kind: str, dims: PolicyDims, seed: int = 0) -> "PolicyNetwork":
        """Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
        rng = SeededRng(seed).child("policy-init")
        params = {}
        for name, shape in _param_layout(head_kind, dims):
            if name in _INIT_FANS:
                fan_in, fan_out = _INIT_FANS[name](dims)
                s = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-s, s, size=shape)
            else:
                params[name] = np.zeros(shape)
        return cls(head_kind, dims, params, init_seed=seed)

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self._layout)

    def param_slices(self) -> dict[str, slice]:
        """Flat-vector slice per parameter, in layout order."""
        slices = {}
        offset = 0
        for name, shape in self._layout:
            size = int(np.prod(shape))
            slices[name] = slice(offset, offset + size)
            offset += size
        return slices

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name, _ in self._layout])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected flat vector of length {self.n_params}, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("flat parameter vector contains non-finite entries")
        offset = 0
        for name, shape in self._layout:
            size = int(np.prod(shape))
            self.params[name] = theta[offset:offset + size].reshape(shape).copy()
            offset += size

    # ------------------------------------------------------------------
    # forward / backward
    # ------------------------------------------------------------------

    def forward(self, ctx: Context) -> PolicyOutput:
        """Compute logits and softmax probabilities, caching activations."""
        e = np.asarray(ctx.embedding, dtype=np.float64)
        if e.shape != (self.dims.d_e,):
            raise ValueError(f"embedding has shape {e.shape}, expected ({self.dims.d_e},)")
        wvec = ctx.preference.as_array()
        p = self.params

        u_pre = p["pe_w1"] @ wvec + p["pe_b1"]
        u_hid = np.maximum(u_pre, 0.0)
        u = p["pe_w2"] @ u_hid + p["pe_b2"]
        z = np.concatenate([e, u])

        cache: dict[str, Any] = {
            "e": e, "wvec": wvec, "u_pre": u_pre, "u_hid": u_hid, "u": u, "z": z,
        }

        if self.head_kind == "linear":
            o = p["head_w"] @ z + p["head_b"]
        elif self.head_kind == "mlp":
            h_pre = p["head_w1"] @ z + p["head_b1"]
            h = np.maximum(h_pre, 0.0)
            o = p["head_w2"] @ h + p["head_b2"]
            cache["h_pre"] = h_pre
            cache["h"] = h
        else:  # bilinear
            pe = np.einsum("ker,e->kr", p["bl_u"], e)
            su = np.einsum("kpr,p->kr", p["bl_v"], u)
            o = np.sum(pe * su, axis=1) + p["bl_lin"] @ z + p["bl_b"]
            cache["bl_pe"] = pe
            cache["bl_su"] = su

        centered = o - o.max()
        clipped = np.maximum(centered, -LOGIT_SPAN)
        clamped = bool(np.any(centered < -LOGIT_SPAN))
        if clamped:
            level = logging.DEBUG if self._clamp_reported else logging.WARNING
            logger.log(level, "logit clamp active: centered logit below -%.0f", LOGIT_SPAN)
            self._clamp_reported = True
        log_norm = np.log(np.sum(np.exp(clipped)))
        log_probs = clipped - log_norm
        probs = np.exp(log_probs)
        cache["clip_mask"] = centered >= -LOGIT_SPAN

        return PolicyOutput(logits=o, log_probs=log_probs, probs=probs,
                            cache=cache, clamped=clamped)

    def backward(self, out: PolicyOutput, action: int, advantage: float,
                 entropy_coef: float) -> np.ndarray:
        """Gradient of the per-sample loss

            L = -advantage * log pi[action] - entropy_coef * H(pi)

        with respect to the flat parameter vector.  The embedding is treated
        as a frozen input: no gradient flows into it.
        """
        k = self.dims.k_arms
        if not 0 <= action < k:
            raise ValueError(f"action {action} out of range for {k} arms")
        if "z" not in out.cache:
            raise ValueError("backward requires a PolicyOutput produced by forward")
        p = self.params
        c = out.cache
        probs, log_probs = out.probs, out.log_probs
        entropy = -float(np.dot(probs, log_probs))

        # d/do of -A*log pi[a]  is A*(pi - onehot(a));
        # d/do of -H            is pi*(log pi + H).
        do = advantage * probs.copy()
        do[action] -= advantage
        do += entropy_coef * probs * (log_probs + entropy)
        # Coordinates pinned by the clamp get no gradient; the max-centering
        # needs no correction because the unclamped gradient sums to zero.
        do = np.where(c["clip_mask"], do, 0.0)

        grads = {name: None for name, _ in self._layout}
        z = c["z"]

        if self.head_kind == "linear":
            grads["head_w"] = np.outer(do, z)
            grads["head_b"] = do
            dz = p["head_w"].T @ do
        elif self.head_kind == "mlp":
            grads["head_w2"] = np.outer(do, c["h"])
            grads["head_b2"] = do
            dh = p["head_w2"].T @ do
            dh_pre = dh * (c["h_pre"] > 0.0)
            grads["head_w1"] = np.outer(dh_pre, z)
            grads["head_b1"] = dh_pre
            dz = p["head_w1"].T @ dh_pre
        else:  # bilinear: o_k = <U_k^T e, V_k^T u> + lin_k . z + b_k
            dpe = do[:, None] * c["bl_su"]
            dsu = do[:, None] * c["bl_pe"]
            grads["bl_u"] = np.einsum("e,kr->ker", c["e"], dpe)
            grads["bl_v"] = np.einsum("p,kr->kpr", c["u"], dsu)
            grads["bl_lin"] = np.outer(do, z)
            grads["bl_b"] = do
            dz = p["bl_lin"].T @ do
            dz[self.dims.d_e:] += np.einsum("kpr,kr->p", p["bl_v"], dsu)

        du = dz[self.dims.d_e:]  # dz[:d_e] would flow into the frozen embedding
        grads["pe_w2"] = np.outer(du, c["u_hid"])
        grads["pe_b2"] = du
        d_hid = p["pe_w2"].T @ du
        d_pre = d_hid * (c["u_pre"] > 0.0)
        grads["pe_w1"] = np.outer(d_pre, c["wvec"])
        grads["pe_b1"] = d_pre

        return np.concatenate([grads[name].ravel() for name, _ in self._layout])

    # ------------------------------------------------------------------
    # inference helpers
    # ------------------------------------------------------------------

    def probabilities(self, embedding: np.ndarray, preference: PreferenceVector) -> np.ndarray:
        return self.forward(Context(embedding=embedding, preference=preference)).probs

    def decide(self, embedding: np.ndarray, preference: PreferenceVector) -> int:
        """Deterministic inference: the most probable arm."""
        return select_argmax(self.forward(Context(embedding=embedding, preference=preference)))

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_checkpoint_dict(self) -> dict:
        return {
            "kind": "policy",
            "head_kind": self.head_kind,
            "dims": self.dims.to_dict(),
            "params_flat": self.get_flat().tolist(),
            "init_seed": self.init_seed,
            "train_steps": self.train_steps,
        }

    @classmethod
    def from_checkpoint_dict(cls, payload: dict) -> "PolicyNetwork":
        if payload.get("kind") != "policy":
            raise ValueError(f"not a policy checkpoint: kind={payload.get('kind')!r}")
        dims = PolicyDims(**payload["dims"])
        net = cls.initialize(payload["head_kind"], dims, seed=int(payload["init_seed"]))
        net.set_flat(np.asarray(payload["params_flat"], dtype=np.float64))
        net.train_steps = int(payload["train_steps"])
        return net


def entropy(out: PolicyOutput) -> float:
    """Shannon entropy of the policy distribution, in nats."""
    return -float(np.dot(out.probs, out.log_probs))


def select_argmax(out: PolicyOutput) -> int:
    """Most probable arm; ties break to the lowest index."""
    return int(np.argmax(out.probs))


def select_sample(out: PolicyOutput, rng: SeededRng) -> int:
    """Categorical draw from the policy via inverse CDF on a single uniform."""
    u = float(rng.uniform())
    cdf = np.cumsum(out.probs)
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(out.probs) - 1)
