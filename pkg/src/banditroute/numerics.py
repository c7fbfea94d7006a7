"""Dense linear algebra, seeded randomness, and Adam shared by all learning code.

Everything runs in float64: the models here are tiny, so determinism and
gradient-check fidelity matter more than speed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import NotPositiveDefiniteError
from .reward import PreferenceVector

__all__ = [
    "SeededRng",
    "AdamState",
    "adam_step",
    "spd_solve",
    "sample_simplex_preference",
]


class SeededRng:
    """Deterministic random stream backed by numpy's PCG64.

    PCG64 is a documented, portable generator: the same seed yields the
    same stream on every platform, which is what makes training traces and
    checkpoints reproducible bit-for-bit.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def child(self, key: str) -> "SeededRng":
        """Derive an independent stream from (seed, key); stable across runs."""
        digest = hashlib.sha256(f"{self.seed}:{key}".encode()).digest()
        return SeededRng(int.from_bytes(digest[:8], "little") % 2**63)


@dataclass
class AdamState:
    """Adam optimizer state for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_size(cls, n: int, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0, lr=lr,
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One Adam update with bias correction; mutates ``state``, returns new params."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(
            f"length mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient contains non-finite entries")

    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    out = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(out)):
        raise ValueError("adam step produced non-finite parameters")
    return out


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky.

    ``b`` may be a vector or a matrix of right-hand sides.

    Raises:
        NotPositiveDefiniteError: if A is not symmetric positive-definite.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"A must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: A is {a.shape}, b is {b.shape}")
    scale = np.abs(a).max()
    if not np.allclose(a, a.T, atol=1e-10 * max(scale, 1.0)):
        raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky factorization failed: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=True)
    if not np.all(np.isfinite(x)):
        raise NotPositiveDefiniteError("solve produced non-finite values")
    return x


def sample_simplex_preference(rng: SeededRng) -> PreferenceVector:
    """Draw a preference uniformly on the 1-simplex: (u, 1 - u), u ~ U[0, 1]."""
    u = float(rng.uniform())
    return PreferenceVector(u, 1.0 - u)
