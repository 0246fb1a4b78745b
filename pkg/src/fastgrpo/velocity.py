"""Velocity fields v(x, s, c) with s=0 at noise and s=1 at data."""
from __future__ import annotations

from typing import Protocol

import numpy as np

from .autodiff import Tensor
from .nn import GraphSpec, ParamStore, forward_graph, init_params

TIME_FREQUENCIES = (1.0, 2.0, 4.0, 8.0)
N_TIME_FEATURES = 1 + len(TIME_FREQUENCIES)


class VelocityField(Protocol):
    dim: int

    def __call__(self, x: np.ndarray, s: float, c: np.ndarray | None = None) -> Tensor: ...


def time_features(s, n: int) -> np.ndarray:
    """Raw s followed by sin(2*pi*f*s) for f in 1, 2, 4, 8; shape (n, 5)."""
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), (n,))
    cols = [s] + [np.sin(2.0 * np.pi * f * s) for f in TIME_FREQUENCIES]
    return np.stack(cols, axis=1)


class MlpVelocity:
    """Learned velocity: MLP over [x, c, time features].

    ``nfe`` counts evaluated rows (one row = one function evaluation for one
    sample); callers read differences around the section they care about.
    """

    def __init__(self, store: ParamStore, spec: GraphSpec, dim: int, cond_dim: int):
        if spec.input_width != dim + cond_dim + N_TIME_FEATURES:
            raise ValueError(
                f"graph input width {spec.input_width} != d + k + {N_TIME_FEATURES} "
                f"= {dim + cond_dim + N_TIME_FEATURES}"
            )
        if spec.output_width != dim:
            raise ValueError(f"graph output width {spec.output_width} != d = {dim}")
        self.store = store
        self.spec = spec
        self.dim = dim
        self.cond_dim = cond_dim
        self.nfe = 0

    @classmethod
    def create(cls, dim: int = 2, cond_dim: int = 2, hidden=(64, 64),
               activation: str = "silu", seed: int = 0, zero_output: bool = False) -> MlpVelocity:
        spec = GraphSpec(dim + cond_dim + N_TIME_FEATURES, tuple(hidden), dim, activation)
        return cls(init_params(spec, seed, zero_output=zero_output), spec, dim, cond_dim)

    def snapshot(self) -> MlpVelocity:
        """A frozen copy with its own parameter arrays."""
        return MlpVelocity(self.store.copy(), self.spec, self.dim, self.cond_dim)

    def features(self, x: np.ndarray, s, c) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        if x.shape[1] != self.dim:
            raise ValueError(f"x has dimension {x.shape[1]}, model expects {self.dim}")
        if c is None:
            c = np.zeros((n, self.cond_dim))
        c = np.asarray(c, dtype=np.float64)
        c = np.broadcast_to(c, (n, c.shape[-1])) if c.ndim == 1 else c
        if c.shape != (n, self.cond_dim):
            raise ValueError(f"condition shape {c.shape} incompatible with ({n}, {self.cond_dim})")
        return np.concatenate([x, c, time_features(s, n)], axis=1)

    def __call__(self, x: np.ndarray, s, c=None) -> Tensor:
        feats = self.features(x, s, c)
        self.nfe += feats.shape[0]
        return forward_graph(self.store, feats, self.spec)


class GaussianOracleVelocity:
    """Exact marginal velocity transporting N(0, I) to N(mean, std^2 I).

    Under x_s = (1 - s) eps + s x1 with independent eps and x1, returns
    E[x1 - eps | x_s = x] = m + k(s) (x - s m) where
    k(s) = (s std^2 - (1 - s)) / ((1 - s)^2 + s^2 std^2).
    """

    def __init__(self, mean, std: float):
        self.mean = np.asarray(mean, dtype=np.float64)
        if std < 0:
            raise ValueError("target std must be nonnegative")
        self.std = float(std)
        self.dim = self.mean.shape[0]
        self.nfe = 0

    def gain(self, s: float) -> float:
        var = self.std ** 2
        denom = (1.0 - s) ** 2 + s * s * var
        if denom == 0.0:
            raise ValueError("degenerate oracle: s = 1 with zero target std")
        return (s * var - (1.0 - s)) / denom

    def __call__(self, x: np.ndarray, s, c=None) -> Tensor:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.nfe += x.shape[0]
        s = float(s)
        return Tensor(self.mean + self.gain(s) * (x - s * self.mean))
