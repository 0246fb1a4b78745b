"""Synthetic reward heads on terminal samples and their weighted aggregate.

Four heads, each mapped into (0, 1]:

* semantic  exp(-|x - m(c)|^2)           proximity to the condition's target mode
* temporal  exp(-(x . u(c) - tau(c))^2)  projection onto a cue direction hits an offset
* aesthetic exp(-|x|^2 / rho^2)          low energy, blind to the condition
* spatial   exp(-x_2^2)                  closeness to the symmetry axis

The defaults place targets so that no single point maximizes every head.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEAD_NAMES = ("semantic", "temporal", "aesthetic", "spatial")


def _cond_index(c) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    return np.argmax(c, axis=1)


@dataclass(frozen=True)
class SemanticHead:
    targets: tuple[tuple[float, ...], ...]
    name: str = "semantic"
    bounds: tuple[float, float] = (0.0, 1.0)

    def score(self, x, c) -> np.ndarray:
        x = np.atleast_2d(x)
        m = np.asarray(self.targets)[_cond_index(c)]
        return np.exp(-np.sum((x - m) ** 2, axis=1))


@dataclass(frozen=True)
class TemporalHead:
    directions: tuple[tuple[float, ...], ...]
    offsets: tuple[float, ...]
    name: str = "temporal"
    bounds: tuple[float, float] = (0.0, 1.0)

    def score(self, x, c) -> np.ndarray:
        x = np.atleast_2d(x)
        idx = _cond_index(c)
        u = np.asarray(self.directions)[idx]
        tau = np.asarray(self.offsets)[idx]
        return np.exp(-(np.sum(x * u, axis=1) - tau) ** 2)


@dataclass(frozen=True)
class AestheticHead:
    radius: float = 3.0
    name: str = "aesthetic"
    bounds: tuple[float, float] = (0.0, 1.0)

    def score(self, x, c=None) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.exp(-np.sum(x * x, axis=1) / self.radius ** 2)


@dataclass(frozen=True)
class SpatialHead:
    axis: int = 1
    name: str = "spatial"
    bounds: tuple[float, float] = (0.0, 1.0)

    def score(self, x, c=None) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.exp(-x[:, self.axis] ** 2)


@dataclass(frozen=True)
class HeadConfig:
    """Constants for the default heads, indexed by the one-hot condition."""

    semantic_targets: tuple[tuple[float, float], ...] = ((3.0, 0.0), (2.0, 2.0))
    temporal_directions: tuple[tuple[float, float], ...] = ((1.0, 0.0), (1.0, 0.0))
    temporal_offsets: tuple[float, ...] = (2.0, 1.5)
    aesthetic_radius: float = 3.0

    def to_dict(self) -> dict:
        return {
            "semantic_targets": [list(t) for t in self.semantic_targets],
            "temporal_directions": [list(u) for u in self.temporal_directions],
            "temporal_offsets": list(self.temporal_offsets),
            "aesthetic_radius": self.aesthetic_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> HeadConfig:
        unknown = set(d) - {"semantic_targets", "temporal_directions", "temporal_offsets", "aesthetic_radius"}
        if unknown:
            raise ValueError(f"unknown head config fields: {sorted(unknown)}")
        base = cls()
        return cls(
            tuple(tuple(t) for t in d.get("semantic_targets", base.semantic_targets)),
            tuple(tuple(u) for u in d.get("temporal_directions", base.temporal_directions)),
            tuple(d.get("temporal_offsets", base.temporal_offsets)),
            float(d.get("aesthetic_radius", base.aesthetic_radius)),
        )


def default_heads(cfg: HeadConfig | None = None) -> list:
    cfg = cfg or HeadConfig()
    return [
        SemanticHead(cfg.semantic_targets),
        TemporalHead(cfg.temporal_directions, cfg.temporal_offsets),
        AestheticHead(cfg.aesthetic_radius),
        SpatialHead(),
    ]


@dataclass(frozen=True)
class RewardWeights:
    values: tuple[float, ...] = field(default=(0.25, 0.25, 0.25, 0.25))

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError(f"weights must be nonnegative with at least one positive: {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def single(cls, k: int, n_heads: int = 4) -> RewardWeights:
        vals = [0.0] * n_heads
        vals[k] = 1.0
        return cls(tuple(vals))


def evaluate_heads(x_term, c, heads) -> np.ndarray:
    """Per-head scores, shape (n, K) for a batch or (K,) for a single point."""
    if not heads:
        raise ValueError("need at least one reward head")
    x = np.asarray(x_term, dtype=np.float64)
    single = x.ndim == 1
    scores = np.stack([h.score(np.atleast_2d(x), c) for h in heads], axis=-1)
    return scores[0] if single else scores


def aggregate(scores, weights) -> np.ndarray | float:
    """Weighted total reward sum_k w_k R_k over the last axis."""
    lam = np.asarray(weights.values if isinstance(weights, RewardWeights) else weights, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-1] != lam.shape[0]:
        raise ValueError(f"{scores.shape[-1]} scores but {lam.shape[0]} weights")
    out = scores @ lam
    return float(out) if out.ndim == 0 else out
