"""ODE, SDE and random-window hybrid samplers on the grid s_i = i / T.

Progress time s runs from noise (s=0) to data (s=1). The SDE drift is
written in the score-SDE frame where time t = 1 - s decreases toward data
and the velocity points from data to noise; ``step_mean`` converts between
the two frames, so the diffusion correction pulls toward the data
manifold and the time marginals of the ODE are kept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .autodiff import Tensor, no_grad
from .velocity import VelocityField

MODES = ("ode_only", "sde_full", "hybrid")
TRAJECTORY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SamplerSchedule:
    T: int = 24
    w: int = 2
    noise_level: float = 0.7
    mode: str = "hybrid"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 1 <= self.w <= self.T:
            raise ValueError(f"window width must satisfy 1 <= w <= T, got w={self.w}, T={self.T}")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    def s(self, i: int) -> float:
        return i / self.T

    def t_paper(self, i: int) -> float:
        return 1.0 - i / self.T

    def sigma(self, i: int) -> float:
        # constant schedule; the drift correction compensates any choice
        return self.noise_level

    def with_mode(self, mode: str) -> SamplerSchedule:
        return SamplerSchedule(self.T, self.w, self.noise_level, mode)


@dataclass(frozen=True)
class WindowDraw:
    start: int
    width: int

    @property
    def steps(self) -> range:
        return range(self.start, self.start + self.width)

    def __contains__(self, i: int) -> bool:
        return self.start <= i < self.start + self.width


def draw_window(T: int, w: int, rng: np.random.Generator) -> WindowDraw:
    """Draw the window start uniformly from {0, ..., T - w}."""
    if not 1 <= w <= T:
        raise ValueError(f"window width must satisfy 1 <= w <= T, got w={w}, T={T}")
    return WindowDraw(int(rng.integers(0, T - w + 1)), w)


def ode_step(v, x, dt: float):
    return x + v * dt


def sde_drift(v, x, t_paper: float, sigma: float):
    """Drift of the marginal-preserving SDE, in the decreasing-time frame.

    mu = v + sigma^2 / (2 t) * (x + (1 - t) v), with ``v`` the velocity
    pointing toward noise.
    """
    if t_paper <= 0:
        raise ValueError(f"SDE drift is singular at t <= 0 (got t={t_paper})")
    return v + (sigma * sigma / (2.0 * t_paper)) * (x + (1.0 - t_paper) * v)


def mean_from_velocity(v, x, i: int, schedule: SamplerSchedule):
    """Mean of the Gaussian SDE transition at step i given velocity v(x, s_i).

    The step advances s by dt, which is dt_paper = -dt in the decreasing
    frame, where the velocity is -v.
    """
    drift = sde_drift(-v, x, schedule.t_paper(i), schedule.sigma(i))
    return x - drift * schedule.dt


def step_mean(v_field: VelocityField, x: np.ndarray, i: int, schedule: SamplerSchedule, c=None) -> Tensor:
    v = v_field(x, schedule.s(i), c)
    return mean_from_velocity(v, x, i, schedule)


def sde_step(v_field: VelocityField, x: np.ndarray, i: int, schedule: SamplerSchedule,
             rng: np.random.Generator | None = None, c=None, eps: np.ndarray | None = None):
    """One Euler-Maruyama step; returns (x_next, eps). Pass ``eps`` to fix the noise."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if eps is None:
        eps = rng.standard_normal(x.shape)
    with no_grad():
        mu = step_mean(v_field, x, i, schedule, c).data
    sigma = schedule.sigma(i)
    return mu + sigma * np.sqrt(schedule.dt) * eps, eps


def noise_block(seed: int, key: Iterable[int], n: int, T: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial points (n, d) and per-step noise (n, T, d) for one keyed block.

    Row j belongs to sample j of the block and column i to step i, so any
    schedule (or any worker) reads the same noise for a given
    (seed, key, sample, step).
    """
    rng = np.random.default_rng([int(seed), *(int(k) for k in key)])
    x0 = rng.standard_normal((n, d))
    eps = rng.standard_normal((n, T, d))
    return x0, eps


@dataclass
class TrajectoryRecord:
    """One rollout: the recorded SDE transitions plus the terminal sample."""

    steps: list[int]
    x_in: np.ndarray
    x_out: np.ndarray
    eps: np.ndarray
    sigma: list[float]
    dt: float
    condition: np.ndarray
    x_term: np.ndarray
    mode: str = "hybrid"
    window_start: int | None = None
    rewards: dict | None = None

    def to_json(self) -> str:
        doc = {
            "format_version": TRAJECTORY_FORMAT_VERSION,
            "mode": self.mode,
            "window_start": self.window_start,
            "condition": self.condition.tolist(),
            "dt": self.dt,
            "steps": [
                {
                    "i": int(i),
                    "x_in": self.x_in[j].tolist(),
                    "x_out": self.x_out[j].tolist(),
                    "eps": self.eps[j].tolist(),
                    "sigma": self.sigma[j],
                }
                for j, i in enumerate(self.steps)
            ],
            "x_term": self.x_term.tolist(),
        }
        if self.rewards is not None:
            doc["rewards"] = self.rewards
        return json.dumps(doc)

    @classmethod
    def from_json(cls, line: str) -> TrajectoryRecord:
        doc = json.loads(line)
        if doc.get("format_version") != TRAJECTORY_FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory format_version {doc.get('format_version')!r}")
        d = len(doc["x_term"])
        st = doc["steps"]
        return cls(
            steps=[s["i"] for s in st],
            x_in=np.array([s["x_in"] for s in st], dtype=np.float64).reshape(-1, d),
            x_out=np.array([s["x_out"] for s in st], dtype=np.float64).reshape(-1, d),
            eps=np.array([s["eps"] for s in st], dtype=np.float64).reshape(-1, d),
            sigma=[float(s["sigma"]) for s in st],
            dt=float(doc["dt"]),
            condition=np.array(doc["condition"], dtype=np.float64),
            x_term=np.array(doc["x_term"], dtype=np.float64),
            mode=doc["mode"],
            window_start=doc["window_start"],
            rewards=doc.get("rewards"),
        )


@dataclass
class RolloutBatch:
    """Rollouts of n samples sharing one condition, schedule and window.

    Arrays indexed (sample, recorded step, dim). ``mean`` holds the Gaussian
    transition means computed by the sampling policy at each recorded step.
    """

    schedule: SamplerSchedule
    window: WindowDraw | None
    condition: np.ndarray
    steps: list[int]
    x_in: np.ndarray
    x_out: np.ndarray
    eps: np.ndarray
    mean: np.ndarray
    x_term: np.ndarray
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.x_term.shape[0]

    def record(self, j: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            steps=list(self.steps),
            x_in=self.x_in[j].copy(),
            x_out=self.x_out[j].copy(),
            eps=self.eps[j].copy(),
            sigma=[self.schedule.sigma(i) for i in self.steps],
            dt=self.schedule.dt,
            condition=np.asarray(self.condition, dtype=np.float64).copy(),
            x_term=self.x_term[j].copy(),
            mode=self.schedule.mode,
            window_start=None if self.window is None else self.window.start,
        )


def sde_steps_for(schedule: SamplerSchedule, window: WindowDraw | None) -> list[int]:
    if schedule.mode == "ode_only":
        return []
    if schedule.mode == "sde_full":
        return list(range(schedule.T))
    if window is None:
        raise ValueError("hybrid mode needs a window")
    if window.width != schedule.w or not 0 <= window.start <= schedule.T - window.width:
        raise ValueError(f"window {window} out of range for T={schedule.T}, w={schedule.w}")
    return list(window.steps)


def rollout_batch(v_field: VelocityField, c, schedule: SamplerSchedule, window: WindowDraw | None,
                  x0: np.ndarray, eps: np.ndarray) -> RolloutBatch:
    """Integrate from ``x0`` through T steps; SDE steps consume ``eps[:, i]``.

    ``eps`` has shape (n, T, d) regardless of mode so that every mode reads
    the same stream for the same (sample, step).
    """
    sde = set(sde_steps_for(schedule, window))
    x = np.array(x0, dtype=np.float64)
    n, d = x.shape
    if eps.shape != (n, schedule.T, d):
        raise ValueError(f"eps must have shape {(n, schedule.T, d)}, got {eps.shape}")
    steps = sorted(sde)
    rec_in = np.empty((n, len(steps), d))
    rec_out = np.empty_like(rec_in)
    rec_eps = np.empty_like(rec_in)
    rec_mean = np.empty_like(rec_in)
    j = 0
    dt = schedule.dt
    with no_grad():
        for i in range(schedule.T):
            v = v_field(x, schedule.s(i), c).data
            if i not in sde:
                x = ode_step(v, x, dt)
                continue
            mu = mean_from_velocity(v, x, i, schedule)
            x_next = mu + schedule.sigma(i) * np.sqrt(dt) * eps[:, i]
            rec_in[:, j], rec_out[:, j] = x, x_next
            rec_eps[:, j], rec_mean[:, j] = eps[:, i], mu
            x = x_next
            j += 1
    return RolloutBatch(schedule, window, np.asarray(c) if c is not None else np.zeros(0),
                        steps, rec_in, rec_out, rec_eps, rec_mean, x)


def rollout(v_field: VelocityField, c, schedule: SamplerSchedule, window: WindowDraw | None,
            rng: np.random.Generator) -> TrajectoryRecord:
    """Single-sample rollout starting from x0 ~ N(0, I)."""
    x0 = rng.standard_normal((1, v_field.dim))
    eps = rng.standard_normal((1, schedule.T, v_field.dim))
    return rollout_batch(v_field, c, schedule, window, x0, eps).record(0)


def write_jsonl(path, records: Iterable[TrajectoryRecord]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def read_jsonl(path) -> list[TrajectoryRecord]:
    with open(path) as f:
        return [TrajectoryRecord.from_json(line) for line in f if line.strip()]
