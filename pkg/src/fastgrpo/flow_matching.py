"""Conditional flow-matching pretraining on toy 2-D mixtures."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .nn import AdamState, adam_step, save_checkpoint
from .velocity import MlpVelocity

LOSS_CSV_HEADER = ("step", "loss", "wallclock_ms")


@dataclass(frozen=True)
class Component:
    mean: tuple[float, ...]
    std: float
    weight: float = 1.0


def _default_components():
    return (
        (Component((3.0, 0.0), 0.5),),
        (Component((-2.0, 2.0), 0.5), Component((2.0, 2.0), 0.5)),
    )


@dataclass(frozen=True)
class ToyDataset:
    """Condition i (one-hot e_i) selects a Gaussian mixture ``components[i]``.

    Defaults: e1 -> N((3, 0), 0.25 I); e2 -> equal mixture at (-2, 2), (2, 2), std 0.5.
    """

    components: tuple[tuple[Component, ...], ...] = field(default_factory=_default_components)
    seed: int = 0

    @property
    def n_conditions(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return len(self.components[0][0].mean)

    def condition(self, i: int) -> np.ndarray:
        c = np.zeros(self.n_conditions)
        c[i] = 1.0
        return c

    def sample_condition(self, i: int, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = self.components[i]
        w = np.array([comp.weight for comp in comps])
        which = rng.choice(len(comps), size=n, p=w / w.sum())
        means = np.array([comp.mean for comp in comps])[which]
        stds = np.array([comp.std for comp in comps])[which]
        return means + stds[:, None] * rng.standard_normal((n, self.dim))

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """n pairs (x1, c) with conditions drawn uniformly."""
        idx = rng.integers(0, self.n_conditions, size=n)
        x1 = np.empty((n, self.dim))
        for i in range(self.n_conditions):
            sel = idx == i
            x1[sel] = self.sample_condition(i, int(sel.sum()), rng)
        return x1, np.eye(self.n_conditions)[idx]

    def batch(self, step: int, n: int) -> tuple[np.ndarray, np.ndarray, np.random.Generator]:
        """The batch for a training step, a pure function of (seed, step)."""
        rng = np.random.default_rng([self.seed, step])
        x1, c = self.sample(n, rng)
        return x1, c, rng

    def component_means(self, i: int) -> np.ndarray:
        return np.array([comp.mean for comp in self.components[i]])

    def component_stds(self, i: int) -> np.ndarray:
        return np.array([comp.std for comp in self.components[i]])


def single_gaussian_dataset(mean=(3.0, 0.0), std: float = 0.5, seed: int = 0) -> ToyDataset:
    return ToyDataset(((Component(tuple(mean), std),),), seed)


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 20_000
    batch_size: int = 256
    lr: float = 1e-4
    cond_dropout: float = 0.1
    seed: int = 0
    record_wallclock: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.cond_dropout < 1.0:
            raise ValueError("cond_dropout must lie in [0, 1)")


def interpolate(x1, eps, s):
    """Rectified-flow point and target: x_s = (1 - s) eps + s x1, u = x1 - eps."""
    x1 = np.asarray(x1, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1 and x1.ndim == 2:
        s = s[:, None]
    return (1.0 - s) * eps + s * x1, x1 - eps


def condition_dropout(c: np.ndarray, p: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Zero whole condition vectors with probability p; returns (c', dropped mask)."""
    dropped = rng.random(c.shape[0]) < p
    out = c.copy()
    out[dropped] = 0.0
    return out, dropped


def fm_loss(model, x1: np.ndarray, c: np.ndarray, rng: np.random.Generator | None = None,
            s: np.ndarray | None = None, eps: np.ndarray | None = None) -> Tensor:
    """Mean over the batch of |v(x_s, s, c) - (x1 - eps)|^2."""
    x1 = np.atleast_2d(x1)
    n = x1.shape[0]
    if n == 0:
        raise ValueError("fm_loss needs a nonempty batch")
    if s is None:
        s = rng.random(n)
    if eps is None:
        eps = rng.standard_normal(x1.shape)
    xs, target = interpolate(x1, eps, s)
    v = model(xs, s, c)
    return (v - target).square().sum(axis=1).mean()


def pretrain(model: MlpVelocity, dataset: ToyDataset, config: PretrainConfig,
             checkpoint_path=None, csv_path=None, log_every: int = 1) -> list[tuple[int, float, float]]:
    """Adam on fm_loss; returns rows (step, loss, wallclock_ms).

    Step k draws its batch, times, noise and dropout from a generator keyed
    by (seed, k), so runs are reproducible bit for bit.
    """
    ds = ToyDataset(dataset.components, config.seed)
    opt = AdamState(lr=config.lr)
    rows: list[tuple[int, float, float]] = []
    t0 = time.perf_counter()
    for step in range(config.steps):
        x1, c, rng = ds.batch(step, config.batch_size)
        if config.cond_dropout > 0:
            c, _ = condition_dropout(c, config.cond_dropout, rng)
        model.store.zero_grad()
        loss = fm_loss(model, x1, c, rng)
        loss.backward()
        adam_step(model.store, opt)
        if step % log_every == 0 or step == config.steps - 1:
            ms = (time.perf_counter() - t0) * 1e3 if config.record_wallclock else 0.0
            rows.append((step, loss.item(), ms))
    model.store.zero_grad()
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model.store, model.spec,
                        extra={"dim": model.dim, "cond_dim": model.cond_dim})
    if csv_path is not None:
        write_loss_csv(csv_path, rows)
    return rows


def write_loss_csv(path, rows) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(LOSS_CSV_HEADER)
            for step, loss, ms in rows:
                w.writerow((step, repr(float(loss)), f"{ms:.3f}"))
    except OSError as exc:
        raise OSError(f"cannot write loss CSV {path}: {exc}") from exc


def load_model(path) -> MlpVelocity:
    from .nn import load_checkpoint

    store, spec, extra = load_checkpoint(path)
    dim = int(extra.get("dim", spec.output_width))
    cond_dim = int(extra.get("cond_dim", spec.input_width - dim - 5))
    return MlpVelocity(store, spec, dim, cond_dim)
