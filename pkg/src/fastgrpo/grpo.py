"""Group-relative policy optimization over windowed SDE transitions.

Each iteration snapshots the policy, draws one window shared by every
group, rolls out N samples per condition with the snapshot, scores them
with the reward heads and takes gradient steps on the clipped surrogate
plus a Gaussian KL penalty toward the frozen reference model.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, minimum, no_grad
from .nn import AdamState, adam_step, save_checkpoint
from .rewards import HeadConfig, RewardWeights, aggregate, default_heads, evaluate_heads
from .samplers import RolloutBatch, SamplerSchedule, WindowDraw, draw_window, noise_block, rollout_batch, step_mean
from .velocity import MlpVelocity, VelocityField

log = logging.getLogger(__name__)

GRPO_MODES = ("fast", "full_sde_baseline")


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 16
    clip_eps: float = 0.2
    kl_beta: float = 0.04
    adv_eps: float = 1e-6
    lr: float = 1e-5
    iterations: int = 300
    conditions: tuple[int, ...] = (0, 1)
    schedule: SamplerSchedule = field(default_factory=SamplerSchedule)
    weights: RewardWeights = field(default_factory=RewardWeights)
    heads: HeadConfig = field(default_factory=HeadConfig)
    mode: str = "fast"
    inner_epochs: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    record_wallclock: bool = True

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.adv_eps <= 0:
            raise ValueError("adv_eps must be > 0")
        if self.mode not in GRPO_MODES:
            raise ValueError(f"mode must be one of {GRPO_MODES}, got {self.mode!r}")
        if self.inner_epochs < 1:
            raise ValueError("inner_epochs must be >= 1")
        object.__setattr__(self, "conditions", tuple(int(c) for c in self.conditions))

    @property
    def sampling_schedule(self) -> SamplerSchedule:
        return self.schedule.with_mode("hybrid" if self.mode == "fast" else "sde_full")


def compute_advantages(totals, adv_eps: float = 1e-6) -> np.ndarray:
    """(R - mean) / (population std + adv_eps)."""
    r = np.asarray(totals, dtype=np.float64)
    if r.shape[0] < 2:
        raise ValueError("a group needs at least two members")
    return (r - r.mean()) / (r.std() + adv_eps)


@dataclass
class StepTransition:
    """Recorded SDE transitions at one step index for a batch of samples."""

    i: int
    x_in: np.ndarray
    x_out: np.ndarray
    schedule: SamplerSchedule
    condition: np.ndarray | None = None
    mu_old: np.ndarray | None = None
    mu_ref: np.ndarray | None = None

    @property
    def variance(self) -> float:
        var = self.schedule.sigma(self.i) ** 2 * self.schedule.dt
        if var == 0:
            raise ValueError("transition variance sigma^2 dt is zero")
        return var


def step_log_prob(v_field: VelocityField, tr: StepTransition) -> Tensor:
    """log N(x_out; mu(x_in), sigma^2 dt I) per sample."""
    var = tr.variance
    mu = step_mean(v_field, tr.x_in, tr.i, tr.schedule, tr.condition)
    d = tr.x_out.shape[-1]
    sq = (tr.x_out - mu).square().sum(axis=1)
    return sq * (-0.5 / var) - 0.5 * d * math.log(2.0 * math.pi * var)


def ratio_from_mean(mu: Tensor, tr: StepTransition) -> Tensor:
    var = tr.variance
    new_sq = (tr.x_out - mu).square().sum(axis=1)
    old_sq = np.sum((tr.x_out - tr.mu_old) ** 2, axis=1)
    return ((new_sq - old_sq) * (-0.5 / var)).exp()


def policy_ratio(v_field: VelocityField, tr: StepTransition) -> Tensor:
    tr.variance  # fail before evaluating the model
    return ratio_from_mean(step_mean(v_field, tr.x_in, tr.i, tr.schedule, tr.condition), tr)


def _kl_terms(mu: Tensor, tr: StepTransition) -> Tensor:
    return (mu - tr.mu_ref).square().sum(axis=1) * (0.5 / tr.variance)


def _mean_of_terms(terms: list[Tensor]) -> Tensor:
    total = terms[0].sum()
    for t in terms[1:]:
        total = total + t.sum()
    return total * (1.0 / sum(t.shape[0] for t in terms))


def kl_penalty(v_field: VelocityField, transitions: list[StepTransition]) -> Tensor:
    """Mean over transitions of |mu - mu_ref|^2 / (2 sigma^2 dt)."""
    if not transitions:
        raise ValueError("kl_penalty needs at least one transition")
    return _mean_of_terms([
        _kl_terms(step_mean(v_field, tr.x_in, tr.i, tr.schedule, tr.condition), tr) for tr in transitions
    ])


@dataclass
class RolloutGroup:
    condition: np.ndarray
    window: WindowDraw | None
    batch: RolloutBatch
    scores: np.ndarray
    totals: np.ndarray
    advantages: np.ndarray
    mu_ref: np.ndarray | None = None

    def transitions(self) -> list[StepTransition]:
        return [
            StepTransition(
                i=i,
                x_in=self.batch.x_in[:, j],
                x_out=self.batch.x_out[:, j],
                schedule=self.batch.schedule,
                condition=self.condition,
                mu_old=self.batch.mean[:, j],
                mu_ref=None if self.mu_ref is None else self.mu_ref[:, j],
            )
            for j, i in enumerate(self.batch.steps)
        ]


def make_group(old_policy: VelocityField, reference: VelocityField | None, c: np.ndarray,
               schedule: SamplerSchedule, window: WindowDraw | None, x0: np.ndarray, eps: np.ndarray,
               heads, weights: RewardWeights, adv_eps: float) -> RolloutGroup:
    batch = rollout_batch(old_policy, c, schedule, window, x0, eps)
    scores = evaluate_heads(batch.x_term, c, heads)
    totals = aggregate(scores, weights)
    adv = compute_advantages(totals, adv_eps)
    mu_ref = None
    if reference is not None:
        mu_ref = np.empty_like(batch.mean)
        with no_grad():
            for j, i in enumerate(batch.steps):
                mu_ref[:, j] = step_mean(reference, batch.x_in[:, j], i, schedule, c).data
    return RolloutGroup(np.asarray(c), window, batch, scores, totals, adv, mu_ref)


def grpo_objective(v_field: VelocityField, groups: list[RolloutGroup], clip_eps: float,
                   kl_beta: float) -> tuple[Tensor, dict]:
    """Loss to minimize: -(clipped windowed surrogate) + beta * KL, averaged over groups.

    Only the re-evaluated means carry gradient; recorded states, cached old
    means and advantages are constants.
    """
    if not groups:
        raise ValueError("grpo_objective needs at least one group")
    surrogate = None
    kl = None
    clipped = 0
    count = 0
    for g in groups:
        trs = g.transitions()
        adv = g.advantages
        per_sample = None
        kl_terms = []
        for tr in trs:
            # one policy evaluation per transition serves both the ratio and the KL
            mu = step_mean(v_field, tr.x_in, tr.i, tr.schedule, tr.condition)
            r = ratio_from_mean(mu, tr)
            if kl_beta > 0:
                kl_terms.append(_kl_terms(mu, tr))
            term = minimum(r * adv, r.clip(1.0 - clip_eps, 1.0 + clip_eps) * adv)
            per_sample = term if per_sample is None else per_sample + term
            clipped += int(np.sum(np.abs(r.data - 1.0) > clip_eps))
            count += r.shape[0]
        g_obj = per_sample.mean() * (1.0 / len(trs))
        surrogate = g_obj if surrogate is None else surrogate + g_obj
        if kl_beta > 0:
            g_kl = _mean_of_terms(kl_terms)
            kl = g_kl if kl is None else kl + g_kl
    n = len(groups)
    loss = surrogate * (-1.0 / n)
    stats = {"surrogate": surrogate.item() / n, "clip_frac": clipped / max(count, 1), "kl": 0.0}
    if kl is not None:
        kl = kl * (1.0 / n)
        loss = loss + kl * kl_beta
        stats["kl"] = kl.item()
    return loss, stats


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, dump: dict):
        super().__init__(f"non-finite GRPO loss at iteration {iteration}; offending groups: {dump}")
        self.iteration = iteration
        self.dump = dump


@dataclass
class TrainerState:
    model: MlpVelocity
    reference: MlpVelocity
    opt: AdamState
    iteration: int = 0

    @classmethod
    def start(cls, pretrained: MlpVelocity, lr: float) -> TrainerState:
        return cls(pretrained.snapshot(), pretrained.snapshot(), AdamState(lr=lr))


@dataclass
class IterationMetrics:
    iteration: int
    head_means: np.ndarray
    r_total_mean: float
    a_std: float
    kl: float
    clip_frac: float
    policy_nfe: int
    wallclock_ms: float
    window_start: int | None = None
    policy_nfe_per_sample: float = 0.0

    def row(self) -> list:
        return [self.iteration, *(repr(float(h)) for h in self.head_means), repr(self.r_total_mean),
                repr(self.a_std), repr(self.kl), repr(self.clip_frac), self.policy_nfe,
                f"{self.wallclock_ms:.3f}"]


def metrics_header(n_heads: int) -> list[str]:
    return ["iter", *(f"head_{k + 1}" for k in range(n_heads)), "R_total_mean", "A_std", "kl",
            "clip_frac", "policy_nfe", "wallclock_ms"]


def collect_groups(state: TrainerState, config: GrpoConfig, heads, old: VelocityField,
                   it: int) -> list[RolloutGroup]:
    schedule = config.sampling_schedule
    window = None
    if config.mode == "fast":
        window = draw_window(schedule.T, schedule.w, np.random.default_rng([config.seed, it, 0]))
    reference = state.reference if config.kl_beta > 0 else None
    n_cond = max(config.conditions) + 1 if config.conditions else 0
    n_cond = max(n_cond, state.model.cond_dim)
    groups = []
    for ci in config.conditions:
        c = np.zeros(n_cond)
        c[ci] = 1.0
        x0, eps = noise_block(config.seed, (it, 1 + ci), config.group_size, schedule.T, state.model.dim)
        groups.append(make_group(old, reference, c, schedule, window, x0, eps, heads,
                                 config.weights, config.adv_eps))
    return groups


def train_iteration(state: TrainerState, config: GrpoConfig, heads=None, t0: float | None = None) -> IterationMetrics:
    heads = heads if heads is not None else default_heads(config.heads)
    it = state.iteration
    old = state.model.snapshot()
    groups = collect_groups(state, config, heads, old, it)

    nfe0 = state.model.nfe
    first_stats = None
    for _ in range(config.inner_epochs):
        state.model.store.zero_grad()
        loss, stats = grpo_objective(state.model, groups, config.clip_eps, config.kl_beta)
        if not np.isfinite(loss.data):
            dump = {
                f"condition_{int(np.argmax(g.condition))}": {
                    "totals": g.totals.tolist(),
                    "advantages": g.advantages.tolist(),
                    "window": None if g.window is None else g.window.start,
                }
                for g in groups
            }
            log.error("aborting iteration %d: loss=%r", it, loss.item())
            state.model.store.zero_grad()
            raise NonFiniteLossError(it, dump)
        loss.backward()
        adam_step(state.model.store, state.opt)
        if first_stats is None:
            first_stats = stats
    state.model.store.zero_grad()
    policy_nfe = state.model.nfe - nfe0
    state.iteration += 1

    scores = np.concatenate([g.scores for g in groups])
    totals = np.concatenate([g.totals for g in groups])
    advs = np.concatenate([g.advantages for g in groups])
    n_samples = sum(len(g.batch) for g in groups)
    ms = (time.perf_counter() - t0) * 1e3 if (config.record_wallclock and t0 is not None) else 0.0
    return IterationMetrics(
        iteration=it,
        head_means=scores.mean(axis=0),
        r_total_mean=float(totals.mean()),
        a_std=float(advs.std()),
        kl=first_stats["kl"],
        clip_frac=first_stats["clip_frac"],
        policy_nfe=policy_nfe,
        wallclock_ms=ms,
        window_start=groups[0].window.start if groups[0].window is not None else None,
        policy_nfe_per_sample=policy_nfe / (n_samples * config.inner_epochs),
    )


def train(pretrained: MlpVelocity, config: GrpoConfig, metrics_path=None, checkpoint_dir=None,
          state: TrainerState | None = None) -> tuple[TrainerState, list[IterationMetrics]]:
    state = state or TrainerState.start(pretrained, config.lr)
    heads = default_heads(config.heads)
    history = []
    t0 = time.perf_counter()
    for _ in range(config.iterations):
        history.append(train_iteration(state, config, heads, t0))
        if checkpoint_dir is not None and config.checkpoint_every and state.iteration % config.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"grpo_iter{state.iteration:05d}.json",
                            state.model.store, state.model.spec,
                            extra={"dim": state.model.dim, "cond_dim": state.model.cond_dim})
    if metrics_path is not None:
        write_metrics_csv(metrics_path, history, len(heads))
    return state, history


def write_metrics_csv(path, history: list[IterationMetrics], n_heads: int = 4) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(metrics_header(n_heads))
        for m in history:
            w.writerow(m.row())


def sample_terminal(model: VelocityField, condition_index: int, n: int, seed: int,
                    n_conditions: int = 2, T: int = 24) -> np.ndarray:
    """Deterministic ODE samples for one condition, keyed by (seed, condition)."""
    c = np.zeros(n_conditions)
    c[condition_index] = 1.0
    x0, eps = noise_block(seed, (10_000 + condition_index,), n, T, model.dim)
    return rollout_batch(model, c, SamplerSchedule(T=T, mode="ode_only"), None, x0, eps).x_term


def evaluate_heads_on_model(model: VelocityField, heads, conditions=(0, 1), n: int = 4096,
                            seed: int = 12345, n_conditions: int = 2) -> np.ndarray:
    """Per-head mean reward over held-out ODE samples, averaged over conditions."""
    per_cond = []
    for ci in conditions:
        c = np.zeros(n_conditions)
        c[ci] = 1.0
        x = sample_terminal(model, ci, n, seed, n_conditions)
        per_cond.append(evaluate_heads(x, c, heads).mean(axis=0))
    return np.mean(per_cond, axis=0)
