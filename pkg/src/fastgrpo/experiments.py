"""Experiment drivers behind the command line: each writes a report bundle.

A bundle directory holds ``config.json`` (the resolved config), CSV data,
SVG plots and ``summary.json`` with a pass/fail boolean per assertion.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import svg
from .config import (AblateRun, ConfigError, EquivalenceRun, GrpoRun, GrpoSection, PlotRun, PretrainRun,
                     to_mapping)
from .flow_matching import ToyDataset, load_model, pretrain
from .grpo import GrpoConfig, collect_groups, evaluate_heads_on_model, sample_terminal, train, TrainerState
from .nn import save_checkpoint
from .rewards import HEAD_NAMES, aggregate, default_heads
from .samplers import MODES, SamplerSchedule, WindowDraw, draw_window, noise_block, rollout_batch, write_jsonl
from .stats import energy_distance, energy_test
from .velocity import GaussianOracleVelocity, MlpVelocity

log = logging.getLogger(__name__)

SUMMARY_FORMAT_VERSION = 1
ABLATION_RUNS = ("semantic_only", "temporal_only", "aesthetic_only", "spatial_only", "multi")


def _f(x: float) -> str:
    return repr(float(x))


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("FASTGRPO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FASTGRPO_THREADS must be an integer, got {env!r}")
    return default if default is not None else (os.cpu_count() or 1)


def _prepare(out: Path, command: str, cfg) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({"command": command, **to_mapping(cfg)}, indent=2) + "\n")
    return out


def _write_summary(out: Path, command: str, assertions: dict, info: dict) -> dict:
    summary = {
        "format_version": SUMMARY_FORMAT_VERSION,
        "command": command,
        "passed": all(a["passed"] for a in assertions.values()),
        "assertions": assertions,
        **info,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    return summary


def _check(passed, **detail) -> dict:
    return {"passed": bool(passed), **detail}


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def resolve_path(p: str, base_dir: Path | None) -> Path:
    path = Path(p)
    if path.is_absolute() or path.exists() or base_dir is None:
        return path
    return base_dir / path


# pretrain --------------------------------------------------------------------

def mode_coverage(model, dataset: ToyDataset, n: int, seed: int) -> list[float]:
    """Fraction of ODE samples within 3 std of some component mean, per condition."""
    out = []
    for i in range(dataset.n_conditions):
        x = sample_terminal(model, i, n, seed, dataset.n_conditions)
        means, stds = dataset.component_means(i), dataset.component_stds(i)
        d = np.linalg.norm(x[:, None, :] - means[None], axis=2)
        out.append(float(np.mean(np.any(d <= 3.0 * stds[None], axis=1))))
    return out


def run_pretrain(cfg: PretrainRun, out, base_dir: Path | None = None) -> dict:
    out = _prepare(out, "pretrain", cfg)
    ds = ToyDataset(seed=cfg.seed)
    model = MlpVelocity.create(ds.dim, ds.n_conditions, tuple(cfg.model.hidden), cfg.model.activation,
                               seed=cfg.model.init_seed)
    t0 = time.perf_counter()
    rows = pretrain(model, ds, cfg.pretrain_config(), out / "checkpoint.json", out / "loss.csv")
    elapsed = time.perf_counter() - t0
    assertions = {
        "checkpoint_written": _check((out / "checkpoint.json").exists()),
        "loss_csv_written": _check((out / "loss.csv").exists(), rows=len(rows)),
    }
    info = {"steps": cfg.steps, "train_seconds": elapsed}
    if rows:
        losses = np.array([r[1] for r in rows])
        k = max(1, min(200, len(losses) // 5))
        info["initial_loss"] = float(losses[:k].mean())
        info["final_loss"] = float(losses[-k:].mean())
        (out / "loss.svg").write_text(svg.line_plot([(np.array([r[0] for r in rows]), losses, "fm loss")],
                                                    "flow-matching loss", "step", "loss"))
    if cfg.check_coverage and cfg.steps > 0:
        cov = mode_coverage(model, ds, cfg.coverage_samples, cfg.seed + 1)
        assertions["mode_coverage"] = _check(min(cov) >= cfg.coverage_threshold, per_condition=cov,
                                             threshold=cfg.coverage_threshold)
    return _write_summary(out, "pretrain", assertions, info)


# equivalence -----------------------------------------------------------------

def equivalence_clouds(v_field, c, schedule: SamplerSchedule, window, n: int, seed: int) -> dict[str, np.ndarray]:
    """Terminal samples per sampler mode. All modes share x0 and the noise stream."""
    x0, eps = noise_block(seed, (0,), n, schedule.T, v_field.dim)
    return {
        mode: rollout_batch(v_field, c, schedule.with_mode(mode), window, x0, eps).x_term
        for mode in MODES
    }


def run_equivalence(cfg: EquivalenceRun, out, base_dir: Path | None = None) -> dict:
    out = _prepare(out, "equivalence", cfg)
    t0 = time.perf_counter()
    schedule = SamplerSchedule(cfg.T, cfg.w, cfg.noise_level, "hybrid")
    if cfg.window_start is None:
        window = draw_window(cfg.T, cfg.w, np.random.default_rng([cfg.seed, 99]))
    else:
        window = WindowDraw(cfg.window_start, cfg.w)
    if cfg.n_samples < 3 * cfg.test_samples:
        raise ConfigError("n_samples must be at least 3 * test_samples (disjoint test subsamples)")

    targets = [("oracle", GaussianOracleVelocity(cfg.oracle.mean, cfg.oracle.std), None)]
    if cfg.checkpoint:
        model = load_model(resolve_path(cfg.checkpoint, base_dir))
        c = np.zeros(model.cond_dim)
        c[cfg.checkpoint_condition] = 1.0
        targets.append(("checkpoint", model, c))

    assertions: dict = {}
    moment_rows, energy_rows = [], []
    info: dict = {"window_start": window.start, "n_samples": cfg.n_samples, "test_samples": cfg.test_samples}
    scatter = []
    for name, field, c in targets:
        clouds = equivalence_clouds(field, c, schedule, window, cfg.n_samples, cfg.seed)
        if name == "oracle":
            ref_mean = np.asarray(cfg.oracle.mean, dtype=float)
            ref_var = np.full(len(ref_mean), cfg.oracle.std ** 2)
        else:
            ref_mean = clouds["ode_only"].mean(axis=0)
            ref_var = clouds["ode_only"].var(axis=0)
        for mode, x in clouds.items():
            mean, var = x.mean(axis=0), x.var(axis=0)
            for k in range(x.shape[1]):
                moment_rows.append([name, mode, k, _f(mean[k]), _f(var[k]),
                                    _f(abs(mean[k] - ref_mean[k])), _f(abs(var[k] - ref_var[k]))])
            mean_err = float(np.max(np.abs(mean - ref_mean)))
            var_err = float(np.max(np.abs(var - ref_var)))
            assertions[f"{name}_{mode}_mean"] = _check(mean_err <= cfg.mean_tol, max_error=mean_err, tol=cfg.mean_tol)
            assertions[f"{name}_{mode}_var"] = _check(var_err <= cfg.var_tol, max_error=var_err, tol=cfg.var_tol)
        m = cfg.test_samples
        blocks = {mode: clouds[mode][k * m:(k + 1) * m] for k, mode in enumerate(MODES)}
        for a in range(len(MODES)):
            for b in range(a + 1, len(MODES)):
                ma, mb = MODES[a], MODES[b]
                res = energy_test(blocks[ma], blocks[mb], cfg.permutations,
                                  np.random.default_rng([cfg.seed, 7, a, b]))
                energy_rows.append([name, f"{ma}|{mb}", _f(res.energy), _f(res.statistic), _f(res.p_value),
                                    res.n_x, res.n_y])
                assertions[f"{name}_energy_{ma}_vs_{mb}"] = _check(not res.rejects(cfg.alpha), p_value=res.p_value,
                                                                   alpha=cfg.alpha)
        info[f"{name}_hybrid_equals_ode"] = bool(np.array_equal(clouds["hybrid"], clouds["ode_only"]))
        scatter = [(clouds[mode], f"{name}: {mode}") for mode in MODES] if not scatter else scatter

    _write_csv(out / "moments.csv", ["target", "mode", "coord", "mean", "var", "mean_err", "var_err"], moment_rows)
    _write_csv(out / "energy.csv", ["target", "pair", "energy", "statistic", "p_value", "n_x", "n_y"], energy_rows)
    (out / "scatter.svg").write_text(svg.scatter_plot(scatter, "terminal samples by sampler mode"))
    info["seconds"] = time.perf_counter() - t0
    return _write_summary(out, "equivalence", assertions, info)


# grpo ------------------------------------------------------------------------

def _train_job(args):
    """Run one GRPO training; top-level so it can run in a worker process."""
    name, pretrained_path, config, out = args
    pretrained = load_model(pretrained_path)
    t0 = time.perf_counter()
    state, history = train(pretrained, config, metrics_path=Path(out) / f"metrics_{name}.csv",
                           checkpoint_dir=Path(out) if config.checkpoint_every else None)
    seconds = time.perf_counter() - t0
    save_checkpoint(Path(out) / f"model_{name}.json", state.model.store, state.model.spec,
                    extra={"dim": state.model.dim, "cond_dim": state.model.cond_dim})
    curve = [(m.iteration, m.r_total_mean, m.policy_nfe) for m in history]
    return name, curve, seconds


def run_trainings(jobs: list[tuple[str, GrpoConfig]], pretrained_path: Path, out: Path) -> dict:
    args = [(name, str(pretrained_path), cfg, str(out)) for name, cfg in jobs]
    workers = min(len(args), worker_count())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_job, args))
    else:
        results = [_train_job(a) for a in args]
    return {name: {"curve": curve, "seconds": sec} for name, curve, sec in results}


def first_reach(values: np.ndarray, target: float, window: int) -> int | None:
    """First index whose trailing mean over ``window`` values reaches ``target``."""
    c = np.cumsum(np.insert(values, 0, 0.0))
    for k in range(len(values)):
        lo = max(0, k + 1 - window)
        if (c[k + 1] - c[lo]) / (k + 1 - lo) >= target and k + 1 >= min(window, len(values)):
            return k
    return None


def _mean_energy_to(model_a, model_b, n: int, seed: int, conditions) -> float:
    vals = [energy_distance(sample_terminal(model_a, ci, n, seed, model_a.cond_dim),
                            sample_terminal(model_b, ci, n, seed, model_b.cond_dim)) for ci in conditions]
    return float(np.mean(vals))


def run_grpo(cfg: GrpoRun, out, base_dir: Path | None = None) -> dict:
    out = _prepare(out, "grpo", cfg)
    pre_path = resolve_path(cfg.pretrained_checkpoint, base_dir)
    if not pre_path.exists():
        raise ConfigError(f"pretrained checkpoint not found: {pre_path}")
    pretrained = load_model(pre_path)
    sections: dict[str, GrpoSection] = {}
    for r in cfg.runs:
        if r.name in sections:
            raise ConfigError(f"duplicate run name {r.name!r}")
        sections[r.name] = cfg.grpo.override(r.overrides, f"runs[{r.name}]")
    configs = {name: s.grpo_config(cfg.seed) for name, s in sections.items()}
    results = run_trainings(list(configs.items()), pre_path, out)

    heads = default_heads(cfg.grpo.heads.head_config())
    base_heads = evaluate_heads_on_model(pretrained, heads, cfg.grpo.conditions, cfg.eval_samples, cfg.eval_seed,
                                         pretrained.cond_dim)
    eval_rows = [["pretrained", *(_f(h) for h in base_heads), ""]]
    evals = {}
    for name, conf in configs.items():
        model = load_model(out / f"model_{name}.json")
        h = evaluate_heads_on_model(model, heads, conf.conditions, cfg.eval_samples, cfg.eval_seed, model.cond_dim)
        evals[name] = {"heads": h, "R_total": float(aggregate(h, conf.weights)),
                       "baseline_R_total": float(aggregate(base_heads, conf.weights)), "model": model}
        eval_rows.append([name, *(_f(v) for v in h), _f(evals[name]["R_total"])])
    _write_csv(out / "eval.csv", ["run", *HEAD_NAMES, "R_total"], eval_rows)

    series_it, series_nfe = [], []
    for name, res in results.items():
        it = np.array([c[0] for c in res["curve"]])
        r = np.array([c[1] for c in res["curve"]])
        nfe = np.cumsum([c[2] for c in res["curve"]])
        series_it.append((it, r, name))
        series_nfe.append((nfe, r, name))
    (out / "reward_vs_iteration.svg").write_text(
        svg.line_plot(series_it, "mean total reward during training", "iteration", "R_total mean"))
    (out / "reward_vs_nfe.svg").write_text(
        svg.line_plot(series_nfe, "mean total reward vs policy evaluations", "cumulative policy NFE", "R_total mean"))

    assertions: dict = {}
    info: dict = {"runs": {n: {"seconds": r["seconds"], "iterations": len(r["curve"]),
                               "eval_heads": evals[n]["heads"].tolist(), "eval_R_total": evals[n]["R_total"]}
                           for n, r in results.items()},
                  "pretrained_eval_heads": base_heads.tolist()}
    for name, res in results.items():
        assertions[f"{name}_rows"] = _check(len(res["curve"]) == configs[name].iterations,
                                            rows=len(res["curve"]))

    if cfg.efficiency is not None:
        e = cfg.efficiency
        for key in (e.fast, e.baseline):
            if key not in results:
                raise ConfigError(f"efficiency references unknown run {key!r}")
        base_r = np.array([c[1] for c in results[e.baseline]["curve"]])
        base_nfe = float(np.sum([c[2] for c in results[e.baseline]["curve"]]))
        target = float(base_r[-e.smoothing:].mean())
        fast_r = np.array([c[1] for c in results[e.fast]["curve"]])
        fast_nfe = np.cumsum([c[2] for c in results[e.fast]["curve"]])
        k = first_reach(fast_r, target, e.smoothing)
        used = None if k is None else float(fast_nfe[k])
        frac = None if used is None else used / base_nfe
        assertions["efficiency"] = _check(frac is not None and frac < e.max_nfe_fraction, target=target,
                                          fast_reach_iteration=k, fast_nfe=used, baseline_nfe=base_nfe,
                                          nfe_fraction=frac, max_fraction=e.max_nfe_fraction)

    if cfg.kl_comparison is not None:
        kc = cfg.kl_comparison
        for key in (kc.no_kl, kc.kl):
            if key not in results:
                raise ConfigError(f"kl_comparison references unknown run {key!r}")
        conds = cfg.grpo.conditions
        ed = {key: _mean_energy_to(evals[key]["model"], pretrained, kc.eval_samples, kc.eval_seed, conds)
              for key in (kc.no_kl, kc.kl)}
        assertions["kl_limits_drift"] = _check(ed[kc.no_kl] > ed[kc.kl], energy_no_kl=ed[kc.no_kl],
                                               energy_kl=ed[kc.kl])
        for key in (kc.no_kl, kc.kl):
            assertions[f"{key}_improves_R_total"] = _check(
                evals[key]["R_total"] > evals[key]["baseline_R_total"],
                R_total=evals[key]["R_total"], baseline=evals[key]["baseline_R_total"])

    if cfg.save_trajectories:
        for name, conf in configs.items():
            model = evals[name]["model"]
            state = TrainerState(model, pretrained, None, iteration=conf.iterations)
            groups = collect_groups(state, conf, default_heads(conf.heads), model, conf.iterations)
            records = []
            for g in groups:
                for j in range(len(g.batch)):
                    rec = g.batch.record(j)
                    rec.rewards = {"heads": g.scores[j].tolist(), "R_total": float(g.totals[j]),
                                   "advantage": float(g.advantages[j])}
                    records.append(rec)
            write_jsonl(out / f"trajectories_{name}.jsonl", records)

    return _write_summary(out, "grpo", assertions, info)


# ablation --------------------------------------------------------------------

def ablation_weights(name: str) -> list[float]:
    if name == "multi":
        return [0.25, 0.25, 0.25, 0.25]
    k = ABLATION_RUNS.index(name)
    return [1.0 if i == k else 0.0 for i in range(4)]


def run_ablate(cfg: AblateRun, out, base_dir: Path | None = None) -> dict:
    out = _prepare(out, "ablate", cfg)
    pre_path = resolve_path(cfg.pretrained_checkpoint, base_dir)
    if not pre_path.exists():
        raise ConfigError(f"pretrained checkpoint not found: {pre_path}")
    pretrained = load_model(pre_path)
    configs = {name: cfg.grpo.override({"weights": ablation_weights(name)}, name).grpo_config(cfg.seed)
               for name in ABLATION_RUNS}
    results = run_trainings(list(configs.items()), pre_path, out)

    heads = default_heads(cfg.grpo.heads.head_config())
    conds = cfg.grpo.conditions
    table = {"baseline": evaluate_heads_on_model(pretrained, heads, conds, cfg.eval_samples, cfg.eval_seed,
                                                 pretrained.cond_dim)}
    for name in ABLATION_RUNS:
        model = load_model(out / f"model_{name}.json")
        table[name] = evaluate_heads_on_model(model, heads, conds, cfg.eval_samples, cfg.eval_seed, model.cond_dim)
    _write_csv(out / "table.csv", ["run", *HEAD_NAMES],
               [[name, *(_f(v) for v in vals)] for name, vals in table.items()])

    runs = np.array([table[n] for n in ABLATION_RUNS])
    assertions = {}
    for k, head in enumerate(HEAD_NAMES):
        own = runs[k, k]
        others = np.delete(runs[:, k], k)
        assertions[f"{head}_only_best_on_{head}"] = _check(own > others.max(), own=float(own),
                                                           best_other=float(others.max()))
    assertions["aesthetic_only_degrades_semantic"] = _check(
        table["aesthetic_only"][0] < table["multi"][0],
        aesthetic_only=float(table["aesthetic_only"][0]), multi=float(table["multi"][0]))
    assertions["multi_not_below_baseline"] = _check(
        bool(np.all(table["multi"] >= table["baseline"])),
        multi=table["multi"].tolist(), baseline=table["baseline"].tolist())
    info = {"table": {k: v.tolist() for k, v in table.items()},
            "seconds": {n: r["seconds"] for n, r in results.items()}}
    return _write_summary(out, "ablate", assertions, info)


# plot ------------------------------------------------------------------------

def read_csv_columns(path: Path) -> dict[str, list[str]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ValueError(f"{path}: CSV has no data rows")
    header = rows[0]
    return {h: [r[i] for r in rows[1:]] for i, h in enumerate(header)}


def run_plot(cfg: PlotRun, out, base_dir: Path | None = None) -> dict:
    out = _prepare(out, "plot", cfg)
    assertions = {}
    for spec in cfg.plots:
        series = []
        for s in spec.series:
            path = resolve_path(s.csv, base_dir)
            try:
                cols = read_csv_columns(path)
            except OSError as exc:
                raise ConfigError(f"cannot read {path}: {exc}") from exc
            if s.y not in cols or (s.x is not None and s.x not in cols):
                raise ConfigError(f"{path}: missing column {s.y if s.y not in cols else s.x!r}")
            y = np.array(cols[s.y], dtype=float)
            x = np.arange(len(y), dtype=float) if s.x is None else np.array(cols[s.x], dtype=float)
            if s.cumulative_x:
                x = np.cumsum(x)
            series.append((x, y, s.label or s.y))
        if spec.kind == "line":
            doc = svg.line_plot(series, spec.title, spec.x_label, spec.y_label)
        elif spec.kind == "scatter":
            doc = svg.scatter_plot([(np.stack([x, y], axis=1), label) for x, y, label in series],
                                   spec.title, spec.x_label, spec.y_label)
        else:
            raise ConfigError(f"unknown plot kind {spec.kind!r}")
        (out / spec.output).write_text(doc)
        assertions[f"wrote_{spec.output}"] = _check(True)
    return _write_summary(out, "plot", assertions, {})


RUNNERS = {
    "pretrain": run_pretrain,
    "grpo": run_grpo,
    "equivalence": run_equivalence,
    "ablate": run_ablate,
    "plot": run_plot,
}
