import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastgrpo.autodiff import Tensor
from fastgrpo.flow_matching import (PretrainConfig, ToyDataset, condition_dropout, fm_loss, interpolate, load_model,
                                    pretrain, single_gaussian_dataset)
from fastgrpo.velocity import MlpVelocity


def test_interpolate_endpoints(rng):
    x1, eps = rng.normal(size=2), rng.normal(size=2)
    np.testing.assert_array_equal(interpolate(x1, eps, 0.0)[0], eps)
    np.testing.assert_array_equal(interpolate(x1, eps, 1.0)[0], x1)


def test_interpolate_worked_example():
    xs, u = interpolate([2.0, 0.0], [0.0, 2.0], 0.25)
    np.testing.assert_allclose(xs, [0.5, 1.5])
    np.testing.assert_allclose(u, [2.0, -2.0])


class FixedOutput:
    dim = 2

    def __init__(self, out):
        self.out = out

    def __call__(self, x, s, c=None):
        return Tensor(self.out)


def test_fm_loss_zero_when_output_is_target(rng):
    x1, eps, s = rng.normal(size=(8, 2)), rng.normal(size=(8, 2)), rng.random(8)
    assert fm_loss(FixedOutput(x1 - eps), x1, None, s=s, eps=eps).item() == 0.0


def test_fm_loss_zero_model_equals_mean_target_norm(rng):
    model = MlpVelocity.create(zero_output=True)
    x1, c = ToyDataset().sample(64, rng)
    draw = np.random.default_rng(5)
    loss = fm_loss(model, x1, c, draw).item()
    replay = np.random.default_rng(5)
    replay.random(64)  # times, drawn first
    eps = replay.standard_normal((64, 2))
    assert loss == pytest.approx(np.mean(np.sum((x1 - eps) ** 2, axis=1)), rel=1e-14)


def test_fm_loss_empty_batch():
    with pytest.raises(ValueError):
        fm_loss(MlpVelocity.create(), np.zeros((0, 2)), np.zeros((0, 2)), np.random.default_rng(0))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_fm_loss_nonnegative(seed):
    r = np.random.default_rng(seed)
    x1, c = ToyDataset().sample(16, r)
    assert fm_loss(MlpVelocity.create(hidden=(8,), seed=seed % 7), x1, c, r).item() >= 0.0


def test_loss_decreases_over_first_200_steps():
    model = MlpVelocity.create(dim=2, cond_dim=1)
    rows = pretrain(model, single_gaussian_dataset(), PretrainConfig(steps=200, batch_size=256, lr=1e-3,
                                                                      cond_dropout=0.0))
    blocks = np.array([r[1] for r in rows]).reshape(5, 40).mean(axis=1)
    assert np.all(np.diff(blocks) < 0), blocks


def test_dropout_fraction():
    r = np.random.default_rng(3)
    c = np.eye(2)[r.integers(0, 2, 100_000)]
    out, dropped = condition_dropout(c, 0.1, r)
    assert abs(dropped.mean() - 0.1) <= 0.01
    assert np.all(out[dropped] == 0) and np.all(out[~dropped] == c[~dropped])


def test_zero_step_run_keeps_initialization(tmp_path):
    model = MlpVelocity.create(seed=4)
    init = model.store.flat_values()
    rows = pretrain(model, ToyDataset(), PretrainConfig(steps=0), tmp_path / "ck.json", tmp_path / "loss.csv")
    assert rows == []
    assert load_model(tmp_path / "ck.json").store.flat_values().tobytes() == init.tobytes()
    assert (tmp_path / "loss.csv").read_text() == "step,loss,wallclock_ms\n"


def test_seeded_runs_bit_identical(tmp_path):
    curves = []
    for k in range(2):
        model = MlpVelocity.create()
        pretrain(model, ToyDataset(), PretrainConfig(steps=5000, batch_size=64, lr=1e-3, record_wallclock=False),
                 csv_path=tmp_path / f"loss{k}.csv")
        curves.append((tmp_path / f"loss{k}.csv").read_bytes())
    assert curves[0] == curves[1]
    with open(tmp_path / "loss0.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "loss", "wallclock_ms"] and len(rows) == 5001


def test_io_failure_names_path(tmp_path):
    bad = tmp_path / "missing_dir" / "loss.csv"
    with pytest.raises(OSError, match="missing_dir"):
        pretrain(MlpVelocity.create(), ToyDataset(), PretrainConfig(steps=1, batch_size=4), csv_path=bad)


def test_config_validation():
    with pytest.raises(ValueError):
        PretrainConfig(cond_dropout=1.0)
    with pytest.raises(ValueError):
        PretrainConfig(steps=-1)


def test_dataset_batches_are_pure_functions_of_step():
    ds = ToyDataset(seed=3)
    a, b = ds.batch(17, 32), ds.batch(17, 32)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], ds.batch(18, 32)[0])


def test_pretrained_modes_covered(pretrain_bundle):
    _, summary = pretrain_bundle
    cov = summary["assertions"]["mode_coverage"]
    assert cov["passed"] and min(cov["per_condition"]) >= 0.95
