import numpy as np
import pytest

from fastgrpo.samplers import SamplerSchedule, noise_block
from fastgrpo.velocity import N_TIME_FEATURES, GaussianOracleVelocity, MlpVelocity, time_features


def test_feature_width():
    m = MlpVelocity.create(dim=3, cond_dim=2, hidden=(8,))
    assert m.spec.input_width == 3 + 2 + N_TIME_FEATURES
    assert m.features(np.zeros((4, 3)), 0.3, np.array([1.0, 0.0])).shape == (4, 3 + 2 + 5)


def test_time_features_values():
    f = time_features(0.125, 2)
    np.testing.assert_allclose(f[0], [0.125, np.sin(2 * np.pi * 0.125), np.sin(np.pi * 0.5),
                                      np.sin(np.pi), np.sin(2 * np.pi)], atol=1e-15)


def test_zero_output_layer_gives_zero_velocity(rng):
    m = MlpVelocity.create(zero_output=True)
    np.testing.assert_array_equal(m(rng.normal(size=(5, 2)), 0.4, np.array([0.0, 1.0])).data, 0.0)


def test_mlp_deterministic(rng):
    x = rng.normal(size=(3, 2))
    a = MlpVelocity.create(seed=5)(x, 0.2, np.array([1.0, 0.0])).data
    b = MlpVelocity.create(seed=5)(x, 0.2, np.array([1.0, 0.0])).data
    assert a.tobytes() == b.tobytes()


def test_mlp_matches_straight_line_forward(rng):
    m = MlpVelocity.create(hidden=(16, 16), seed=2)
    x, s, c = rng.normal(size=(1, 2)), 0.37, np.array([0.0, 1.0])
    h = np.concatenate([x[0], c, [s], np.sin(2 * np.pi * np.array([1, 2, 4, 8]) * s)])
    for k in range(3):
        h = h @ m.store.value(f"layer{k}.weight") + m.store.value(f"layer{k}.bias")
        if k < 2:
            h = h / (1 + np.exp(-h))
    np.testing.assert_allclose(m(x, s, c).data[0], h, rtol=1e-12)


def test_mlp_dimension_errors():
    m = MlpVelocity.create()
    with pytest.raises(ValueError, match="dimension"):
        m(np.zeros((1, 3)), 0.1, np.array([1.0, 0.0]))
    with pytest.raises(ValueError, match="condition"):
        m(np.zeros((1, 2)), 0.1, np.array([1.0, 0.0, 0.0]))


def test_mlp_finite_on_grid():
    m = MlpVelocity.create(seed=9)
    g = np.linspace(-6, 6, 25)
    x = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    for s in np.linspace(0, 1, 11):
        assert np.all(np.isfinite(m(x, s, np.array([1.0, 0.0])).data))


def test_nfe_counts_rows():
    m = MlpVelocity.create()
    m(np.zeros((7, 2)), 0.0, None)
    m(np.zeros((3, 2)), 0.5, None)
    assert m.nfe == 10


def test_oracle_symmetric_case_zero():
    o = GaussianOracleVelocity([0.0, 0.0], 1.0)
    for s in (0.0, 0.3, 0.9):
        np.testing.assert_array_equal(o(np.zeros((1, 2)), s).data, 0.0)


def test_oracle_coefficient_cancels_at_half():
    o = GaussianOracleVelocity([0.0], 1.0)
    assert o(np.array([[1.0]]), 0.5).data[0, 0] == 0.0


def test_oracle_degenerate_endpoint():
    with pytest.raises(ValueError, match="degenerate"):
        GaussianOracleVelocity([1.0, 0.0], 0.0)(np.zeros((1, 2)), 1.0)


def test_oracle_matches_monte_carlo_conditional_expectation():
    m, sd, s = np.array([1.0, -0.5]), 0.7, 0.6
    x = s * m + np.array([0.2, -0.1])
    r = np.random.default_rng(0)
    eps = r.standard_normal((1_000_000, 2))
    x1 = m + sd * r.standard_normal((1_000_000, 2))
    xs = (1 - s) * eps + s * x1
    near = np.sum((xs - x) ** 2, axis=1) < 0.05 ** 2
    u = (x1 - eps)[near]
    assert near.sum() > 2000
    est, se = u.mean(axis=0), u.std(axis=0, ddof=1) / np.sqrt(near.sum())
    v = GaussianOracleVelocity(m, sd)(x[None], s).data[0]
    assert np.all(np.abs(v - est) <= 3 * se), (v, est, se)


@pytest.mark.parametrize("d", [2, 4])
def test_oracle_ode_transports_to_target(d):
    mean = np.linspace(3.0, -1.0, d)
    o = GaussianOracleVelocity(mean, 0.5)
    sched = SamplerSchedule(T=200, mode="ode_only")
    x0, eps = noise_block(0, (d,), 100_000, 1, d)
    x = x0
    for i in range(sched.T):
        x = x + o(x, sched.s(i)).data * sched.dt
    assert np.max(np.abs(x.mean(axis=0) - mean)) <= 0.05
    assert np.max(np.abs(x.var(axis=0) - 0.25)) <= 0.1
