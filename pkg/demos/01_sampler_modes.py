"""Three samplers, one target.

The Gaussian oracle knows the exact velocity that carries N(0, I) onto
N((3, 0), 0.25 I). We integrate it deterministically, stochastically at
every step, and with a two-step stochastic window, then compare the clouds.
"""
import numpy as np

from fastgrpo.samplers import SamplerSchedule, WindowDraw, noise_block, rollout_batch
from fastgrpo.stats import energy_test
from fastgrpo.velocity import GaussianOracleVelocity

oracle = GaussianOracleVelocity(mean=[3.0, 0.0], std=0.5)
schedule = SamplerSchedule(T=24, w=2, noise_level=0.7)
window = WindowDraw(start=10, width=2)

# every mode reads the same starting points and the same per-step noise
x0, eps = noise_block(seed=0, key=(0,), n=20_000, T=schedule.T, d=2)

clouds = {}
for mode in ("ode_only", "sde_full", "hybrid"):
    batch = rollout_batch(oracle, None, schedule.with_mode(mode), window, x0, eps)
    clouds[mode] = batch.x_term
    print(f"{mode:9s} mean={batch.x_term.mean(0).round(3)} var={batch.x_term.var(0).round(3)} "
          f"recorded steps={batch.steps}")

# disjoint rows so the two samples are independent
a, b = clouds["ode_only"][:2000], clouds["hybrid"][2000:4000]
res = energy_test(a, b, permutations=500, rng=np.random.default_rng(1))
print(f"energy distance ode vs hybrid: {res.energy:.5f}  p={res.p_value:.3f}")

# with the noise switched off the hybrid sampler is the ODE, bit for bit
quiet = SamplerSchedule(noise_level=0.0)
same = rollout_batch(oracle, None, quiet, window, x0, eps).x_term
print("noise-free hybrid == ode:", np.array_equal(same, clouds["ode_only"]))
