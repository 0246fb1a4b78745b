"""Windowed versus full-trajectory policy optimization on the semantic head.

Both runs start from the same pretrained model and see the same rewards.
The windowed run only re-evaluates the policy on two of the 24 steps, so
each iteration costs a twelfth of the trainable-model evaluations.

Run demos/02_pretrain_toy_flow.py first (it writes toy_flow.json).
"""
import numpy as np

from fastgrpo.flow_matching import load_model
from fastgrpo.grpo import GrpoConfig, evaluate_heads_on_model, train
from fastgrpo.rewards import RewardWeights, default_heads

pretrained = load_model("toy_flow.json")
heads = default_heads()
print("pretrained head means:", evaluate_heads_on_model(pretrained, heads, n=1024).round(3))

for mode in ("fast", "full_sde_baseline"):
    cfg = GrpoConfig(mode=mode, iterations=150, lr=3e-4, weights=RewardWeights.single(0), record_wallclock=False)
    state, history = train(pretrained, cfg)
    nfe = np.cumsum([m.policy_nfe for m in history])
    tail = np.mean([m.r_total_mean for m in history[-20:]])
    print(f"{mode:18s} last-20 reward {tail:.3f}  policy NFE {nfe[-1]:>7d}  "
          f"per sample {history[-1].policy_nfe_per_sample:g}")
    print("    held-out head means:", evaluate_heads_on_model(state.model, heads, n=1024).round(3))
