"""
Learning a model with a certified value
=======================================

The true machine dynamics are hidden behind a sampler. Each round we build
confidence sets from the counts so far, plan against them, and explore
optimistically. The robust value is a lower bound on what the policy
actually earns, with probability at least one minus beta.
"""

from rfmdp import LearningConfig, ModelSampler, learning_loop, mini_sysadmin, pac_report

sampler = ModelSampler(mini_sysadmin())

for method in ("mccormick", "interval-arithmetic", "l1-radius-sum"):
    config = LearningConfig(method=method, beta=1e-4, total_trajectories=2000, checkpoint_interval=500, seed=0)
    trace = learning_loop(sampler, config)
    print(method)
    for c in trace.checkpoints:
        print(f"  {c.trajectories:>5} trajectories  guarantee {c.guarantee:8.4f}  true {c.nominal:8.4f}")
    print("  ", pac_report(trace)["statement"])
