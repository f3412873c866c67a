"""
How the budget drives the injected noise
========================================

Sweeps epsilon and delta for the tracking plant and prints the noise level
each budget requires, plus the resulting fused accuracy predicted from the
covariances. Stricter budgets (smaller epsilon or delta) cost more noise.

Run with ``python demos/privacy_budget_sweep.py``.
"""

import numpy as np

from ldpfusion.fusion_center import fused_covariance, fusion_weights, perturbed_stacked_cov
from ldpfusion.privacy_mechanisms import PrivacyBudget, empirical_privacy_check, plan_mechanism
from ldpfusion.rng import substream
from ldpfusion.sim_harness import build_tracking_scenario

base = build_tracking_scenario()
ens, sp = base.ensemble, base.profile

print(f"{'eps':>5s} {'delta':>6s} {'kind':>10s} {'q_a':>9s} {'fused MSE':>10s} {'max exceed':>11s}")
for eps in (0.3, 0.6, 0.9):
    for delta in (0.05, 0.1, 0.2):
        budget = PrivacyBudget(eps, delta)
        plan = plan_mechanism(sp, budget, 2)
        P = perturbed_stacked_cov(ens, plan.q_a)
        mse = np.trace(fused_covariance(fusion_weights(P, 2, 2), P))
        blocks = [s.P_est + plan.q_a * np.eye(2) for s in ens.per_sensor]
        rep = empirical_privacy_check(blocks, budget, 20_000, substream(1, 3))
        print(f"{eps:5.2f} {delta:6.2f} {plan.kind.value:>10s} {plan.q_a:9.4f} {mse:10.4f} {rep.max_fraction:11.2e}")
