"""From class counts to per-class noise schedules.

Walks the whole schedule pipeline: imbalance ratio, error-share
proportions, noise levels lambda_j, and the surviving-signal table
gamma_j^t. Run as `python demos/01_noise_schedules.py`.
"""

import numpy as np

from adpm import (ClassCensus, NoiseLevelConfig, build_schedule, class_proportions,
                  imbalance_ratio, lambda_vector, linear_beta)

# Four medical benchmark censuses (max and min class sizes). Their
# tabulated imbalance ratios are the floor of the exact max/min.
benchmarks = {
    "clinical skin (6 classes)": (845, 52),
    "dermatoscopy (7 classes)": (6705, 115),
    "crowdsourced skin (20 classes)": (1078, 3),
    "endoscopy (23 classes)": (1148, 6),
}
print("imbalance ratios")
for name, counts in benchmarks.items():
    exact, floored = imbalance_ratio(ClassCensus(counts))
    print(f"  {name:32s} max/min = {counts[0]}/{counts[1]}"
          f"  -> {floored} (exact {float(exact):.4f})")

# A six-class long tail with a geometric size profile, nu ~ 16.
counts = (100, 57, 32, 19, 11, 6)
census = ClassCensus(counts)
cfg = NoiseLevelConfig(alpha=1.0 / 6.0, c=5.0)

p = class_proportions(census, cfg)
lam = lambda_vector(census, cfg)
print("\nper-class quantities (alpha = 1/6, c = 5)")
print(f"  {'class':>5s} {'n_j':>5s} {'p_j':>8s} {'lambda_j':>9s}")
for j, n in enumerate(counts):
    print(f"  {j:5d} {n:5d} {p[j]:8.4f} {lam[j]:9.3f}")
print("  rarer classes carry a larger share of the generalization error")
print("  and receive a strictly larger noise level.")

# gamma_j^t = prod_{i<=t} (1 - lambda_j beta^i): the fraction of signal
# amplitude^2 class j retains after t steps. Tail classes decay fastest.
beta = linear_beta(100, 1e-4, 0.004)
sched = build_schedule(beta, lam)
print("\nsurviving signal gamma_j^t")
steps = [0, 25, 50, 75, 100]
print("  t:      " + "".join(f"{t:>8d}" for t in steps))
for j in (0, 2, 5):
    row = "".join(f"{sched.gamma[j, t]:8.4f}" for t in steps)
    print(f"  class {j}:{row}")

# lambda = 1 recovers the isotropic chain: gamma equals the cumulative
# product of (1 - beta) exactly.
iso = build_schedule(beta, np.array([1.0]))
alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
print("\nisotropic special case: max |gamma - alpha_bar| =",
      float(np.abs(iso.gamma[0] - alpha_bar).max()))
