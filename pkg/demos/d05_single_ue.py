"""
Single UE, single stream
========================

With one UE there is no interference: both receivers are matched filters,
the precoder is a combination of two directions and the RIS phases
co-phase every reflected path with the direct one.
"""

# %%
import numpy as np

from ris_icsc import SensingCaseInfeasible, algorithm4, algorithm5, load_config, realize_scenario, two_ray_precoder

# The two-direction precoder in its three regimes.
h, g = np.array([1.0, 0.0]), np.array([0.6, 0.8])
for eta in (0.2, 0.8, 1.5):
    try:
        f, case = two_ray_precoder(h, g, 1.0, eta)
        print(f"eta={eta}: case {case}, |h^H f|^2={abs(np.vdot(h, f)) ** 2:.3f}, |g^H f|^2={abs(np.vdot(g, f)) ** 2:.3f}")
    except SensingCaseInfeasible as exc:
        print(f"eta={eta}: {exc}")

# %%
# The closed-form loop against the general solver on the same realization.
cfg = load_config(text="K: 1\nd: 1")
ch = realize_scenario(cfg)
fast = algorithm5(ch, cfg)
general = algorithm4(ch, cfg)
print(f"closed form: {fast.report.weighted_total * 1e3:.3f} ms in {fast.iterations} passes")
print(f"general:     {general.report.weighted_total * 1e3:.3f} ms in {general.iterations} outer iterations")
