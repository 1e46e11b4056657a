"""
Offloading and edge-CPU allocation
==================================

For fixed uplink rates each UE splits its task so that local and offloaded
processing finish together; the edge CPU is split by bisection on the
budget multiplier.
"""

# %%
from ris_icsc.compute_alloc import (
    alternate_compute,
    edge_allocation,
    integer_offload,
    optimal_offload_fraction,
    task_latency,
)
from ris_icsc import load_config

V, c, f_l, f_e, R = 1000, 1.0, 100.0, 100.0, 100.0
v_hat = optimal_offload_fraction(V, c, f_l, f_e, R)
v = integer_offload(V, c, f_l, f_e, R)
print(f"continuous optimum {v_hat:.3f} bits, integer optimum {v} bits")
print(f"local time {(V - v_hat) * c / f_l:.4f} s equals offload time {v_hat / R + v_hat * c / f_e:.4f} s")
print(f"T(v)={task_latency(v, V, c, f_l, f_e, R):.4f} s vs all-local {task_latency(0, V, c, f_l, f_e, R):.1f} s")

# %%
# Two UEs sharing 1 GHz of edge CPU: the one with more work gets more.
f = edge_allocation(xi=[1, 1], V=[2e5, 5e4], c=[500, 500], f_l=[1e8, 1e8], R=[2e6, 2e6], f_total=1e9)
print("edge shares (Hz):", f.round(0), "sum", f.sum())

# %%
# The alternation used by the solver, on the reference scenario with fixed rates.
cfg = load_config()
history = []
comp = alternate_compute(None, None, cfg, rates=[3e6, 2e6], history=history)
print("volumes:", comp.v, "objective per pass:", [round(h, 5) for h in history])
