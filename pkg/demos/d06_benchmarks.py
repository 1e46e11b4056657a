"""
Benchmarks and sweeps
=====================

The ``ris-icsc-bench`` command runs schemes over seeds and one swept
parameter and writes a CSV table. The same functions are importable.
"""

# %%
import io

from ris_icsc import load_config
from ris_icsc.bench import load_spec, run_sweep, write_csv

spec = load_spec("""
parameter: ris_elements
values: [10, 30]
seed_count: 2
schemes: [with_ris, randphase, without_ris]
""")
cfg = load_config()
rows = run_sweep(spec, cfg)
buf = io.StringIO()
write_csv(buf, rows, cfg.K)
for line in buf.getvalue().splitlines():
    print(",".join(line.split(",")[:8]))

# %%
# Equivalent command line:
#
#   ris-icsc-bench --spec sweep.yaml --seed-count 20 --jobs 4 -o results.csv --traces traces.jsonl
