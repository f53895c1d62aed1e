"""
A small benchmark
=================

Synthetic block-diagonal pools, all five methods, markdown output.  The
full-size run (n=1000, p=50) is ``expdesign bench --k 60 100``.
"""

from expdesign.bench import SyntheticSpec, emit_table, gen_synthetic, run_bench

pools = [gen_synthetic(SyntheticSpec(200, 10, seed)) for seed in range(3)]
rows = []
for seed, X in enumerate(pools):
    rows += run_bench([X], ["A", "D", "E"], [20, 40], seeds=[seed])

print(emit_table(rows, "md"))
