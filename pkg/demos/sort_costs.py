"""Sort growing inputs and print the cost report next to (n/k) log n.

Run: python3 demos/sort_costs.py
"""

import math

import numpy as np

from pcram.algorithms import sort, sort_kit
from pcram.machine import MachineConfig

config = MachineConfig(w=32, I=2048)
kit = sort_kit(config)
print(f"sort kit: k={kit.k}, {kit.gates} gates, {kit.io_nodes} I/O nodes")
print(f"{'n':>8} {'time':>9} {'delay':>7} {'time / ((n/k) log n)':>22}")
for e in range(10, 16):
    n = 1 << e
    A = np.random.default_rng(e).integers(0, 1 << 32, n, dtype=np.uint64)
    m = kit.machine(config)
    out = sort(m, kit, A)
    assert np.array_equal(out, np.sort(A))
    print(f"{n:>8} {m.time:>9} {m.delay:>7} {m.time / ((n / kit.k) * math.log2(n)):>22.2f}")
