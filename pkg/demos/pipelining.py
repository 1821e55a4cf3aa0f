"""Issue one comparator per tick and watch the outputs land.

Run: python3 demos/pipelining.py
"""

import numpy as np

from pcram import builders as B
from pcram.machine import Machine, MachineConfig

w = 8
c = B.comparator(w)
d = c.depth
m = Machine(MachineConfig(w=w, I=64))
m.load_program([c])

n = 3 * d
src, dst = m.alloc(2 * n), m.alloc(2 * n)
vals = np.random.default_rng(1).integers(0, 256, 2 * n)
m.load_words(src, vals)

print(f"comparator on {w}-bit words: size {c.size}, depth {d}")
tickets = [m.run_circuit(0, (src + 2 * i) * w, (dst + 2 * i) * w) for i in range(n)]
landed = sum(t.ready_tick <= m.clock for t in tickets)
print(f"after {n} issues the clock is {m.clock}; {landed} results are already in memory")

m.wait_all()
r = m.report()
print(f"waiting for the rest costs {r.delay} ticks of delay over {r.wait_episodes} waiting episode(s)")
print(f"peak circuits in flight: {r.peak_inflight}")
lo = m.read_many(dst + 2 * np.arange(n))
assert lo.tolist() == np.minimum(vals[0::2], vals[1::2]).tolist()
print("all minima correct")
