"""Compile a small RAM program into one circuit and run both side by side.

Run: python3 demos/ram_to_circuit.py
"""

from pcram import ramsim

prog, steps = ramsim.sample_program("sum")
print(prog.text())
lc = ramsim.compile(prog, steps)
print(f"{steps} steps -> circuit size {lc.circuit.size}, depth {lc.circuit.depth} "
      f"({lc.layer_depth} per step)")
for mem in ([0, 0, 0, 0, 1, 2, 3, 4], [0, 0, 0, 0, 200, 50, 9, 1]):
    want = ramsim.interpret(prog, mem, steps, return_ip=True)
    got = lc.run(mem)
    print(f"{mem} -> interpreter {want[0]}, circuit {list(got[0])}")
    assert tuple(got) == tuple(want)
