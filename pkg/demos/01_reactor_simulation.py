"""Simulating the second reactor of the two-reactor/separator plant.

The benchmark plant is a CSTR carrying out the series reaction
A -> B -> C.  Its state is [H2, xA2, xB2, T2]: liquid level, the mole
fractions of reactant A and desired product B, and temperature.  The
controlled inputs are the heat duty Q2 and the upstream feed rate F1,
with disturbances in the feed composition and temperature.

This script walks through the plant model itself: the balance
equations, the open-loop steady state, and how excited training data
is generated and stored.
"""

import numpy as np

from mhenet import plant

p = plant.PlantParams()
print("Reactor constants:")
for name in ("kA", "kB", "dHA", "dHB", "A2", "kv2", "Cp", "rho"):
    print(f"  {name:>4} = {getattr(p, name)}")

# The reaction rates follow a (positive-exponent) Arrhenius law in the
# reactor temperature; at the nominal operating point:
kA2, kB2 = plant.rate_coefficients(313.0, p)
print(f"\nAt T2 = 313 K: kA2 = {kA2:.5f} 1/s, kB2 = {kB2:.5f} 1/s")

# With constant nominal inputs the reactor settles to a steady state.
xs = plant.steady_state(p)
print("\nOpen-loop steady state [H2, xA2, xB2, T2]:")
print(" ", np.array2string(xs, precision=4))
resid = plant.derivatives(xs, plant.NOMINAL_INPUT, p)
print("  residual |dx/dt| =", np.linalg.norm(resid))

# Training data uses piecewise-constant random excitation of Q2 and F1
# around their nominal values, sampled every tau = 0.1 s.
cfg = plant.DatasetConfig(n_sequences=3, seq_len=500, n_train=2, n_test=1)
ds = plant.collect_dataset(cfg, seed=0)
seq = ds.train[0]
print(f"\nCollected {len(ds.sequences)} sequences of {cfg.seq_len} samples "
      f"(tau = {seq.tau} s):")
print("  input ranges :", np.array2string(seq.u.min(axis=0), precision=3),
      "to", np.array2string(seq.u.max(axis=0), precision=3))
print("  output ranges:", np.array2string(seq.y.min(axis=0), precision=3),
      "to", np.array2string(seq.y.max(axis=0), precision=3))

# Datasets round-trip through checksummed CSV files.
import tempfile, pathlib

with tempfile.TemporaryDirectory() as d:
    plant.save_dataset(d, ds)
    back = plant.load_dataset(d)   # verifies sha256 checksums
    same = all(np.array_equal(a.y, b.y)
               for a, b in zip(ds.sequences, back.sequences))
    files = sorted(q.name for q in pathlib.Path(d).iterdir())
    print(f"\nSaved to CSV and reloaded bit-exactly: {same}")
    print("  files:", ", ".join(files))
