"""How much label noise gives a coder of a given quality?

The analytic kappa of a NoisyReplay coder is compared with the realized
kappa of actual draws, then epsilon is bisected to hit target kappas.
"""
import numpy as np

from qualcode import coder, metrics, synth
from qualcode.backends import NoisyReplay
from qualcode.taxonomy import Level, default_scheme

scheme = default_scheme()
rows = synth.generate_rows(3000, seed=2, min_per_class=5)
gold = {r["id"]: scheme.ref(Level.MAJOR, int(r["major"])).name for r in rows}
counts = {c: 0 for c in scheme.major_names}
for g in gold.values():
    counts[g] += 1
counts = {c: n for c, n in counts.items() if n}

# %% analytic vs realized kappa along a grid of error rates
ids = sorted(gold)
truth = [gold[i] for i in ids]
print(" eps   expected  realized")
for eps in np.linspace(0, 0.6, 7):
    noisy = NoisyReplay(gold, eps, sorted(counts), seed=0)
    realized = metrics.cohen_kappa(truth, [noisy.label_for(i) for i in ids])
    print(f"{eps:4.1f}   {coder.expected_kappa(counts, eps):.4f}    {realized:.4f}")

# %% funnelling every error into the dominant class costs more kappa than spreading them
to_law = {c: {"Law and Crime": 1.0} for c in counts if c != "Law and Crime"}
print()
print("uniform errors, eps=0.3:", round(coder.expected_kappa(counts, 0.3), 4))
print("errors into Law and Crime:", round(coder.expected_kappa(counts, 0.3, to_law), 4))

# %% bisection to a few target agreement levels
print()
for target in (0.8, 0.6, 0.4):
    eps, k = coder.calibrate_epsilon(target, gold, sorted(counts), seed=0)
    print(f"target kappa {target:.2f}: eps={eps:.4f}, realized {k:.4f}")
