"""Run the whole harness end to end on a synthetic CAP-shaped corpus.

No network: the coder is a NoisyReplay backend that echoes the gold label
and flips it to another class with probability epsilon.

    python demos/01_quickstart.py [out_dir]
"""
import json
import sys
from pathlib import Path

from qualcode import synth
from qualcode.pipeline import RunConfig, read_manifest, run_pipeline

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")

# %% a corpus of 1500 summaries with the published class imbalance
rows = synth.generate_rows(1500, seed=11, min_per_class=5, dirty=30)
corpus_csv = synth.write_csv(rows, out / "corpus.csv")
print(len(rows), "rows written to", corpus_csv)

# %% one config drives every stage; n=None would search for a design instead
cfg = RunConfig(corpus=str(corpus_csv), seed=11, out=str(out), n=150, N=6,
                backend="noisy", epsilon=0.2)
run_pipeline(cfg)

# %% what each stage consumed and produced
for rec in read_manifest(out):
    print(f"{rec['stage']:<9} {len(rec['inputs']):>3} inputs  {len(rec['outputs']):>3} outputs")

prov = json.loads((out / "corpus.provenance.json").read_text())
print("dropped during preprocessing:", prov.get("dropped"))

# %% headline tables
for name in ("performance", "validity_within", "validity_between"):
    print()
    print((out / "reports" / f"{name}.md").read_text())

print("figures:", sorted(p.name for p in (out / "plots").iterdir()))
