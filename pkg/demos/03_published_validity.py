"""Rebuild the published between-method validity figures from their summaries.

Only pairwise Cramer's V values and a few chi-squared statistics are
reported, so tables are not recoverable; what can be checked is that V
follows from chi2, n and the table shape, and how the bands and the
multiple-testing corrections behave at this scale.
"""
from pathlib import Path

import numpy as np

from qualcode import report, validity
from qualcode.special import chi2_sf

methods = ["Zero-shot", "Few-shot", "Definitions", "Interactive"]
V = np.array([[1, 0.505, 0.359, 0.359],
              [0.505, 1, 0.613, 0.369],
              [0.359, 0.613, 1, 0.487],
              [0.359, 0.369, 0.487, 1]])

# %% V from a 2 x 21 pooled table over 3000 labels, and a 4 x 2 class table
for chi2, n, r, c in [(1147.722, 3000, 2, 21), (807.627, 6000, 4, 2), (437.382, 6000, 4, 2)]:
    v = validity.cramers_v(chi2, n, r, c)
    p = chi2_sf(chi2, (r - 1) * (c - 1))
    print(f"chi2={chi2:9.3f}  n={n}  {r}x{c}  V={v:.4f}  p={report.fmt_p(p)}  "
          f"{validity.disagreement_band(v)}")

# %% the heatmap with the published values
path = report.render_heatmap(V, methods, Path("demo_out") / "published_v.svg")
print("\nwrote", path)

# %% 435 within-method tests: Bonferroni is far stricter than BH
rng = np.random.default_rng(0)
p = np.concatenate([rng.uniform(0, 1, 420), rng.uniform(0, 1e-4, 15)])
_, bonf = validity.bonferroni(p)
_, bh = validity.benjamini_hochberg(p)
print(f"\nraw p<0.05: {(p < 0.05).sum()}   Bonferroni: {sum(bonf)}   BH: {sum(bh)}")
