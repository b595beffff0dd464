"""Construct validity: chi-squared homogeneity tests and their summaries.

Convergent validity compares samples coded by the same strategy (all
``C(N, 2)`` pairs); discriminant validity compares strategies sample by
sample (``N`` index-paired tests). Cramér's V gives the effect size, and
Bonferroni and Benjamini-Hochberg corrections run within each suite.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateTable, IndexMismatch, UnknownClass
from .special import chi2_sf

SIGNIFICANCE = 0.05

BANDS = (
    (0.20, "High Disagreement"),
    (0.10, "Moderate Disagreement"),
    (0.05, "Low Disagreement"),
    (0.0, "Very Low Disagreement"),
)


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    dof: int
    p_value: float
    n: int
    cramers_v: float
    shape: tuple = (0, 0)

    def to_dict(self):
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


def cramers_v(chi2: float, n: int, r: int, c: int) -> float:
    """Effect size ``sqrt(chi2 / (n * (min(r, c) - 1)))``."""
    if n <= 0 or min(r, c) < 2:
        raise ValueError("need n > 0 and at least a 2 x 2 table")
    return math.sqrt(chi2 / (n * (min(r, c) - 1)))


def chi2_homogeneity(table) -> ChiSquareResult:
    """Pearson chi-squared test of homogeneity on an r x c count table.

    Columns that are zero in every row are dropped first (the degrees of
    freedom shrink accordingly); an all-zero row, or fewer than two rows or
    columns left, is a :class:`DegenerateTable`. No continuity correction.
    """
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise DegenerateTable("table must be two-dimensional")
    if (t < 0).any():
        raise DegenerateTable("counts must be nonnegative")
    t = t[:, t.sum(axis=0) > 0]
    r, c = t.shape
    if r < 2 or c < 2:
        raise DegenerateTable(f"need at least 2 x 2 after dropping empty columns, got {r} x {c}")
    rows = t.sum(axis=1)
    if (rows == 0).any():
        raise DegenerateTable("table has an all-zero row")
    n = t.sum()
    expected = np.outer(rows, t.sum(axis=0)) / n
    chi2 = float(((t - expected) ** 2 / expected).sum())
    dof = (r - 1) * (c - 1)
    return ChiSquareResult(chi2, dof, chi2_sf(chi2, dof), int(round(n)),
                           cramers_v(chi2, n, r, c), (r, c))


# multiple comparisons --------------------------------------------------------

def _check_p(p_values):
    p = np.asarray(p_values, dtype=float)
    if ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise ValueError("p-values must lie in [0, 1]")
    return p


def bonferroni(p_values, level: float = SIGNIFICANCE):
    """Return ``(adjusted, reject)`` with ``adjusted = min(1, m * p)``."""
    p = _check_p(p_values)
    m = len(p)
    scaled = m * p
    adjusted = np.minimum(1.0, scaled)
    return adjusted.tolist(), (scaled <= level).tolist()


def benjamini_hochberg(p_values, q: float = SIGNIFICANCE):
    """Benjamini-Hochberg step-up procedure.

    Rejects the ``k`` smallest p-values, ``k`` being the largest rank with
    ``p_(k) <= k q / m``. Adjusted values are the running minimum from the
    top of ``min(1, m p_(j) / j)``. Both come back in input order.
    """
    p = _check_p(p_values)
    m = len(p)
    if m == 0:
        return [], []
    order = np.argsort(p, kind="mergesort")
    ranked = p[order]
    ranks = np.arange(1, m + 1)
    # compare m * p against rank * q (Bonferroni uses the same form at rank 1)
    passing = np.nonzero(m * ranked <= ranks * q)[0]
    k = passing[-1] + 1 if len(passing) else 0
    raw = np.minimum(1.0, m * ranked / ranks)
    adj_sorted = np.minimum.accumulate(raw[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    reject = np.zeros(m, dtype=bool)
    reject[order[:k]] = True
    return adjusted.tolist(), reject.tolist()


# suites ----------------------------------------------------------------------

@dataclass(frozen=True)
class ValiditySummary:
    scope: str  # "within" or "between"
    methods: tuple
    mean_chi2: float
    std_chi2: float
    mean_p: float
    std_p: float
    n_sig_raw: int
    n_sig_bonferroni: int
    n_sig_fdr: int
    total_tests: int
    results: tuple = field(default=(), repr=False)

    @property
    def label(self) -> str:
        return " vs ".join(self.methods)

    def to_dict(self, include_results: bool = True):
        d = {"scope": self.scope, "methods": list(self.methods), "mean_chi2": self.mean_chi2,
             "std_chi2": self.std_chi2, "mean_p": self.mean_p, "std_p": self.std_p,
             "n_sig_raw": self.n_sig_raw, "n_sig_bonferroni": self.n_sig_bonferroni,
             "n_sig_fdr": self.n_sig_fdr, "total_tests": self.total_tests,
             "std_kind": "sample (ddof=1)"}
        if include_results:
            d["results"] = [r.to_dict() for r in self.results]
        return d


def _std(x):
    # sample standard deviation; a single test has no spread
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def summarize(results, scope: str, methods) -> ValiditySummary:
    results = tuple(results)
    chi = np.array([r.chi2 for r in results])
    p = np.array([r.p_value for r in results])
    _, bonf = bonferroni(p)
    _, fdr = benjamini_hochberg(p)
    return ValiditySummary(scope, tuple(methods), float(chi.mean()), _std(chi),
                           float(p.mean()), _std(p), int((p < SIGNIFICANCE).sum()),
                           int(sum(bonf)), int(sum(fdr)), len(results), results)


def labels_of(run) -> list[str]:
    """Predicted class names of a coding run, or the sequence itself."""
    if hasattr(run, "predicted_names"):
        return run.predicted_names()
    return list(run)


def _pair_table(a, b):
    ca, cb = Counter(labels_of(a)), Counter(labels_of(b))
    classes = sorted(set(ca) | set(cb))
    return [[ca[k] for k in classes], [cb[k] for k in classes]]


def within_method_suite(runs, method: str = "") -> ValiditySummary:
    """Chi-squared test on every unordered pair of samples of one method."""
    runs = list(runs)
    if len(runs) < 2:
        raise IndexMismatch("within-method comparison needs at least two runs")
    results = [chi2_homogeneity(_pair_table(runs[i], runs[j]))
               for i, j in itertools.combinations(range(len(runs)), 2)]
    return summarize(results, "within", (method,))


def between_method_suite(runs_a, runs_b, methods=("A", "B")) -> ValiditySummary:
    """Chi-squared test per sample index, method A against method B."""
    runs_a, runs_b = list(runs_a), list(runs_b)
    if len(runs_a) != len(runs_b) or not runs_a:
        raise IndexMismatch(f"runs must pair by index: {len(runs_a)} vs {len(runs_b)}")
    results = [chi2_homogeneity(_pair_table(a, b)) for a, b in zip(runs_a, runs_b)]
    return summarize(results, "between", methods)


def pooled_pair_test(runs_a, runs_b) -> ChiSquareResult:
    """One 2 x k test on the pooled predictions of two methods."""
    pooled_a = [x for run in runs_a for x in labels_of(run)]
    pooled_b = [x for run in runs_b for x in labels_of(run)]
    return chi2_homogeneity(_pair_table(pooled_a, pooled_b))


def classwise_disagreement(runs_by_method: dict, class_name: str,
                           classes=None) -> ChiSquareResult:
    """Methods x {predicted ``class_name``, predicted anything else} test.

    ``classes`` (e.g. the scheme's names) bounds what ``class_name`` may be;
    without it the class must occur in some prediction.
    """
    pooled = {m: [x for run in runs for x in labels_of(run)]
              for m, runs in runs_by_method.items()}
    if len(pooled) < 2:
        raise IndexMismatch("need at least two methods")
    sizes = {len(v) for v in pooled.values()}
    if len(sizes) != 1:
        raise IndexMismatch(f"methods have unequal pooled item counts: {sorted(sizes)}")
    known = set(classes) if classes is not None else {x for v in pooled.values() for x in v}
    if class_name not in known:
        raise UnknownClass(f"unknown class {class_name!r}")
    table = []
    for labels in pooled.values():
        hits = sum(x == class_name for x in labels)
        table.append([hits, len(labels) - hits])
    return chi2_homogeneity(table)


def disagreement_band(v: float) -> str:
    for threshold, name in BANDS:
        if v >= threshold:
            return name
    return BANDS[-1][1]


def pairwise_v_matrix(runs_by_method: dict):
    """Symmetric method x method matrix of pooled Cramér's V (unit diagonal)."""
    methods = list(runs_by_method)
    m = np.eye(len(methods))
    tests = {}
    for i, j in itertools.combinations(range(len(methods)), 2):
        res = pooled_pair_test(runs_by_method[methods[i]], runs_by_method[methods[j]])
        m[i, j] = m[j, i] = res.cramers_v
        tests[(methods[i], methods[j])] = res
    return methods, m, tests
