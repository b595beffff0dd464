"""Stratified repeated-measures sampling and the sample-design search.

Samples are proportional to the corpus class distribution (largest-remainder
apportionment), so every sample of size ``n`` has the same stratum counts;
only the drawn record ids differ between seeds.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import Corpus, class_counts
from .errors import (DegenerateTable, EmptyCorpusAfterExclusion, MissingFile,
                     NoDesignFound, SampleTooLarge, StratumExhausted)
from .taxonomy import Level

MIN_EXPECTED = 5
MIN_FRACTION_OK = 0.80


def _exact(w) -> Fraction:
    # floats go through repr so 0.55 means 55/100, not its binary neighbour
    return Fraction(repr(w)) if isinstance(w, float) else Fraction(w)


def apportion(weights: dict, n: int) -> dict[str, int]:
    """Largest-remainder allocation of ``n`` seats proportional to ``weights``.

    Remainders are compared exactly; ties go to the alphabetically first
    class. The result always sums to ``n``.

    >>> apportion({"A": 0.55, "B": 0.45}, 10)
    {'A': 6, 'B': 4}
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    exact = {k: _exact(w) for k, w in weights.items()}
    total = sum(exact.values())
    if total <= 0:
        raise ValueError("weights must have a positive sum")
    quotas = {k: n * w / total for k, w in exact.items()}
    seats = {k: q.numerator // q.denominator for k, q in quotas.items()}
    leftover = n - sum(seats.values())
    order = sorted(quotas, key=lambda k: (-(quotas[k] - seats[k]), k))
    for k in order[:leftover]:
        seats[k] += 1
    return {k: seats[k] for k in sorted(seats)}


def _label_of(record, level):
    ref = record.gold_major if level is Level.MAJOR else record.gold_sub
    return ref.name if ref else None


def exclude_rare_classes(corpus: Corpus, min_count: int = 5,
                         level: Level = Level.MAJOR) -> tuple[Corpus, list[str]]:
    """Remove records whose class occurs fewer than ``min_count`` times."""
    counts = class_counts(corpus, level)
    excluded = sorted(name for name, c in counts.items() if c < min_count)
    drop = set(excluded)
    kept = tuple(r for r in corpus.records if _label_of(r, level) not in drop
                 and _label_of(r, level) is not None)
    if not kept:
        raise EmptyCorpusAfterExclusion(f"no classes with at least {min_count} records")
    provenance = dict(corpus.provenance)
    provenance["excluded_classes"] = excluded
    return Corpus(kept, provenance), excluded


class Sample(NamedTuple):
    ids: tuple
    strata: dict


def _strata_pools(corpus, level):
    pools = {}
    for rec in corpus.records:
        label = _label_of(rec, level)
        if label is not None:
            pools.setdefault(label, []).append(rec.id)
    return {k: sorted(v) for k, v in sorted(pools.items())}


def stratified_sample(corpus: Corpus, n: int, seed: int,
                      level: Level = Level.MAJOR) -> Sample:
    """Draw ``n`` records with proportional strata.

    Within each stratum (visited in name order) ids are drawn without
    replacement from the sorted id list, then the whole sample is shuffled
    with the same generator so batches do not come out grouped by class.
    """
    pools = _strata_pools(corpus, level)
    available = sum(len(p) for p in pools.values())
    if n > available:
        raise SampleTooLarge(n, available)
    alloc = apportion({k: len(v) for k, v in pools.items()}, n)
    rng = np.random.default_rng(seed)
    picked = []
    for label, pool in pools.items():
        k = alloc[label]
        if k > len(pool):
            raise StratumExhausted(label, k, len(pool))
        idx = rng.choice(len(pool), size=k, replace=False)
        picked += [pool[i] for i in sorted(idx)]
    order = rng.permutation(len(picked))
    strata = {k: v for k, v in alloc.items() if v > 0}
    return Sample(tuple(picked[i] for i in order), strata)


@dataclass(frozen=True)
class SampleSet:
    n: int
    N: int
    samples: tuple
    strata: tuple
    excluded: tuple = ()
    seed: int = 0
    level: str = Level.MAJOR.value

    def to_dict(self):
        return {"n": self.n, "N": self.N, "seed": self.seed, "level": self.level,
                "excluded": list(self.excluded),
                "strata": [dict(s) for s in self.strata],
                "samples": [list(s) for s in self.samples]}

    @classmethod
    def from_dict(cls, d):
        samples = tuple(tuple(s) for s in d["samples"])
        strata = d.get("strata")
        return cls(int(d["n"]), int(d["N"]), samples,
                   tuple(dict(s) for s in strata) if strata else tuple({} for _ in samples),
                   tuple(d.get("excluded", ())), int(d.get("seed", 0)),
                   d.get("level", Level.MAJOR.value))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "SampleSet":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def draw_sample_set(corpus: Corpus, n: int, N: int, seed: int,
                    level: Level = Level.MAJOR, excluded=()) -> SampleSet:
    """``N`` independent stratified samples from seeds ``seed+1 .. seed+N``.

    Samples may share records; this is a repeated-measures design, not a
    partition.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    draws = [stratified_sample(corpus, n, seed + i, level) for i in range(1, N + 1)]
    return SampleSet(n, N, tuple(d.ids for d in draws), tuple(d.strata for d in draws),
                     tuple(excluded), seed, level.value)


# expected-frequency rule ------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCheck:
    cells_total: int
    cells_ok: int
    fraction_ok: float
    passed: bool


def expected_counts(table) -> np.ndarray:
    """Expected cell counts ``row_total * col_total / n`` under homogeneity."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] < 1:
        raise DegenerateTable("table must be two-dimensional and nonempty")
    rows = t.sum(axis=1)
    cols = t.sum(axis=0)
    if (rows == 0).any():
        raise DegenerateTable("table has an all-zero row")
    if (cols == 0).any():
        raise DegenerateTable("table has an all-zero column")
    return np.outer(rows, cols) / t.sum()


def check_chi2_assumption(count_vectors) -> AssumptionCheck:
    """Fraction of expected cells >= 5 in the (vectors x classes) table."""
    t = np.asarray(count_vectors, dtype=float)
    if t.ndim != 2 or t.shape[0] < 2:
        raise DegenerateTable("need at least two count vectors")
    e = expected_counts(t)
    ok = int((e >= MIN_EXPECTED - 1e-12).sum())
    frac = ok / e.size
    # a single class leaves nothing to test, however large the cells
    return AssumptionCheck(int(e.size), ok, frac, frac >= MIN_FRACTION_OK and t.shape[1] >= 2)


def strata_matrix(strata, classes=None) -> tuple[list[str], np.ndarray]:
    """Stack per-sample stratum dicts into a matrix, dropping empty classes."""
    if classes is None:
        classes = sorted({k for s in strata for k, v in s.items() if v > 0})
    m = np.array([[s.get(c, 0) for c in classes] for s in strata], dtype=float)
    return list(classes), m


def design_checks(strata, mode: str = "pairwise") -> list[AssumptionCheck]:
    """Assumption checks over a set of samples.

    ``pairwise`` checks every 2 x k table (the layout of the within-method
    chi-squared tests); ``pooled`` checks the single N x k table.
    """
    if mode == "pooled":
        _, m = strata_matrix(strata)
        return [check_chi2_assumption(m)]
    if mode != "pairwise":
        raise ValueError(f"unknown mode {mode!r}")
    checks = []
    for a, b in itertools.combinations(range(len(strata)), 2):
        _, m = strata_matrix([strata[a], strata[b]])
        checks.append(check_chi2_assumption(m))
    return checks


@dataclass(frozen=True)
class Design:
    n: int
    N: int
    check: AssumptionCheck
    sample_set: SampleSet = field(repr=False)

    def __iter__(self):
        return iter((self.n, self.N, self.check))


def _worst(checks):
    return min(checks, key=lambda c: c.fraction_ok)


def _try_size(corpus, size, count_max, seed, mode, level):
    """Smallest count in 2..count_max whose checks all pass, else None.

    Returns ``(count, worst_check, strata)`` or ``(None, worst_check, None)``.
    """
    strata = []
    worst = None
    for count in range(1, count_max + 1):
        strata.append(stratified_sample(corpus, size, seed + count, level).strata)
        if count < 2:
            continue
        if mode == "pairwise":
            new = [check_chi2_assumption(strata_matrix([strata[i], strata[-1]])[1])
                   for i in range(count - 1)]
            worst = _worst(new + ([worst] if worst else []))
            if not all(c.passed for c in new):
                # a failing pair stays in every larger set
                return None, worst, None
            return count, worst, strata
        check = design_checks(strata, "pooled")[0]
        worst = check if worst is None or check.fraction_ok > worst.fraction_ok else worst
        if check.passed:
            return count, check, strata
    return None, worst, None


def search_design(corpus: Corpus, size_start: int = 500, size_step: int = 10,
                  count_max: int = 30, seed: int = 0, mode: str = "pairwise",
                  level: Level = Level.MAJOR) -> Design:
    """Nested search for a sample design satisfying the 80% rule.

    The outer loop walks sample sizes down from ``size_start`` in steps of
    ``size_step``; for each size the inner loop grows the sample count from
    2 until the checks pass or ``count_max`` is reached. Sizes larger than
    the corpus are skipped. Walking stops at the first size that fails after
    a passing one, and the smallest passing design is returned.
    """
    if size_step < 1 or count_max < 2:
        raise ValueError("size_step must be >= 1 and count_max >= 2")
    found = None
    best_fraction, best_at = 0.0, None
    for size in range(size_start, 0, -size_step):
        if size > len(corpus):
            continue
        count, worst, _ = _try_size(corpus, size, count_max, seed, mode, level)
        if worst is not None and worst.fraction_ok > best_fraction:
            best_fraction, best_at = worst.fraction_ok, (size, count)
        if count is None:
            if found is not None:
                break
            continue
        found = (size, count, worst)
    if found is None:
        raise NoDesignFound(best_fraction, best_at)
    size, count, worst = found
    sample_set = draw_sample_set(corpus, size, count, seed, level,
                                 corpus.provenance.get("excluded_classes", ()))
    return Design(size, count, worst, sample_set)


def sample_class_counts(sample_ids, corpus: Corpus, level: Level = Level.MAJOR) -> Counter:
    by_id = corpus.by_id()
    return Counter(_label_of(by_id[i], level) for i in sample_ids)
