"""Classification performance and inter-rater agreement statistics.

Labels are plain class names; unparsed predictions carry the name
``taxonomy.UNPARSED`` and count as a category of their own, so they are
wrong for accuracy and F1 but never silently dropped from agreement.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import LengthMismatch, SchemeMismatch, TooFewUnits, UnresolvableLabel
from .taxonomy import UNPARSED, LabelScheme


def _check_lengths(a, b, minimum=1):
    if len(a) != len(b):
        raise LengthMismatch(len(a), len(b))
    if len(a) < minimum:
        raise TooFewUnits(f"need at least {minimum} items, got {len(a)}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold classes, columns predicted classes."""

    classes: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self):
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


def confusion(gold, pred) -> ConfusionMatrix:
    _check_lengths(gold, pred)
    classes = tuple(sorted(set(gold) | set(pred)))
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for g, p in zip(gold, pred):
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(classes, counts)


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


def _ratio(num, den):
    return num / den if den else 0.0


def classification_metrics(cm: ConfusionMatrix):
    """Return ``(accuracy, per_class, macro_f1, weighted_f1)``.

    Zero denominators give 0. Macro averages run over classes with gold
    support; weighted averages weight by support. The unparsed pseudo-class
    is left out of ``per_class``.
    """
    c = cm.counts
    if c.sum() == 0:
        raise TooFewUnits("empty confusion matrix")
    tp = np.diag(c)
    support = c.sum(axis=1)
    predicted = c.sum(axis=0)
    per_class = {}
    for i, name in enumerate(cm.classes):
        if name == UNPARSED:
            continue
        p = _ratio(tp[i], predicted[i])
        r = _ratio(tp[i], support[i])
        f = _ratio(2 * p * r, p + r)
        per_class[name] = ClassScore(float(p), float(r), float(f), int(support[i]))
    accuracy = float(tp.sum() / c.sum())
    supported = [s for s in per_class.values() if s.support > 0]
    macro = float(np.mean([s.f1 for s in supported])) if supported else 0.0
    total = sum(s.support for s in supported)
    weighted = float(sum(s.f1 * s.support for s in supported) / total) if total else 0.0
    return accuracy, per_class, macro, weighted


def cohen_kappa(gold, pred) -> float:
    """Cohen's kappa; 1 when chance agreement is certain and observed is too."""
    _check_lengths(gold, pred)
    n = len(gold)
    p_o = sum(g == p for g, p in zip(gold, pred)) / n
    cg, cp = Counter(gold), Counter(pred)
    p_e = sum(cg[k] * cp.get(k, 0) for k in cg) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def krippendorff_alpha_nominal(coder_a, coder_b) -> float:
    """Krippendorff's alpha for two coders with complete nominal data.

    Uses the coincidence matrix: each unit contributes both ordered pairs of
    its two values with weight ``1 / (m_u - 1) = 1``.
    """
    _check_lengths(coder_a, coder_b, minimum=2)
    classes = sorted(set(coder_a) | set(coder_b))
    index = {c: i for i, c in enumerate(classes)}
    o = np.zeros((len(classes), len(classes)))
    for a, b in zip(coder_a, coder_b):
        o[index[a], index[b]] += 1
        o[index[b], index[a]] += 1
    n = o.sum()
    n_c = o.sum(axis=1)
    d_o = (n - np.trace(o)) / n
    d_e = (n * n - (n_c ** 2).sum()) / (n * (n - 1))
    if d_e == 0:
        return 1.0 if d_o == 0 else 0.0
    return float(1.0 - d_o / d_e)


def midranks(values) -> np.ndarray:
    """Ranks starting at 1, ties sharing the mean of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_from_codes(a, b) -> float:
    ra, rb = midranks(a), midranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    den = np.sqrt((da * da).sum() * (db * db).sum())
    if den == 0:
        return 0.0
    return float(np.clip((da * db).sum() / den, -1.0, 1.0))


def spearman_rho(gold, pred, scheme: LabelScheme) -> float:
    """Spearman correlation of the scheme's numeric codes.

    This treats nominal classes as ordinal by construction; it is reported
    for comparability, not because the codes carry order.
    """
    _check_lengths(gold, pred, minimum=2)

    def codes(labels):
        out = []
        for lab in labels:
            code = scheme.code_of(lab)
            if code is None:
                raise UnresolvableLabel(lab)
            out.append(code)
        return out

    return spearman_from_codes(codes(gold), codes(pred))


@dataclass(frozen=True)
class AgreementReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    per_class: dict
    macro_f1: float
    weighted_f1: float
    kappa: float
    alpha: float
    spearman_rho: float
    n_items: int
    n_unparsed: int
    scheme_fingerprint: str = ""
    gold: tuple = field(default=(), repr=False)
    pred: tuple = field(default=(), repr=False)

    def to_dict(self, include_items: bool = False):
        d = {
            "accuracy": self.accuracy, "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall, "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1, "kappa": self.kappa, "alpha": self.alpha,
            "spearman_rho": self.spearman_rho, "n_items": self.n_items,
            "n_unparsed": self.n_unparsed, "scheme_fingerprint": self.scheme_fingerprint,
            "per_class": {k: asdict(v) for k, v in sorted(self.per_class.items())},
        }
        if include_items:
            d["gold"] = list(self.gold)
            d["pred"] = list(self.pred)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["accuracy"], d["macro_precision"], d["macro_recall"],
                   {k: ClassScore(**v) for k, v in d["per_class"].items()},
                   d["macro_f1"], d["weighted_f1"], d["kappa"], d["alpha"],
                   d["spearman_rho"], d["n_items"], d["n_unparsed"],
                   d.get("scheme_fingerprint", ""), tuple(d.get("gold", ())),
                   tuple(d.get("pred", ())))

    def to_json(self, include_items=False) -> str:
        return json.dumps(self.to_dict(include_items), indent=2, sort_keys=True) + "\n"

    def to_text(self, title: str = "") -> str:
        cols = ["Accuracy", "Precision", "Recall", "F1 (Macro)", "F1 (Weighted)",
                "Kappa", "Alpha", "Spearman"]
        vals = [self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1,
                self.weighted_f1, self.kappa, self.alpha, self.spearman_rho]
        width = max(len(c) for c in cols)
        head = f"{'':<14}" + "".join(f"{c:>{width + 2}}" for c in cols)
        row = f"{title:<14}" + "".join(f"{v:>{width + 2}.3f}" for v in vals)
        return head + "\n" + row + "\n"


def agreement_report(gold, pred, scheme: LabelScheme) -> AgreementReport:
    """All statistics for one set of (gold, predicted) class names.

    Spearman is computed on the items whose prediction parsed, since an
    unparsed answer has no code to rank.
    """
    gold, pred = tuple(gold), tuple(pred)
    _check_lengths(gold, pred, minimum=2)
    cm = confusion(gold, pred)
    accuracy, per_class, macro, weighted = classification_metrics(cm)
    supported = [s for s in per_class.values() if s.support > 0]
    m_p = float(np.mean([s.precision for s in supported])) if supported else 0.0
    m_r = float(np.mean([s.recall for s in supported])) if supported else 0.0
    parsed = [(g, p) for g, p in zip(gold, pred) if p != UNPARSED]
    rho = (spearman_rho([g for g, _ in parsed], [p for _, p in parsed], scheme)
           if len(parsed) >= 2 else 0.0)
    return AgreementReport(
        accuracy, m_p, m_r, per_class, macro, weighted,
        cohen_kappa(gold, pred), krippendorff_alpha_nominal(gold, pred), rho,
        len(gold), sum(p == UNPARSED for p in pred), scheme.fingerprint, gold, pred)


def aggregate_over_samples(reports, scheme: LabelScheme, mode: str = "pooled") -> AgreementReport:
    """Combine per-sample reports into one method-level report.

    ``pooled`` concatenates the item-level pairs and recomputes everything.
    ``mean`` averages the scalar statistics over samples; per-class scores
    are averaged over the samples where the class has support, and supports
    are summed.
    """
    reports = list(reports)
    if not reports:
        raise TooFewUnits("no reports to aggregate")
    for r in reports:
        if r.scheme_fingerprint and r.scheme_fingerprint != scheme.fingerprint:
            raise SchemeMismatch("reports were computed over a different scheme")
    if mode == "pooled":
        gold = tuple(g for r in reports for g in r.gold)
        pred = tuple(p for r in reports for p in r.pred)
        return agreement_report(gold, pred, scheme)
    if mode != "mean":
        raise ValueError(f"unknown mode {mode!r}")

    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in reports]))

    per_class = {}
    for name in sorted({k for r in reports for k in r.per_class}):
        scores = [r.per_class[name] for r in reports if name in r.per_class]
        with_support = [s for s in scores if s.support > 0] or scores
        per_class[name] = ClassScore(
            float(np.mean([s.precision for s in with_support])),
            float(np.mean([s.recall for s in with_support])),
            float(np.mean([s.f1 for s in with_support])),
            int(sum(s.support for s in scores)))
    return AgreementReport(
        mean("accuracy"), mean("macro_precision"), mean("macro_recall"), per_class,
        mean("macro_f1"), mean("weighted_f1"), mean("kappa"), mean("alpha"),
        mean("spearman_rho"), sum(r.n_items for r in reports),
        sum(r.n_unparsed for r in reports), scheme.fingerprint,
        tuple(g for r in reports for g in r.gold), tuple(p for r in reports for p in r.pred))
