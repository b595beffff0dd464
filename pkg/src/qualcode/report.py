"""Tables and SVG figures for a finished study.

Everything here is pure formatting: the same bundle always renders to the
same bytes. Proportions, Cramér's V and chi-squared are rounded to three
decimals; p-values below 0.001 switch to three significant digits in
scientific notation so they do not collapse to zero.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import IncompleteBundle, KeyMismatch, NonSquareMatrix
from .validity import disagreement_band, BANDS

TABLES = ("performance", "per_class", "validity_within", "validity_between")
OPTIONAL_TABLES = ("pairwise", "classwise")
FORMATS = ("csv", "json", "md")

PERFORMANCE_COLUMNS = ["Method", "Accuracy", "Precision", "Recall", "F1 (Macro)",
                       "F1 (Weighted)", "Kappa", "Alpha", "Spearman", "Items", "Unparsed"]
PER_CLASS_COLUMNS = ["Method", "Class", "Precision", "Recall", "F1-Score", "Support"]
VALIDITY_COLUMNS = ["Method(s)", "Mean Chi2", "Std Chi2", "Mean p", "Std p",
                    "Significant (p<0.05)", "Significant (Bonferroni)",
                    "Significant (FDR)", "Total Tests"]
PAIRWISE_COLUMNS = ["Method 1", "Method 2", "Chi2", "p-value", "Cramer's V", "n"]
CLASSWISE_COLUMNS = ["Disagreement", "Class", "Chi2", "p-value", "Cramer's V", "n"]


def fmt(x: float) -> str:
    return f"{x:.3f}"


def fmt_p(p: float) -> str:
    if p == 0 or p >= 0.001:
        return f"{p:.3f}"
    return f"{p:.3e}"


@dataclass
class ReportBundle:
    """Statistics for one study, keyed by method title in display order.

    ``performance`` maps method -> AgreementReport (pooled over samples);
    ``within`` and ``between`` hold ValiditySummary objects; ``pairwise`` is
    ``(methods, V matrix, {(m1, m2): ChiSquareResult})``; ``classwise`` maps
    class name -> ChiSquareResult; ``focus`` names the method whose per-class
    scores feed the class-distribution figure.
    """

    performance: dict = field(default_factory=dict)
    within: list = field(default_factory=list)
    between: list = field(default_factory=list)
    pairwise: tuple | None = None
    classwise: dict = field(default_factory=dict)
    focus: str | None = None

    # table rows -------------------------------------------------------------

    def rows(self, table: str) -> list[list[str]]:
        return getattr(self, f"_rows_{table}")()

    def _rows_performance(self):
        if not self.performance:
            raise IncompleteBundle("no performance statistics")
        return [[m, fmt(r.accuracy), fmt(r.macro_precision), fmt(r.macro_recall),
                 fmt(r.macro_f1), fmt(r.weighted_f1), fmt(r.kappa), fmt(r.alpha),
                 fmt(r.spearman_rho), str(r.n_items), str(r.n_unparsed)]
                for m, r in self.performance.items()]

    def _rows_per_class(self):
        rows = []
        for m, r in self.performance.items():
            ranked = sorted(r.per_class.items(), key=lambda kv: (-round(kv[1].f1, 12), kv[0]))
            rows += [[m, name, fmt(s.precision), fmt(s.recall), fmt(s.f1), str(s.support)]
                     for name, s in ranked]
        if not rows:
            raise IncompleteBundle("per-class table has no classes")
        return rows

    def _validity(self, summaries, scope):
        if not summaries:
            raise IncompleteBundle(f"no {scope}-method validity summaries")
        return [[s.label, fmt(s.mean_chi2), fmt(s.std_chi2), fmt_p(s.mean_p), fmt_p(s.std_p),
                 str(s.n_sig_raw), str(s.n_sig_bonferroni), str(s.n_sig_fdr),
                 str(s.total_tests)] for s in summaries]

    def _rows_validity_within(self):
        return self._validity(self.within, "within")

    def _rows_validity_between(self):
        return self._validity(self.between, "between")

    def _rows_pairwise(self):
        if not self.pairwise:
            raise IncompleteBundle("no pairwise tests")
        return [[a, b, fmt(t.chi2), fmt_p(t.p_value), fmt(t.cramers_v), str(t.n)]
                for (a, b), t in self.pairwise[2].items()]

    def _rows_classwise(self):
        if not self.classwise:
            raise IncompleteBundle("no classwise tests")
        order = {name: i for i, (_, name) in enumerate(BANDS)}
        ranked = sorted(self.classwise.items(),
                        key=lambda kv: (order[disagreement_band(kv[1].cramers_v)],
                                        -kv[1].cramers_v, kv[0]))
        return [[disagreement_band(t.cramers_v), name, fmt(t.chi2), fmt_p(t.p_value),
                 fmt(t.cramers_v), str(t.n)] for name, t in ranked]

    def columns(self, table: str) -> list[str]:
        return {"performance": PERFORMANCE_COLUMNS, "per_class": PER_CLASS_COLUMNS,
                "validity_within": VALIDITY_COLUMNS, "validity_between": VALIDITY_COLUMNS,
                "pairwise": PAIRWISE_COLUMNS, "classwise": CLASSWISE_COLUMNS}[table]


# table writers ---------------------------------------------------------------

def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def to_json(columns, rows) -> str:
    return json.dumps([dict(zip(columns, r)) for r in rows], indent=2, ensure_ascii=False) + "\n"


def to_markdown(columns, rows) -> str:
    def line(cells):
        return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"

    numeric = [all(_is_number(r[i]) for r in rows) for i in range(len(columns))]
    sep = "|" + "|".join("---:" if n else ":---" for n in numeric) + "|"
    return "\n".join([line(columns), sep] + [line(r) for r in rows]) + "\n"


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


WRITERS = {"csv": to_csv, "json": to_json, "md": to_markdown}


def render_tables(bundle: ReportBundle, out_dir, formats=FORMATS, tables=None) -> list[Path]:
    """Write ``reports/<table>.<fmt>`` files under ``out_dir``.

    By default the four core tables are required and the pairwise and
    classwise tables are added when present.
    """
    if tables is None:
        tables = list(TABLES)
        if bundle.pairwise:
            tables.append("pairwise")
        if bundle.classwise:
            tables.append("classwise")
    for f in formats:
        if f not in WRITERS:
            raise ValueError(f"unknown format {f!r}")
    rendered = {t: (bundle.columns(t), bundle.rows(t)) for t in tables}
    out = Path(out_dir) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, (cols, rows) in rendered.items():
        for f in formats:
            p = out / f"{t}.{f}"
            p.write_text(WRITERS[f](cols, rows), encoding="utf-8", newline="\n")
            paths.append(p)
    return paths


# SVG -------------------------------------------------------------------------

LIGHT = (247, 251, 255)
DARK = (8, 48, 107)
FONT = 'font-family="Helvetica, Arial, sans-serif"'


def color_for(v: float) -> str:
    """Linear blend from LIGHT (0) to DARK (1); values are clipped to [0, 1]."""
    t = min(1.0, max(0.0, float(v)))
    rgb = [round(a + (b - a) * t) for a, b in zip(LIGHT, DARK)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def heatmap_svg(matrix, labels, title="Cramér's V") -> str:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareMatrix(f"expected a square matrix, got shape {m.shape}")
    if len(labels) != m.shape[0]:
        raise NonSquareMatrix("label count does not match the matrix")
    if not np.allclose(m, m.T):
        raise ValueError("matrix is not symmetric")
    k = m.shape[0]
    width, height, left, top = 560, 560, 140, 60
    cell = (width - left - 20) / max(k, 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
           f'<text x="{width / 2:.1f}" y="30" text-anchor="middle" font-size="16" {FONT}>'
           f'{escape(title)}</text>']
    for i in range(k):
        y = top + i * cell
        out.append(f'<text x="{left - 8}" y="{y + cell / 2:.1f}" text-anchor="end" '
                   f'dominant-baseline="middle" font-size="12" {FONT}>{escape(labels[i])}</text>')
        x = left + i * cell
        out.append(f'<text x="{x + cell / 2:.1f}" y="{top + k * cell + 18:.1f}" '
                   f'text-anchor="middle" font-size="12" {FONT}>{escape(labels[i])}</text>')
        for j in range(k):
            x = left + j * cell
            if i == j:
                out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell:.1f}" height="{cell:.1f}" '
                           f'fill="#ffffff" stroke="#cccccc"/>')
                continue
            v = m[i, j]
            ink = "#ffffff" if v > 0.5 else "#000000"
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell:.1f}" height="{cell:.1f}" '
                       f'fill="{color_for(v)}" stroke="#cccccc"/>')
            out.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2:.1f}" text-anchor="middle" '
                       f'dominant-baseline="middle" font-size="13" fill="{ink}" {FONT}>'
                       f'{fmt(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap(matrix, labels, path, title="Cramér's V") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(heatmap_svg(matrix, labels, title), encoding="utf-8", newline="\n")
    return path


def class_distribution_svg(supports: dict, f1s: dict, title="Support by class") -> str:
    if set(supports) != set(f1s):
        raise KeyMismatch(f"support and F1 keys differ: {sorted(set(supports) ^ set(f1s))}")
    ranked = sorted(supports, key=lambda c: (-supports[c], c))
    width, left, right, top, row = 720, 200, 150, 50, 22
    height = top + row * len(ranked) + 20
    span = width - left - right
    biggest = max(supports.values(), default=0) or 1
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
           f'<text x="{width / 2:.1f}" y="28" text-anchor="middle" font-size="16" {FONT}>'
           f'{escape(title)}</text>']
    for i, name in enumerate(ranked):
        y = top + i * row
        length = span * supports[name] / biggest
        out.append(f'<text x="{left - 8}" y="{y + row / 2:.1f}" text-anchor="end" '
                   f'dominant-baseline="middle" font-size="12" {FONT}>{escape(name)}</text>')
        out.append(f'<rect x="{left}" y="{y + 3:.1f}" width="{length:.1f}" height="{row - 6}" '
                   f'fill="{color_for(0.6)}"/>')
        out.append(f'<text x="{left + length + 6:.1f}" y="{y + row / 2:.1f}" '
                   f'dominant-baseline="middle" font-size="11" {FONT}>'
                   f'{supports[name]} (F1 {fmt(f1s[name])})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_class_distribution(supports: dict, f1s: dict, path, title="Support by class") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(class_distribution_svg(supports, f1s, title), encoding="utf-8", newline="\n")
    return path


def render_bundle(bundle: ReportBundle, out_dir, formats=FORMATS) -> list[Path]:
    """All tables plus ``plots/v_heatmap.svg`` and ``plots/class_distribution.svg``."""
    paths = render_tables(bundle, out_dir, formats)
    plots = Path(out_dir) / "plots"
    if bundle.pairwise:
        methods, matrix, _ = bundle.pairwise
        paths.append(render_heatmap(matrix, methods, plots / "v_heatmap.svg"))
    focus = bundle.focus or next(reversed(bundle.performance))
    per_class = bundle.performance[focus].per_class
    paths.append(render_class_distribution(
        {c: s.support for c, s in per_class.items()}, {c: s.f1 for c, s in per_class.items()},
        plots / "class_distribution.svg", f"Support by class, {focus}"))
    return paths
