import os
import shutil
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from qualcode import cli, metrics, report, validity
from qualcode.errors import IncompleteBundle, KeyMismatch, NonSquareMatrix
from qualcode.pipeline import load_bundle

GOLDEN = Path(__file__).parent / "golden"
SVG = "{http://www.w3.org/2000/svg}"

# six published pairwise V values, laid out as a symmetric matrix
REPORTED_V = np.array([[1, 0.505, 0.359, 0.359],
                    [0.505, 1, 0.613, 0.369],
                    [0.359, 0.613, 1, 0.487],
                    [0.359, 0.369, 0.487, 1]])
METHODS = ["Zero-shot", "Few-shot", "Definitions", "Interactive"]


def cells(svg_text):
    root = ET.fromstring(svg_text)
    rects = [r for r in root.iter(f"{SVG}rect") if r.get("stroke")]
    texts = [t.text for t in root.iter(f"{SVG}text")]
    return rects, texts


def test_heatmap_annotations():
    rects, texts = cells(report.heatmap_svg(REPORTED_V, METHODS))
    annotated = [t for t in texts if t and t[0].isdigit()]
    assert len(annotated) == 12
    assert "0.613" in annotated and "1.000" not in annotated


def test_heatmap_colour_scale():
    rects, _ = cells(report.heatmap_svg(np.zeros((3, 3)), list("abc")))
    off = [r.get("fill") for r in rects if r.get("fill") != "#ffffff"]
    assert set(off) == {report.color_for(0.0)}
    full = np.ones((2, 2))
    rects, texts = cells(report.heatmap_svg(full, ["a", "b"]))
    assert report.color_for(1.0) in {r.get("fill") for r in rects}
    assert "1.000" in texts
    assert report.color_for(0.0) == "#f7fbff" and report.color_for(1.0) == "#08306b"


def test_heatmap_rejects_non_square():
    with pytest.raises(NonSquareMatrix):
        report.heatmap_svg(np.ones((2, 3)), ["a", "b"])


def test_class_distribution():
    svg = report.class_distribution_svg({"Law and Crime": 415, "Energy": 29},
                                        {"Law and Crime": 0.869, "Energy": 0.983})
    root = ET.fromstring(svg)
    bars = [r for r in root.iter(f"{SVG}rect")][1:]
    assert float(bars[0].get("width")) > float(bars[1].get("width"))
    texts = [t.text for t in root.iter(f"{SVG}text")]
    assert "415 (F1 0.869)" in texts and "29 (F1 0.983)" in texts
    one = report.class_distribution_svg({"A": 3}, {"A": 0.5})
    assert len(list(ET.fromstring(one).iter(f"{SVG}rect"))) == 2
    zero = report.class_distribution_svg({"A": 3, "B": 0}, {"A": 0.5, "B": 0.0})
    assert "0 (F1 0.000)" in zero
    with pytest.raises(KeyMismatch):
        report.class_distribution_svg({"A": 1}, {"B": 1.0})


def _bundle(scheme):
    r = metrics.agreement_report(["Health", "Energy", "Labor", "Labor"],
                                 ["Health", "Labor", "Energy", "Labor"], scheme)
    runs = [["x"] * 20 + ["y"] * 10, ["x"] * 15 + ["y"] * 15]
    return report.ReportBundle({"Zero-shot": r}, [validity.within_method_suite(runs, "Zero-shot")],
                               [validity.between_method_suite(runs, runs[::-1], ("A", "B"))])


def test_per_class_sort_ties_by_name(scheme):
    rows = _bundle(scheme).rows("per_class")
    # F1: Health 1.0, Labor 0.667, Energy 0.0
    assert [r[1] for r in rows] == ["Health", "Labor", "Energy"]
    tie = metrics.agreement_report(["Labor", "Energy"], ["Labor", "Energy"], scheme)
    b = report.ReportBundle({"M": tie}, [], [])
    assert [r[1] for r in b.rows("per_class")] == ["Energy", "Labor"]


def test_incomplete_bundle(scheme, tmp_path):
    with pytest.raises(IncompleteBundle):
        report.render_tables(report.ReportBundle(), tmp_path)
    empty = metrics.AgreementReport(1, 1, 1, {}, 1, 1, 1, 1, 1, 2, 0)
    with pytest.raises(IncompleteBundle):
        report.ReportBundle({"M": empty}).rows("per_class")
    b = _bundle(scheme)
    b.within = []
    with pytest.raises(IncompleteBundle):
        report.render_tables(b, tmp_path)


def test_formats(scheme, tmp_path):
    paths = report.render_tables(_bundle(scheme), tmp_path)
    names = sorted(p.name for p in paths)
    assert "performance.md" in names and "validity_within.csv" in names and len(names) == 12
    csv_text = (tmp_path / "reports" / "validity_within.csv").read_text()
    assert csv_text.splitlines()[0] == ",".join(report.VALIDITY_COLUMNS)


def test_p_value_format():
    assert report.fmt_p(0.04550026) == "0.046"
    assert report.fmt_p(1.2e-170) == "1.200e-170"
    assert report.fmt_p(0.0) == "0.000"


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory, fixture_csv):
    out = tmp_path_factory.mktemp("golden_run")
    status = cli.main(["pipeline", "--corpus", str(fixture_csv), "--seed", "17", "--n", "40",
                       "--N", "4", "--backend", "noisy", "--epsilon", "0.25", "--out", str(out)])
    assert status == 0
    return out


def test_golden_bundle(fixture_run):
    produced = sorted(p.relative_to(fixture_run).as_posix()
                      for d in ("reports", "plots") for p in (fixture_run / d).iterdir())
    if os.environ.get("UPDATE_GOLDEN"):
        shutil.rmtree(GOLDEN, ignore_errors=True)
        for rel in produced:
            (GOLDEN / rel).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(fixture_run / rel, GOLDEN / rel)
    expected = sorted(p.relative_to(GOLDEN).as_posix() for p in GOLDEN.rglob("*") if p.is_file())
    assert produced == expected
    for rel in produced:
        assert (fixture_run / rel).read_bytes() == (GOLDEN / rel).read_bytes(), rel


def test_every_printed_value_traces_to_statistics(fixture_run):
    bundle = load_bundle(fixture_run, ["zero_shot", "few_shot", "definitions", "step_by_step"])
    perf = (fixture_run / "reports" / "performance.csv").read_text().splitlines()[1:]
    for line, (method, rep) in zip(perf, bundle.performance.items()):
        cells_ = line.split(",")
        assert cells_[0] == method
        assert cells_[1] == f"{rep.accuracy:.3f}" and cells_[6] == f"{rep.kappa:.3f}"
    svg = (fixture_run / "plots" / "v_heatmap.svg").read_text()
    methods, m, _ = bundle.pairwise
    for i in range(len(methods)):
        for j in range(len(methods)):
            if i != j:
                assert f">{m[i, j]:.3f}<" in svg
