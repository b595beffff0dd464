"""Stage-by-stage study pipeline with persisted artifacts.

Layout under the output directory::

    corpus.jsonl, corpus.provenance.json     ingest
    samples.json, training_pool.json         sample
    runs/<kind>_<index>.jsonl                code
    metrics/<kind>.json                      metrics
    validity.json                            validity
    reports/*, plots/*                       report
    manifest.jsonl                           one line per stage execution
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import backends, coder, dataset, interventions, metrics, report, sampling, validity
from .errors import DegenerateTable, MissingFile, QualcodeError
from .interventions import InterventionKind
from .taxonomy import Level, default_scheme, load_scheme

ALL_KINDS = tuple(k.value for k in InterventionKind)


class ConfigError(QualcodeError, ValueError):
    pass


@dataclass
class RunConfig:
    corpus: str
    seed: int
    out: str = "out"
    scheme: str | None = None
    defs: str | None = None
    kinds: tuple = ALL_KINDS
    n: int | None = None  # None searches for the smallest passing design
    N: int = 30
    backend: str = "replay"
    epsilon: float = 0.0
    confusion: dict | None = None
    http: dict = field(default_factory=dict)
    max_items: int = interventions.DEFAULT_MAX_ITEMS
    workers: int = 1
    min_class_count: int = 5
    size_start: int = 500
    size_step: int = 10
    columns: dict = field(default_factory=dict)
    templates: str | None = None

    def validate(self):
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.backend not in ("http", "replay", "noisy"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        self.kinds = tuple(InterventionKind(k).value for k in self.kinds)
        if not self.kinds:
            raise ConfigError("at least one intervention kind is required")
        for name in ("corpus", "scheme", "defs", "templates"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise MissingFile(path)
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "kinds" in d:
            d["kinds"] = tuple(d["kinds"])
        return cls(**d)

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["kinds"] = list(self.kinds)
        return d


# artifacts -------------------------------------------------------------------

def digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path, out):
    try:
        return str(Path(path).relative_to(out))
    except ValueError:
        return str(path)


def record_stage(out, stage, inputs, outputs, seed, clock=time.time):
    """Append a manifest line with content digests of inputs and outputs."""
    out = Path(out)
    line = {"stage": stage, "seed": seed, "timestamp": clock(),
            "inputs": {_rel(p, out): digest(p) for p in sorted(map(str, inputs))},
            "outputs": {_rel(p, out): digest(p) for p in sorted(map(str, outputs))}}
    with open(out / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(line, sort_keys=True) + "\n")
    return line


def read_manifest(out) -> list[dict]:
    path = Path(out) / "manifest.jsonl"
    if not path.exists():
        return []
    return [json.loads(x) for x in path.read_text(encoding="utf-8").splitlines() if x.strip()]


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    return json.loads(path.read_text(encoding="utf-8"))


def _scheme(cfg):
    return load_scheme(cfg.scheme) if cfg.scheme else default_scheme()


def _require(path):
    if not Path(path).is_file():
        raise MissingFile(path)
    return Path(path)


# stages ----------------------------------------------------------------------

def stage_ingest(cfg: RunConfig):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scheme = _scheme(cfg)
    raw = dataset.ingest(cfg.corpus, scheme, cfg.columns or None)
    clean = dataset.preprocess(raw, scheme)
    paths = [dataset.write_jsonl(clean, out / "corpus.jsonl"),
             _write_json(out / "corpus.provenance.json", clean.provenance)]
    inputs = [cfg.corpus] + ([cfg.scheme] if cfg.scheme else [])
    record_stage(out, "ingest", inputs, paths, cfg.seed)
    return clean


def _load_corpus(out):
    prov = _read_json(Path(out) / "corpus.provenance.json")
    return dataset.read_jsonl(_require(Path(out) / "corpus.jsonl"), prov)


def training_size(kinds) -> int:
    sizes = {InterventionKind.FEW_SHOT.value:
             interventions.FEW_SHOT_FILES * interventions.FEW_SHOT_FILE_SIZE,
             InterventionKind.STEP_BY_STEP.value: interventions.WARMUP_ITEMS}
    return max([sizes.get(k, 0) for k in kinds] + [0])


def stage_sample(cfg: RunConfig):
    """Reserve the training pool, exclude rare classes, draw ``N`` samples.

    Training items come first in an md5 order salted with the seed, so they
    never appear in any sample.
    """
    out = Path(cfg.out)
    corpus = _load_corpus(out)
    shuffled = dataset.md5_shuffle(corpus, salt=f"training-{cfg.seed}")
    k = training_size(cfg.kinds)
    pool = sorted(shuffled.ids[:k])
    frame = corpus.subset(shuffled.ids[k:])
    frame, excluded = sampling.exclude_rare_classes(frame, cfg.min_class_count)
    design = None
    n = cfg.n
    if n is None:
        design = sampling.search_design(frame, cfg.size_start, cfg.size_step, seed=cfg.seed)
        n = design.n
    sample_set = sampling.draw_sample_set(frame, n, cfg.N, cfg.seed, excluded=excluded)
    paths = [sample_set.save(out / "samples.json"),
             _write_json(out / "training_pool.json", {"ids": pool, "seed": cfg.seed})]
    if design is not None:
        paths.append(_write_json(out / "design.json", {
            "n": design.n, "N_searched": design.N, "N_used": cfg.N,
            "check": asdict(design.check)}))
    record_stage(out, "sample", [out / "corpus.jsonl"], paths, cfg.seed)
    return sample_set


def make_backend(cfg: RunConfig, gold: dict, scheme, kind_index: int):
    if cfg.backend == "replay":
        return backends.Replay(gold)
    if cfg.backend == "noisy":
        # each strategy gets its own error draws, so methods differ from each other
        return backends.NoisyReplay(gold, cfg.epsilon, scheme.major_names, cfg.confusion,
                                    seed=cfg.seed + 1000 * (kind_index + 1))
    return backends.HttpChat(backends.HttpChatConfig(**cfg.http))


def stage_code(cfg: RunConfig):
    out = Path(cfg.out)
    scheme = _scheme(cfg)
    corpus = _load_corpus(out)
    sample_set = sampling.SampleSet.load(out / "samples.json")
    pool = _read_json(out / "training_pool.json")["ids"]
    defs = (interventions.load_definitions(cfg.defs, scheme) if cfg.defs
            else interventions.default_definitions(scheme))
    templates = interventions.PromptTemplates.load(cfg.templates) if cfg.templates else None
    gold = {r.id: r.gold_major.name for r in corpus}
    if cfg.backend == "http":
        # fail on missing credentials before any plan is built or request sent
        backends.api_key(backends.HttpChatConfig(**cfg.http))
    runs = {}
    paths = []
    for ki, kind in enumerate(cfg.kinds):
        plans = [(i, interventions.build_plan(kind, scheme, s, corpus, defs, pool,
                                              cfg.max_items, cfg.seed, templates))
                 for i, s in enumerate(sample_set.samples)]
        runs[kind] = coder.run_many(plans, lambda plan, idx, ki=ki:
                                    make_backend(cfg, gold, scheme, ki),
                                    scheme, out / "runs", cfg.workers)
        paths += [coder.run_path(out / "runs", kind, i) for i, _ in plans]
    inputs = [out / "corpus.jsonl", out / "samples.json", out / "training_pool.json"]
    record_stage(out, "code", inputs + [p for p in (cfg.defs, cfg.templates) if p], paths,
                 cfg.seed)
    return runs


def load_runs(out, kinds, N) -> dict:
    runs = {}
    for kind in kinds:
        runs[kind] = []
        for i in range(N):
            run = coder.load_run(_require(coder.run_path(Path(out) / "runs", kind, i)))
            if not run.complete:
                raise QualcodeError(f"run {kind} #{i} is incomplete; rerun the code stage")
            runs[kind].append(run)
    return runs


def _gold_names(corpus, run):
    by_id = corpus.by_id()
    return [by_id[i].gold_major.name for i in run.order]


def stage_metrics(cfg: RunConfig):
    out = Path(cfg.out)
    scheme = _scheme(cfg)
    corpus = _load_corpus(out)
    N = sampling.SampleSet.load(out / "samples.json").N
    runs = load_runs(out, cfg.kinds, N)
    result, paths = {}, []
    for kind in cfg.kinds:
        per_sample = [metrics.agreement_report(_gold_names(corpus, r), r.predicted_names(), scheme)
                      for r in runs[kind]]
        pooled = metrics.aggregate_over_samples(per_sample, scheme, "pooled")
        mean = metrics.aggregate_over_samples(per_sample, scheme, "mean")
        result[kind] = pooled
        paths.append(_write_json(out / "metrics" / f"{kind}.json", {
            "kind": kind, "method": InterventionKind(kind).title,
            "pooled": pooled.to_dict(include_items=True),
            "mean_over_samples": mean.to_dict(),
            "per_sample": [r.to_dict() for r in per_sample]}))
    inputs = [coder.run_path(out / "runs", k, i) for k in cfg.kinds for i in range(N)]
    record_stage(out, "metrics", inputs, paths, cfg.seed)
    return result


def stage_validity(cfg: RunConfig):
    out = Path(cfg.out)
    scheme = _scheme(cfg)
    N = sampling.SampleSet.load(out / "samples.json").N
    runs = load_runs(out, cfg.kinds, N)
    titles = {k: InterventionKind(k).title for k in cfg.kinds}
    doc = {"within": [], "between": [], "pairwise": None, "classwise": {}}
    if N >= 2:
        doc["within"] = [validity.within_method_suite(runs[k], titles[k]).to_dict()
                         for k in cfg.kinds]
    for a, b in itertools.combinations(cfg.kinds, 2):
        doc["between"].append(validity.between_method_suite(
            runs[a], runs[b], (titles[a], titles[b])).to_dict())
    if len(cfg.kinds) >= 2:
        methods, matrix, tests = validity.pairwise_v_matrix(
            {titles[k]: runs[k] for k in cfg.kinds})
        doc["pairwise"] = {"methods": methods, "matrix": matrix.tolist(),
                           "tests": [{"methods": list(pair), **t.to_dict()}
                                     for pair, t in tests.items()]}
        by_method = {titles[k]: runs[k] for k in cfg.kinds}
        predicted = {x for rs in runs.values() for r in rs for x in r.predicted_names()}
        for name in scheme.major_names:
            if name not in predicted:
                continue
            try:
                t = validity.classwise_disagreement(by_method, name, scheme.major_names)
            except DegenerateTable:
                continue  # every method predicted the class for every item
            doc["classwise"][name] = t.to_dict()
    inputs = [coder.run_path(out / "runs", k, i) for k in cfg.kinds for i in range(N)]
    path = _write_json(out / "validity.json", doc)
    record_stage(out, "validity", inputs, [path], cfg.seed)
    return doc


def _chi(d):
    return validity.ChiSquareResult(d["chi2"], d["dof"], d["p_value"], d["n"], d["cramers_v"],
                                    tuple(d.get("shape", (0, 0))))


def _summary(d):
    return validity.ValiditySummary(d["scope"], tuple(d["methods"]), d["mean_chi2"],
                                    d["std_chi2"], d["mean_p"], d["std_p"], d["n_sig_raw"],
                                    d["n_sig_bonferroni"], d["n_sig_fdr"], d["total_tests"])


def load_bundle(out, kinds) -> report.ReportBundle:
    """Rebuild the report bundle from the persisted metrics and validity files."""
    import numpy as np

    out = Path(out)
    perf = {}
    for kind in kinds:
        d = _read_json(out / "metrics" / f"{kind}.json")
        perf[d["method"]] = metrics.AgreementReport.from_dict(d["pooled"])
    v = _read_json(out / "validity.json")
    pairwise = None
    if v["pairwise"]:
        p = v["pairwise"]
        pairwise = (p["methods"], np.array(p["matrix"]),
                    {tuple(t["methods"]): _chi(t) for t in p["tests"]})
    return report.ReportBundle(perf, [_summary(s) for s in v["within"]],
                               [_summary(s) for s in v["between"]], pairwise,
                               {k: _chi(t) for k, t in v["classwise"].items()},
                               focus=list(perf)[-1])


def stage_report(cfg: RunConfig):
    out = Path(cfg.out)
    bundle = load_bundle(out, cfg.kinds)
    paths = report.render_bundle(bundle, out)
    inputs = [out / "metrics" / f"{k}.json" for k in cfg.kinds] + [out / "validity.json"]
    record_stage(out, "report", inputs, paths, cfg.seed)
    return paths


STAGES = {"ingest": stage_ingest, "sample": stage_sample, "code": stage_code,
          "metrics": stage_metrics, "validity": stage_validity, "report": stage_report}


def run_pipeline(cfg: RunConfig):
    cfg.validate()
    for stage in STAGES.values():
        result = stage(cfg)
    return result
