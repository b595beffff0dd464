"""Run a prompt plan against a coder backend and collect predictions.

A run is persisted as JSON Lines: one header record, an optional warm-up
record carrying the digest, then one record per finished batch. The same
file doubles as the resume checkpoint, so an interrupted run picks up at
the first batch it has no record for.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import NoisyReplay, Session
from .errors import RetryExhausted
from .interventions import InterventionKind, PromptPlan, warmup_protocol
from .parsing import parse_response
from .taxonomy import Level, LabelScheme, label_from_dict

__all__ = ["Prediction", "CodingRun", "run_plan", "run_many", "save_run", "load_run",
           "run_path", "parse_response", "expected_kappa", "calibrate_epsilon"]


@dataclass(frozen=True)
class Prediction:
    label: object  # LabelRef or Unparsed
    rationale: str
    raw_reply: str

    def to_dict(self):
        return {"label": self.label.to_dict(), "rationale": self.rationale,
                "raw_reply": self.raw_reply}

    @classmethod
    def from_dict(cls, d):
        return cls(label_from_dict(d["label"]), d["rationale"], d["raw_reply"])


@dataclass
class CodingRun:
    kind: InterventionKind
    sample_index: int
    order: tuple  # record ids in plan order
    predictions: dict = field(default_factory=dict)
    transcript: list = field(default_factory=list)  # {"session", "role", "content"}
    timing: dict = field(default_factory=dict)  # record id -> seconds
    model: str = ""
    digest: str = ""
    warmup: bool = False  # whether session 0 was a warm-up

    @property
    def complete(self) -> bool:
        return set(self.predictions) == set(self.order)

    def predicted_names(self) -> list[str]:
        return [self.predictions[i].label.name for i in self.order]

    def labels(self) -> dict[str, str]:
        return {i: self.predictions[i].label.name for i in self.order}


def run_path(out_dir, kind, sample_index: int) -> Path:
    return Path(out_dir) / f"{InterventionKind(kind).value}_{sample_index:03d}.jsonl"


def _dump(record) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def _session_log(session: Session):
    return [{"session": session.index, "role": m["role"], "content": m["content"]}
            for m in session.messages]


def _header(plan: PromptPlan, sample_index, model):
    return {"type": "header", "kind": plan.kind.value, "sample_index": sample_index,
            "model": model, "order": plan.item_ids, "batches": len(plan.batches)}


def _read_records(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_run(path) -> CodingRun:
    """Rebuild a (possibly partial) run from its JSON Lines file."""
    records = _read_records(path)
    if not records or records[0].get("type") != "header":
        raise ValueError(f"{path}: missing run header")
    h = records[0]
    run = CodingRun(InterventionKind(h["kind"]), h["sample_index"], tuple(h["order"]),
                    model=h.get("model", ""))
    for rec in records[1:]:
        run.transcript.extend(rec.get("transcript", []))
        if rec["type"] == "warmup":
            run.digest = rec["digest"]
            run.warmup = True
        elif rec["type"] == "batch":
            for rid, p in rec["predictions"].items():
                run.predictions[rid] = Prediction.from_dict(p)
            run.timing.update(rec.get("timing", {}))
    return run


def save_run(run: CodingRun, path, batch_ids=None) -> Path:
    """Write a finished run in the checkpoint layout.

    ``batch_ids`` (tuples of ids) splits the predictions into batch records;
    by default they go into a single record.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    batch_ids = batch_ids or [run.order]
    header = {"type": "header", "kind": run.kind.value, "sample_index": run.sample_index,
              "model": run.model, "order": list(run.order), "batches": len(batch_ids)}
    sessions = {}
    for m in run.transcript:
        sessions.setdefault(m["session"], []).append(m)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(header))
        offset = 0
        if run.warmup:
            fh.write(_dump({"type": "warmup", "digest": run.digest,
                            "transcript": sessions.pop(0, [])}))
            offset = 1
        for b, ids in enumerate(batch_ids):
            fh.write(_dump({
                "type": "batch", "index": b,
                "predictions": {i: run.predictions[i].to_dict() for i in ids},
                "timing": {i: run.timing[i] for i in ids if i in run.timing},
                "transcript": sessions.get(b + offset, []),
            }))
    return path


def run_plan(plan: PromptPlan, backend, scheme: LabelScheme, sample_index: int = 0,
             checkpoint=None, clock=None, level: Level = Level.MAJOR) -> CodingRun:
    """Execute ``plan`` and return the resulting run.

    Session 0 holds the warm-up (step-by-step only); each batch then runs in
    a fresh session whose system message is the preamble plus the digest.
    With ``checkpoint`` every finished batch is appended to that file and a
    rerun resumes after the last finished batch. ``clock`` (a zero-argument
    callable returning seconds) enables per-item latency.
    """
    model = getattr(backend, "model", "")
    run = CodingRun(plan.kind, sample_index, tuple(plan.item_ids), model=model)
    done = 0
    if checkpoint is not None:
        checkpoint = Path(checkpoint)
        if checkpoint.exists() and checkpoint.stat().st_size:
            run = load_run(checkpoint)
            done = sum(1 for r in _read_records(checkpoint) if r["type"] == "batch")
            if run.order != tuple(plan.item_ids):
                raise ValueError(f"{checkpoint} belongs to a different plan")
        else:
            checkpoint.parent.mkdir(parents=True, exist_ok=True)
            checkpoint.write_text(_dump(_header(plan, sample_index, model)), encoding="utf-8")

    def append(record):
        if checkpoint is not None:
            with open(checkpoint, "a", encoding="utf-8") as fh:
                fh.write(_dump(record))

    offset = 0
    if plan.warmup:
        offset = 1
        if not run.warmup:
            session = Session(0, plan.system_preamble)
            run.digest = warmup_protocol(plan, backend, scheme, session)
            run.warmup = True
            log = _session_log(session)
            run.transcript.extend(log)
            append({"type": "warmup", "digest": run.digest, "transcript": log})

    for b in range(done, len(plan.batches)):
        session = Session(b + offset, plan.batch_preamble(b, run.digest))
        preds, timing = {}, {}
        for rid in plan.batches[b].ids:
            start = clock() if clock else None
            try:
                reply = backend.send(session, plan.items[rid])
            except RetryExhausted as exc:
                raise RetryExhausted(exc.attempts, exc.last_status, rid) from exc
            if clock:
                timing[rid] = clock() - start
            label, rationale = parse_response(reply, scheme, level)
            preds[rid] = Prediction(label, rationale, reply)
        log = _session_log(session)
        run.predictions.update(preds)
        run.timing.update(timing)
        run.transcript.extend(log)
        append({"type": "batch", "index": b,
                "predictions": {i: p.to_dict() for i, p in preds.items()},
                "timing": timing, "transcript": log})
    return run


def run_many(plans, backend_factory, scheme: LabelScheme, out_dir=None,
             workers: int = 1, clock=None) -> list[CodingRun]:
    """Run several ``(sample_index, plan)`` pairs, possibly concurrently.

    ``backend_factory(plan, sample_index)`` gives each run its own backend so
    stateful backends are never shared across threads. Results come back in
    input order regardless of completion order.
    """
    plans = list(plans)

    def one(job):
        idx, plan = job
        ckpt = run_path(out_dir, plan.kind, idx) if out_dir is not None else None
        return run_plan(plan, backend_factory(plan, idx), scheme, idx, ckpt, clock)

    if workers <= 1:
        return [one(j) for j in plans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, plans))


# calibration of the simulated coder ------------------------------------------

def expected_kappa(gold_counts: dict, epsilon: float, confusion=None) -> float:
    """Population kappa of a NoisyReplay coder against gold with these counts.

    Observed agreement is ``1 - eps``; the predicted marginal mixes the gold
    marginal with the confusion rows (uniform over other classes if absent).
    """
    classes = sorted(gold_counts)
    k = len(classes)
    pi = np.array([gold_counts[c] for c in classes], dtype=float)
    pi /= pi.sum()
    conf = np.zeros((k, k))
    for i, g in enumerate(classes):
        row = (confusion or {}).get(g)
        if row:
            for j, c in enumerate(classes):
                if c != g:
                    conf[i, j] = row.get(c, 0.0)
        else:
            conf[i] = 1.0
            conf[i, i] = 0.0
        if conf[i].sum():
            conf[i] /= conf[i].sum()
    q = (1 - epsilon) * pi + epsilon * pi @ conf
    p_e = float(pi @ q)
    return ((1 - epsilon) - p_e) / (1 - p_e)


def calibrate_epsilon(target_kappa: float, gold: dict, classes, confusion=None,
                      seed: int = 0, tol: float = 1e-4, max_iter: int = 60):
    """Find the error rate whose realized kappa on ``gold`` is closest to target.

    Bisects on the realized kappa of a NoisyReplay coder. Because one
    record's error draw is shared across error rates, realized kappa is a
    step function that falls as epsilon grows, so bisection is well posed.
    Returns ``(epsilon, realized_kappa)``.
    """
    from .metrics import cohen_kappa

    ids = sorted(gold)
    g = [gold[i] for i in ids]

    def realized(eps):
        coder = NoisyReplay(gold, eps, classes, confusion, seed)
        return cohen_kappa(g, [coder.label_for(i) for i in ids])

    lo, hi = 0.0, 1.0
    best = (0.0, realized(0.0))
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        k = realized(mid)
        if abs(k - target_kappa) < abs(best[1] - target_kappa):
            best = (mid, k)
        if abs(k - target_kappa) <= tol or hi - lo < 1e-9:
            break
        if k > target_kappa:
            lo = mid
        else:
            hi = mid
    return best
