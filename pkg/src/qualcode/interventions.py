"""Prompt material and session protocol for the four prompting strategies.

A :class:`PromptPlan` is pure data: the system preamble, an optional
warm-up, and the sample split into batches that each run in a fresh chat
session. Preamble wording lives in :class:`PromptTemplates` and can be
overridden from JSON.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import Corpus
from .errors import (MissingDefinitions, MissingFile, OverlapError, ParseError,
                     TrainingPoolTooSmall, UnparsedWarmupResponse)
from .parsing import parse_response
from .taxonomy import LabelScheme, Level, Unparsed

DEFAULT_MAX_ITEMS = 25
FEW_SHOT_FILES = 2
FEW_SHOT_FILE_SIZE = 50
WARMUP_ITEMS = 3
RESIDUAL_CLASS = "Law and Crime"


class InterventionKind(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    DEFINITIONS = "definitions"
    STEP_BY_STEP = "step_by_step"

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    InterventionKind.ZERO_SHOT: "Zero-shot",
    InterventionKind.FEW_SHOT: "Few-shot",
    InterventionKind.DEFINITIONS: "Definitions",
    InterventionKind.STEP_BY_STEP: "Interactive",
}


@dataclass(frozen=True)
class PromptTemplates:
    role: str = ("You are a social scientist with expertise in qualitative coding and "
                 "content analysis, working as a deductive coder.")
    overview: str = (
        "The Comparative Agendas Project (CAP) Master Codebook is a validated scheme for "
        "classifying the policy content of political and legal documents into major policy "
        "topics. You will code summaries of U.S. Supreme Court cases by their major topic.")
    task: str = ("Assign each case summary exactly one major class from the list below. "
                 "Finish every answer with a final line of the form 'Label: <class name>'.")
    class_list_header: str = "Major classes:"
    definitions_header: str = "Class definitions and key indicators:"
    few_shot_header: str = "Human-coded training file {index} of {total}:"
    step_by_step: str = (
        "Work through each case step by step before labeling it: identify the actors, "
        "institutions, and organizations involved; determine the policy issue at the center "
        "of the case; check whether that issue falls within one of the listed major classes; "
        "tie the textual evidence to the class criteria and state your rationale, then give "
        "the final label.")
    precedence: str = ("Apply {name} only when none of the other classes explicitly applies "
                       "to the case.")
    warmup_item: str = ("Training case.\n{item}\nIdentify the actors, institutions, and "
                        "organizations involved, the central policy issue, the class you assign, "
                        "your rationale, and the evidence from the summary that supports it.")
    cross_exam: str = (
        "Case ID: {id}\nThe human coders assigned {gold}, not {predicted}. Reflect on your "
        "rationale, quote the passages of the summary that contradict {predicted}, and "
        "reassign the label if it was wrong. Finish with 'Label: <class name>'.")
    digest_request: str = (
        "Draw rules of thumb from these training cases that will help you classify future "
        "summaries correctly. Write them as a short numbered list.")
    digest_header: str = "Rules of thumb from the training cases:"
    batch: str = ("Code the following {count} case summaries one at a time "
                  "(session {index} of {total}).")
    item: str = "Case ID: {id}\nSummary: {summary}"

    @classmethod
    def load(cls, path) -> "PromptTemplates":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParseError(f"unknown template keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ClassDefinitions:
    entries: dict  # name -> (definition, indicators)

    @classmethod
    def from_dict(cls, data, scheme: LabelScheme) -> "ClassDefinitions":
        names = set(scheme.major_names)
        if set(data) != names:
            missing = sorted(names - set(data))
            extra = sorted(set(data) - names)
            raise MissingDefinitions(f"definitions do not match the scheme: "
                                     f"missing {missing}, unexpected {extra}")
        entries = {}
        for name in scheme.major_names:
            item = data[name]
            entries[name] = (str(item.get("definition", "")),
                             tuple(str(x) for x in item.get("indicators", [])))
        return cls(entries)

    def to_dict(self):
        return {k: {"definition": d, "indicators": list(i)} for k, (d, i) in self.entries.items()}


def load_definitions(path, scheme: LabelScheme) -> ClassDefinitions:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return ClassDefinitions.from_dict(data, scheme)


def default_definitions(scheme: LabelScheme) -> ClassDefinitions:
    with resources.files("qualcode.data").joinpath("cap_definitions.json").open() as fh:
        return ClassDefinitions.from_dict(json.load(fh), scheme)


@dataclass(frozen=True)
class WarmupItem:
    record_id: str
    prompt: str
    gold: str
    cross_exam: str


@dataclass(frozen=True)
class Batch:
    ids: tuple
    instruction: str


@dataclass(frozen=True)
class PromptPlan:
    kind: InterventionKind
    system_preamble: str
    warmup: tuple
    batches: tuple
    max_items_per_session: int
    items: dict = field(default_factory=dict)  # record id -> item prompt
    digest_request: str = ""
    digest_header: str = ""

    @property
    def item_ids(self) -> list[str]:
        return [i for b in self.batches for i in b.ids]

    def batch_preamble(self, index: int, digest: str = "") -> str:
        parts = [self.system_preamble]
        if digest:
            parts.append(f"{self.digest_header}\n{digest}")
        parts.append(self.batches[index].instruction)
        return "\n\n".join(parts)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "system_preamble": self.system_preamble,
            "warmup": [asdict(w) for w in self.warmup],
            "batches": [{"ids": list(b.ids), "instruction": b.instruction} for b in self.batches],
            "max_items_per_session": self.max_items_per_session,
            "items": dict(self.items),
            "digest_request": self.digest_request,
            "digest_header": self.digest_header,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            InterventionKind(d["kind"]), d["system_preamble"],
            tuple(WarmupItem(**w) for w in d["warmup"]),
            tuple(Batch(tuple(b["ids"]), b["instruction"]) for b in d["batches"]),
            int(d["max_items_per_session"]), dict(d["items"]),
            d.get("digest_request", ""), d.get("digest_header", ""),
        )


def plan_batches(items, max_items: int) -> list[tuple]:
    """Split ``items`` into contiguous chunks of at most ``max_items``."""
    if max_items < 1:
        raise ValueError("max_items must be at least 1")
    items = list(items)
    return [tuple(items[i:i + max_items]) for i in range(0, len(items), max_items)]


def precedence_rule(scheme: LabelScheme, templates: PromptTemplates | None = None) -> str:
    """Instruction demoting the residual Law and Crime class, or "" if absent."""
    if RESIDUAL_CLASS not in scheme.major_names:
        return ""
    templates = templates or PromptTemplates()
    return templates.precedence.format(name=RESIDUAL_CLASS)


def _class_list(scheme, templates):
    return templates.class_list_header + "\n" + "\n".join(f"- {n}" for n in scheme.major_names)


def _definitions_block(scheme, defs, templates):
    lines = [templates.definitions_header]
    for name in scheme.major_names:
        definition, indicators = defs.entries[name]
        line = f"- {name}: {definition}"
        if indicators:
            line += f" Key indicators: {', '.join(indicators)}."
        lines.append(line)
    return "\n".join(lines)


def _training_files(chosen, records, templates):
    blocks = []
    for f in range(FEW_SHOT_FILES):
        part = chosen[f * FEW_SHOT_FILE_SIZE:(f + 1) * FEW_SHOT_FILE_SIZE]
        lines = [templates.few_shot_header.format(index=f + 1, total=FEW_SHOT_FILES)]
        for rid in part:
            rec = records[rid]
            lines.append(f"Summary: {rec.summary}\nHuman label: {rec.gold_major.name}")
        blocks.append("\n\n".join(lines))
    return "\n\n".join(blocks)


def _pick(pool, k, seed):
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in idx]


def build_plan(kind: InterventionKind, scheme: LabelScheme, sample, corpus: Corpus,
               defs: ClassDefinitions | None = None, training_pool=(),
               max_items: int = DEFAULT_MAX_ITEMS, seed: int = 0,
               templates: PromptTemplates | None = None) -> PromptPlan:
    """Assemble the prompt plan for one sample under one strategy.

    ``training_pool`` must not overlap the sample for few-shot (100 items in
    two files of 50) and step-by-step (3 warm-up items); training items are
    drawn from the sorted pool with ``seed``.
    """
    kind = InterventionKind(kind)
    templates = templates or PromptTemplates()
    sample = list(sample)
    records = corpus.by_id()

    if kind is InterventionKind.DEFINITIONS and defs is None:
        raise MissingDefinitions("the definitions strategy needs class definitions")

    pool = sorted(set(training_pool))
    needed = {InterventionKind.FEW_SHOT: FEW_SHOT_FILES * FEW_SHOT_FILE_SIZE,
              InterventionKind.STEP_BY_STEP: WARMUP_ITEMS}.get(kind, 0)
    if needed:
        overlap = set(pool) & set(sample)
        if overlap:
            raise OverlapError(overlap)
        if len(pool) < needed:
            raise TrainingPoolTooSmall(needed, len(pool))

    parts = [templates.role, templates.overview, templates.task, _class_list(scheme, templates)]
    warmup = ()
    if kind is InterventionKind.FEW_SHOT:
        parts.append(_training_files(_pick(pool, needed, seed), records, templates))
    elif kind is InterventionKind.DEFINITIONS:
        parts.append(_definitions_block(scheme, defs, templates))
    elif kind is InterventionKind.STEP_BY_STEP:
        parts.append(templates.step_by_step)
        rule = precedence_rule(scheme, templates)
        if rule:
            parts.append(rule)
        warmup = tuple(
            WarmupItem(rid,
                       templates.warmup_item.format(
                           item=templates.item.format(id=rid, summary=records[rid].summary)),
                       records[rid].gold_major.name, templates.cross_exam)
            for rid in _pick(pool, needed, seed))

    chunks = plan_batches(sample, max_items)
    batches = tuple(Batch(ids, templates.batch.format(count=len(ids), index=i + 1,
                                                     total=len(chunks)))
                    for i, ids in enumerate(chunks))
    items = {rid: templates.item.format(id=rid, summary=records[rid].summary) for rid in sample}
    return PromptPlan(kind, "\n\n".join(parts), warmup, batches, max_items, items,
                      templates.digest_request, templates.digest_header)


def warmup_protocol(plan: PromptPlan, backend, scheme: LabelScheme, session=None) -> str:
    """Run the step-by-step warm-up and return the rules-of-thumb digest.

    Each training case is sent once; a wrong label triggers one
    cross-examination turn naming the human label. After the last case the
    model is asked for a digest, returned verbatim.
    """
    from .backends import Session

    if plan.kind is not InterventionKind.STEP_BY_STEP:
        raise ValueError("warm-up applies to the step-by-step strategy only")
    session = session if session is not None else Session(0, plan.system_preamble)
    for item in plan.warmup:
        reply = backend.send(session, item.prompt)
        label, _ = parse_response(reply, scheme, Level.MAJOR)
        if isinstance(label, Unparsed):
            raise UnparsedWarmupResponse(item.record_id, reply)
        if label.name != item.gold:
            backend.send(session, item.cross_exam.format(
                id=item.record_id, gold=item.gold, predicted=label.name))
    return backend.send(session, plan.digest_request)
