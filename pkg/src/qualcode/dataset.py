"""Corpus ingestion, preprocessing and deterministic md5 ordering."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import (DuplicateId, EmptyCorpusAfterPruning, MissingColumn,
                     MissingFile, UnknownLabelCode)
from .taxonomy import LabelRef, LabelScheme, Level

DEFAULT_COLUMNS = {"id": "id", "summary": "summary", "major": "major", "sub": "sub"}

# order matters: a dropped row is charged to the first rule it violates
PRUNING_RULES = ("missing_field", "missing_sub", "sub_parent_mismatch",
                 "short_summary", "duplicate_summary")


@dataclass(frozen=True)
class CaseRecord:
    id: str
    summary: str | None
    gold_major: LabelRef | None
    gold_sub: LabelRef | None = None

    def to_dict(self):
        return {
            "id": self.id,
            "summary": self.summary,
            "gold_major": self.gold_major.to_dict() if self.gold_major else None,
            "gold_sub": self.gold_sub.to_dict() if self.gold_sub else None,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["id"], d["summary"],
            LabelRef.from_dict(d["gold_major"]) if d.get("gold_major") else None,
            LabelRef.from_dict(d["gold_sub"]) if d.get("gold_sub") else None,
        )


@dataclass(frozen=True)
class Corpus:
    records: tuple
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self) -> dict[str, CaseRecord]:
        return {r.id: r for r in self.records}

    def subset(self, ids: Iterable[str]) -> "Corpus":
        keep = set(ids)
        return replace(self, records=tuple(r for r in self.records if r.id in keep))


# sentence splitting ---------------------------------------------------------

_TERMINATOR = re.compile(r"[.!?]+")


def sentence_count(text: str | None) -> int:
    """Count sentences with a purely mechanical rule.

    A sentence ends at a run of ``.``, ``!`` or ``?`` followed by whitespace
    and an uppercase letter, or by the end of the text. A trailing piece
    without a terminator counts if it has at least three tokens. There is no
    abbreviation lexicon, so ``"Mr. Smith sued."`` counts as two.
    """
    if not text:
        return 0
    count = 0
    start = 0
    for m in _TERMINATOR.finditer(text):
        rest = text[m.end():]
        stripped = rest.lstrip()
        at_end = not stripped
        boundary = at_end or (len(stripped) < len(rest) and stripped[0].isupper())
        if not boundary:
            continue
        if any(ch.isalnum() for ch in text[start:m.start()]):
            count += 1
        start = m.end()
    if len(text[start:].split()) >= 3:
        count += 1
    return count


# ingestion ------------------------------------------------------------------

def _parse_code(value: str):
    value = (value or "").strip()
    if not value:
        return None
    try:
        return int(float(value))
    except ValueError:
        return value


def ingest(path, scheme: LabelScheme, column_map: dict | None = None) -> Corpus:
    """Read a labeled CSV; numeric codes are resolved to names via ``scheme``.

    Empty cells become ``None`` fields (dropped later by :func:`preprocess`);
    a code the scheme does not know is an error. ``column_map`` maps the
    logical columns ``id``, ``summary``, ``major`` and optional ``sub`` to
    header names.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    cols = dict(DEFAULT_COLUMNS)
    if column_map:
        cols.update({k: v for k, v in column_map.items() if v})

    records = []
    seen = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("id", "summary", "major"):
            if cols[key] not in header:
                raise MissingColumn(cols[key])
        has_sub = cols.get("sub") in header

        for row_no, row in enumerate(reader, start=2):
            rid = (row[cols["id"]] or "").strip()
            summary = row[cols["summary"]]
            summary = summary.strip() if summary and summary.strip() else None

            major = None
            code = _parse_code(row[cols["major"]])
            if code is not None:
                if not isinstance(code, int) or not scheme.has_code(Level.MAJOR, code):
                    raise UnknownLabelCode(row_no, code)
                major = scheme.ref(Level.MAJOR, code)

            sub = None
            if has_sub:
                code = _parse_code(row[cols["sub"]])
                if code is not None:
                    if not isinstance(code, int) or not scheme.has_code(Level.SUB, code):
                        raise UnknownLabelCode(row_no, code)
                    sub = scheme.ref(Level.SUB, code)

            if rid:
                if rid in seen:
                    raise DuplicateId(row_no, rid)
                seen[rid] = row_no
            records.append(CaseRecord(rid, summary, major, sub))

    return Corpus(tuple(records), {"input_rows": len(records)})


def _violation(rec: CaseRecord, scheme, require_sub, seen_summaries):
    if not rec.id or rec.summary is None or rec.gold_major is None:
        return "missing_field"
    if require_sub and rec.gold_sub is None:
        return "missing_sub"
    if rec.gold_sub is not None and scheme is not None:
        if scheme.parent_of(rec.gold_sub.code) != rec.gold_major.code:
            return "sub_parent_mismatch"
    if sentence_count(rec.summary) < 2:
        return "short_summary"
    if rec.summary in seen_summaries:
        return "duplicate_summary"
    return None


def preprocess(corpus: Corpus, scheme: LabelScheme | None = None,
               require_sub: bool = False) -> Corpus:
    """Drop incomplete rows, one-sentence summaries and duplicate summaries.

    The first occurrence of a duplicated summary is kept. ``provenance``
    records how many rows each rule removed; counts plus survivors equal the
    input size. Pass ``scheme`` to also check sub/major consistency.
    """
    dropped = Counter()
    kept = []
    seen = set()
    for rec in corpus.records:
        rule = _violation(rec, scheme, require_sub, seen)
        if rule:
            dropped[rule] += 1
            continue
        seen.add(rec.summary)
        kept.append(rec)
    if not kept:
        raise EmptyCorpusAfterPruning(
            f"all {len(corpus)} rows removed by preprocessing: {dict(dropped)}")

    provenance = {"input_rows": len(corpus.records),
                  "dropped": {rule: dropped.get(rule, 0) for rule in PRUNING_RULES},
                  "output_rows": len(kept)}
    return Corpus(tuple(kept), provenance)


def md5_key(record_id: str, salt: str = "") -> str:
    return hashlib.md5((salt + record_id).encode("utf-8")).hexdigest()


def md5_shuffle(corpus: Corpus, salt: str = "") -> Corpus:
    """Order records by the md5 hex digest of ``salt + id`` (ties by id)."""
    records = sorted(corpus.records, key=lambda r: (md5_key(r.id, salt), r.id))
    return replace(corpus, records=tuple(records))


# persistence ----------------------------------------------------------------

def write_jsonl(corpus: Corpus, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in corpus.records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return path


def read_jsonl(path, provenance: dict | None = None) -> Corpus:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    with path.open(encoding="utf-8") as fh:
        records = tuple(CaseRecord.from_dict(json.loads(line)) for line in fh if line.strip())
    return Corpus(records, provenance or {})


def class_counts(corpus: Corpus, level: Level = Level.MAJOR) -> Counter:
    attr = "gold_major" if level is Level.MAJOR else "gold_sub"
    return Counter(getattr(r, attr).name for r in corpus.records if getattr(r, attr))
