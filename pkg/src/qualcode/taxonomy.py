"""Two-level label scheme and normalization of free-text labels.

A :class:`LabelScheme` holds the major classes, optional subclasses and an
alias table. :func:`normalize_label` maps whatever a model wrote back onto a
canonical :class:`LabelRef`, or returns an :class:`Unparsed` value that keeps
the raw text and the nearest candidate so misparses stay visible.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Union

from .errors import DuplicateCode, MissingFile, OrphanSub, ParseError

#: category name used for unparsed predictions in tables and statistics
UNPARSED = "<unparsed>"

FUZZY_MAX_DISTANCE = 2


class Level(str, enum.Enum):
    MAJOR = "major"
    SUB = "sub"


@dataclass(frozen=True)
class LabelRef:
    level: Level
    code: int
    name: str

    def to_dict(self):
        return {"level": self.level.value, "code": self.code, "name": self.name}

    @classmethod
    def from_dict(cls, d):
        return cls(Level(d["level"]), int(d["code"]), d["name"])


@dataclass(frozen=True)
class Unparsed:
    """A reply that could not be resolved to a class of the scheme."""

    raw: str
    nearest: str | None = None
    distance: int | None = None

    name = UNPARSED

    def to_dict(self):
        return {"unparsed": True, "raw": self.raw, "nearest": self.nearest,
                "distance": self.distance}

    @classmethod
    def from_dict(cls, d):
        return cls(d["raw"], d.get("nearest"), d.get("distance"))


Label = Union[LabelRef, Unparsed]


def label_from_dict(d) -> Label:
    if d.get("unparsed"):
        return Unparsed.from_dict(d)
    return LabelRef.from_dict(d)


def fold(text: str) -> str:
    """Case-fold and collapse internal whitespace."""
    return " ".join(text.split()).casefold()


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance (unit-cost insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class LabelScheme:
    """Major classes ``(code, name)``, subclasses ``(code, name, parent)``
    and an alias table mapping alternate spellings to canonical names.

    Construction validates the invariants; instances are immutable and safe
    to share between threads.
    """

    majors: tuple
    subs: tuple = ()
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        majors = tuple((int(c), str(n)) for c, n in self.majors)
        subs = tuple((int(c), str(n), int(p)) for c, n, p in self.subs)
        if not majors:
            raise ParseError("scheme has no major classes")

        codes = {}
        for code, name in majors:
            if code in codes:
                raise DuplicateCode(code)
            codes[code] = name
        folded = [fold(n) for _, n in majors]
        if len(set(folded)) != len(folded):
            raise ParseError("major class names collide under case-folding")

        sub_codes = {}
        for code, name, parent in subs:
            if code in sub_codes or code in codes:
                raise DuplicateCode(code)
            if parent not in codes:
                raise OrphanSub(code)
            sub_codes[code] = (name, parent)

        canonical = {n for _, n in majors} | {n for _, n, _ in subs}
        for alias, target in self.aliases.items():
            if target not in canonical:
                raise ParseError(f"alias {alias!r} points at unknown class {target!r}")

        object.__setattr__(self, "majors", majors)
        object.__setattr__(self, "subs", subs)
        object.__setattr__(self, "aliases", MappingProxyType(dict(self.aliases)))
        object.__setattr__(self, "_major_by_code", MappingProxyType(codes))
        object.__setattr__(self, "_sub_by_code", MappingProxyType(sub_codes))
        object.__setattr__(self, "_major_by_name", MappingProxyType({n: c for c, n in majors}))
        object.__setattr__(self, "_sub_by_name", MappingProxyType({n: c for c, n, _ in subs}))

    # lookups

    @property
    def major_names(self) -> list[str]:
        return [n for _, n in self.majors]

    @property
    def sub_names(self) -> list[str]:
        return [n for _, n, _ in self.subs]

    def names(self, level: Level) -> list[str]:
        return self.major_names if level is Level.MAJOR else self.sub_names

    def ref(self, level: Level, code: int) -> LabelRef:
        """Resolve a numeric code; raises KeyError if absent."""
        if level is Level.MAJOR:
            return LabelRef(level, code, self._major_by_code[code])
        return LabelRef(level, code, self._sub_by_code[code][0])

    def ref_by_name(self, level: Level, name: str) -> LabelRef:
        table = self._major_by_name if level is Level.MAJOR else self._sub_by_name
        return LabelRef(level, table[name], name)

    def has_code(self, level: Level, code: int) -> bool:
        table = self._major_by_code if level is Level.MAJOR else self._sub_by_code
        return code in table

    def code_of(self, name: str) -> int | None:
        """Numeric code of a canonical major or sub name, else None."""
        if name in self._major_by_name:
            return self._major_by_name[name]
        return self._sub_by_name.get(name)

    def parent_of(self, sub_code: int) -> int:
        return self._sub_by_code[sub_code][1]

    def to_dict(self):
        return {
            "majors": [{"code": c, "name": n} for c, n in self.majors],
            "subs": [{"code": c, "name": n, "parent": p} for c, n, p in self.subs],
            "aliases": dict(sorted(self.aliases.items())),
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.md5(blob).hexdigest()

    @classmethod
    def from_dict(cls, data) -> "LabelScheme":
        if not isinstance(data, dict):
            raise ParseError("scheme must be a JSON object")
        try:
            majors = [(m["code"], m["name"]) for m in data.get("majors", [])]
            subs = [(s["code"], s["name"], s["parent"]) for s in data.get("subs", [])]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed scheme entry: missing {exc}") from None
        aliases = data.get("aliases", {})
        if not isinstance(aliases, dict):
            raise ParseError("aliases must be an object")
        return cls(tuple(majors), tuple(subs), aliases)


def load_scheme(path) -> LabelScheme:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return LabelScheme.from_dict(data)


def default_scheme() -> LabelScheme:
    """The 21 CAP major topics shipped with the package."""
    with resources.files("qualcode.data").joinpath("cap_major_topics.json").open() as fh:
        return LabelScheme.from_dict(json.load(fh))


def _candidates(scheme: LabelScheme, level: Level):
    """Yield ``(folded spelling, canonical name)`` pairs for a level."""
    names = scheme.names(level)
    allowed = set(names)
    for n in names:
        yield fold(n), n
    for alias, target in sorted(scheme.aliases.items()):
        if target in allowed:
            yield fold(alias), target


def normalize_label(raw: str, level: Level, scheme: LabelScheme) -> Label:
    """Resolve free text to a class of ``scheme`` at ``level``.

    Exact folded match wins, then an alias match, then a fuzzy match within
    edit distance 2 provided every spelling in range points at one single
    class. Anything else is :class:`Unparsed` with the nearest class.
    """
    key = fold(raw).strip(" .,:;\"'*")
    names = scheme.names(level)
    for n in names:
        if fold(n) == key:
            return scheme.ref_by_name(level, n)
    for alias, target in scheme.aliases.items():
        if fold(alias) == key and target in names:
            return scheme.ref_by_name(level, target)

    best = None
    in_range = set()
    for spelling, target in _candidates(scheme, level):
        d = edit_distance(key, spelling)
        if d <= FUZZY_MAX_DISTANCE:
            in_range.add(target)
        if best is None or d < best[0]:
            best = (d, target)
    if len(in_range) == 1:
        return scheme.ref_by_name(level, in_range.pop())
    if best is None:
        return Unparsed(raw)
    return Unparsed(raw, nearest=best[1], distance=best[0])
