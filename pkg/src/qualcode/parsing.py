"""Extract a class label and rationale from a free-text model reply."""

from __future__ import annotations

import re

from .taxonomy import Label, LabelScheme, Level, Unparsed, fold, normalize_label

_LABEL_LINE = re.compile(r"label\s*:\s*(.+?)\s*$", re.IGNORECASE)


def _mentions(reply: str, scheme: LabelScheme, level: Level):
    """Canonical names mentioned in ``reply`` with the offset of their last mention."""
    text = fold(reply)
    names = set(scheme.names(level))
    spellings = [(fold(n), n) for n in names]
    spellings += [(fold(a), t) for a, t in scheme.aliases.items() if t in names]
    found = {}
    for spelling, target in spellings:
        pattern = r"(?<![\w])" + re.escape(spelling) + r"(?![\w])"
        for m in re.finditer(pattern, text):
            found[target] = max(found.get(target, -1), m.start())
    return found


def parse_response(reply: str, scheme: LabelScheme,
                   level: Level = Level.MAJOR) -> tuple[Label, str]:
    """Return ``(label, rationale)`` for a model reply.

    The last line containing ``Label: <text>`` wins and everything before it
    is the rationale. Without such a line the reply resolves only if it
    mentions exactly one class of the scheme.
    """
    lines = reply.splitlines()
    for i in range(len(lines) - 1, -1, -1):
        # the key may sit mid-line ("... regulation. Label: Energy.")
        idx = lines[i].lower().rfind("label")
        while idx >= 0:
            m = _LABEL_LINE.match(lines[i][idx:])
            if m and (idx == 0 or not lines[i][idx - 1].isalnum()):
                value = m.group(1).strip().rstrip(".").strip("*").strip()
                rationale = "\n".join(lines[:i] + [lines[i][:idx]]).strip().rstrip("*").strip()
                return normalize_label(value, level, scheme), rationale
            idx = lines[i].lower().rfind("label", 0, idx)

    found = _mentions(reply, scheme, level)
    if len(found) == 1:
        name = next(iter(found))
        return scheme.ref_by_name(level, name), reply.strip()
    nearest = max(found, key=found.get) if found else None
    return Unparsed(reply.strip()[-200:], nearest=nearest), reply.strip()
