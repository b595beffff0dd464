"""Exception hierarchy for the harness.

Every error raised on purpose derives from :class:`QualcodeError`, so callers
(and the CLI) can separate harness failures from programming errors.
"""

from __future__ import annotations


class QualcodeError(Exception):
    """Base class for all harness errors."""


# -- taxonomy ---------------------------------------------------------------

class SchemeError(QualcodeError, ValueError):
    pass


class MissingFile(QualcodeError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"file not found: {path}")
        self.path = path


class ParseError(SchemeError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class DuplicateCode(SchemeError):
    def __init__(self, code):
        super().__init__(f"duplicate label code {code}")
        self.code = code


class OrphanSub(SchemeError):
    def __init__(self, code):
        super().__init__(f"subtopic {code} has no parent major class")
        self.code = code


# -- dataset ----------------------------------------------------------------

class DatasetError(QualcodeError, ValueError):
    pass


class MissingColumn(DatasetError):
    def __init__(self, name):
        super().__init__(f"column {name!r} not found in CSV header")
        self.name = name


class UnknownLabelCode(DatasetError):
    def __init__(self, row, code):
        super().__init__(f"row {row}: label code {code!r} is not in the scheme")
        self.row = row
        self.code = code


class DuplicateId(DatasetError):
    def __init__(self, row, record_id):
        super().__init__(f"row {row}: duplicate record id {record_id!r}")
        self.row = row
        self.record_id = record_id


class EmptyCorpusAfterPruning(DatasetError):
    pass


# -- sampling ---------------------------------------------------------------

class SamplingError(QualcodeError, ValueError):
    pass


class EmptyCorpusAfterExclusion(SamplingError):
    pass


class SampleTooLarge(SamplingError):
    def __init__(self, n, available):
        super().__init__(f"sample size {n} exceeds corpus size {available}")
        self.n = n
        self.available = available


class StratumExhausted(SamplingError):
    def __init__(self, label, wanted, available):
        super().__init__(f"stratum {label!r} needs {wanted} records, has {available}")
        self.label = label
        self.wanted = wanted
        self.available = available


class NoDesignFound(SamplingError):
    def __init__(self, best_fraction, best_design=None):
        super().__init__(
            f"no design satisfied the expected-frequency rule "
            f"(best fraction {best_fraction:.3f} at {best_design})"
        )
        self.best_fraction = best_fraction
        self.best_design = best_design


class DegenerateTable(QualcodeError, ValueError):
    """A contingency table has an all-zero row, or too few usable columns."""


# -- interventions ----------------------------------------------------------

class InterventionError(QualcodeError, ValueError):
    pass


class MissingDefinitions(InterventionError):
    pass


class TrainingPoolTooSmall(InterventionError):
    def __init__(self, needed, available):
        super().__init__(f"training pool has {available} records, {needed} required")
        self.needed = needed
        self.available = available


class OverlapError(InterventionError):
    def __init__(self, ids):
        ids = sorted(ids)
        super().__init__(f"training pool overlaps the sample: {ids[:5]}")
        self.ids = ids


class UnparsedWarmupResponse(InterventionError):
    def __init__(self, record_id, reply):
        super().__init__(f"warm-up reply for {record_id!r} carries no recognizable label")
        self.record_id = record_id
        self.reply = reply


# -- coder backends ---------------------------------------------------------

class BackendError(QualcodeError):
    pass


class BackendUnavailable(BackendError):
    pass


class AuthError(BackendError):
    pass


class RetryExhausted(BackendError):
    def __init__(self, attempts, last_status=None, item_id=None):
        msg = f"gave up after {attempts} attempts (last status {last_status})"
        if item_id is not None:
            msg = f"item {item_id!r}: {msg}"
        super().__init__(msg)
        self.attempts = attempts
        self.last_status = last_status
        self.item_id = item_id


class MalformedResponse(BackendError):
    pass


class ScriptMismatch(BackendError):
    """A scripted backend received a message its transcript does not expect."""


# -- metrics / validity -----------------------------------------------------

class MetricsError(QualcodeError, ValueError):
    pass


class LengthMismatch(MetricsError):
    def __init__(self, a, b):
        super().__init__(f"label sequences differ in length: {a} vs {b}")


class TooFewUnits(MetricsError):
    pass


class UnresolvableLabel(MetricsError):
    def __init__(self, label):
        super().__init__(f"label {label!r} has no numeric code in the scheme")
        self.label = label


class SchemeMismatch(MetricsError):
    pass


class IndexMismatch(QualcodeError, ValueError):
    pass


class UnknownClass(QualcodeError, ValueError):
    pass


# -- report -----------------------------------------------------------------

class ReportError(QualcodeError, ValueError):
    pass


class IncompleteBundle(ReportError):
    pass


class NonSquareMatrix(ReportError):
    pass


class KeyMismatch(ReportError):
    pass
