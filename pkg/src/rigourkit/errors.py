"""Exception types shared across the pipeline."""


class RigourkitError(Exception):
    """Base class for all library errors."""


# --- corpus ---------------------------------------------------------------

class MalformedRecord(RigourkitError):
    def __init__(self, line_number: int, reason: str = ""):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"malformed record at line {line_number}: {reason}")


class DuplicateId(RigourkitError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate document id: {doc_id!r}")


class MissingRequiredField(RigourkitError):
    def __init__(self, name: str, line_number: int | None = None):
        self.name = name
        self.line_number = line_number
        where = f" at line {line_number}" if line_number is not None else ""
        super().__init__(f"missing required field {name!r}{where}")


class SectionNotFound(RigourkitError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"section not found: {which}")


class EmptyCorpus(RigourkitError):
    pass


class InvalidState(RigourkitError):
    pass


# --- mask -----------------------------------------------------------------

class NoCandidates(RigourkitError):
    pass


# --- features -------------------------------------------------------------

class EmptyVocabulary(RigourkitError):
    pass


class SingleClassLabels(RigourkitError):
    pass


class NotConverged(UserWarning):
    """Gradient descent hit the iteration cap; the last iterate is returned."""


# --- criteria -------------------------------------------------------------

class SchemaError(RigourkitError):
    pass


class ParseError(RigourkitError):
    def __init__(self, raw_response: str):
        self.raw_response = raw_response
        super().__init__(f"could not parse definition from response: {raw_response[:200]!r}")


# --- providers ------------------------------------------------------------

class ProviderError(RigourkitError):
    pass


class DimensionMismatch(RigourkitError):
    pass


class ZeroVector(RigourkitError):
    pass


# --- salience -------------------------------------------------------------

class RegistryTooLarge(RigourkitError):
    pass


class DegenerateInput(RigourkitError):
    pass


# --- certainty ------------------------------------------------------------

class MissingPrediction(RigourkitError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"no certainty prediction for sentence {key}")


# --- app ------------------------------------------------------------------

class ConfigError(RigourkitError):
    pass


class MissingStageOutput(RigourkitError):
    def __init__(self, stage: str, path):
        self.stage = stage
        self.path = path
        super().__init__(f"missing output of stage {stage!r}: {path}")


class StageError(RigourkitError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
