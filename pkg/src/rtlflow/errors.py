"""Exception hierarchy shared across the package."""


class RtlflowError(Exception):
    """Base class for all rtlflow errors."""


# --- gateway ---

class BackendUnavailable(RtlflowError):
    """Remote chat backend could not be reached after all retries."""


class ScriptExhausted(RtlflowError):
    """Scripted backend has no canned turns left."""


class RoleMismatch(RtlflowError):
    """Scripted turn expected a different role than the one sending."""


class SinkWriteError(RtlflowError):
    """Transcript sink could not be written."""


# --- role engine ---

class UnparseablePlan(RtlflowError):
    """Planner reply contains no recognizable numbered list."""


class NoCodeBlock(RtlflowError):
    """Programmer reply lacks a Verilog module."""


class UnparseableReview(RtlflowError):
    """Reviewer reply could not be mapped onto the plan's step indices."""


class UnparseableDiagnosis(RtlflowError):
    """Evaluator reply contains no recognizable fix list."""


# --- toolchain ---

class ToolchainUnavailable(RtlflowError):
    """Configured compiler/simulator executable is missing."""


# --- rtl inspection ---

class EmptySource(RtlflowError):
    """Verilog source is empty or whitespace-only."""


class UnbalancedModule(RtlflowError):
    """module/endmodule keywords do not balance."""


# --- synthesis metrics ---

class MissingMetric(RtlflowError):
    def __init__(self, name: str):
        super().__init__(f"required metric missing from report: {name}")
        self.name = name


class AmbiguousUnit(RtlflowError):
    """A metric value carries a unit this parser cannot normalize."""


class UnknownDialect(RtlflowError):
    """Report text matches no supported synthesis-report dialect."""


class ZeroBaseline(RtlflowError):
    """Ratio improvement undefined for a zero baseline value."""


class ZeroTotal(RtlflowError):
    """Success rate undefined over an empty suite."""


# --- optimizer ---

class MalformedCard(RtlflowError):
    """Technique card file is missing a required section."""


class DuplicateId(RtlflowError):
    """Two technique cards share the same id."""


class MissingRequiredTechnique(RtlflowError):
    """Catalog does not cover one of the required technique names."""


class PromptOverBudget(RtlflowError):
    """ICL prompt exceeds the character budget even after truncation."""


class FunctionalRegressionUnrecoverable(RtlflowError):
    """Optimized variant never passed re-verification within budget."""


# --- config / cli ---

class ConfigParseError(RtlflowError):
    """Configuration file could not be parsed."""


class InvalidBudget(RtlflowError):
    """Pipeline budget values are out of range."""
