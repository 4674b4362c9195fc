"""Exception hierarchy shared by all featedit modules.

The CLI maps these onto process exit codes: configuration problems exit 2,
malformed or inconsistent input data exits 3, numerical/degenerate failures
exit 4 (see `featedit.cli`).
"""


class FeatEditError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FeatEditError):
    """Invalid configuration value or unusable config file."""


# -- data errors (CLI exit code 3) ------------------------------------------

class FormatError(FeatEditError):
    """Binary container violates the documented layout."""


class TruncationError(FormatError):
    """Binary container ends before the declared payload."""


class ParseError(FeatEditError):
    """Malformed CSV row; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IoError(FeatEditError):
    """Underlying OS-level read/write failure."""


class ShapeError(FeatEditError):
    """Dimension mismatch between related arrays or datasets."""


class GeometryError(FeatEditError):
    """Degenerate box or spatial grid too small for the operation."""


class MissingClassError(FeatEditError):
    """A class id in [0, T) has no samples or no mask."""


class ClassIdError(FeatEditError):
    """Class id outside the declared [0, T) range."""


class InputContractError(FeatEditError):
    """Caller violated a stated input contract (mixed image/class ids)."""


class EmptyInputError(FeatEditError):
    """Operation requires at least one element."""


class SpecError(FeatEditError):
    """Synthetic-data spec is internally inconsistent."""


# -- numerical / degenerate errors (CLI exit code 4) -------------------------

class DomainError(FeatEditError):
    """Numeric argument outside its mathematical domain."""


class UndefinedDistributionError(FeatEditError):
    """Probability vector flagged undefined (all source variances zero)."""


class InsufficientDataError(FeatEditError):
    """Too few rows to estimate the requested statistic."""


class DegenerateClassError(FeatEditError):
    """A class carries no usable variance signal."""


class DegenerateDatasetError(DegenerateClassError):
    """Neither intra- nor inter-class variances carry any signal."""


class DegenerateLabelsError(FeatEditError):
    """Binary training set contains only one label."""


class NumericalError(FeatEditError):
    """Non-finite value produced where a finite one is required."""


class OracleScaleError(FeatEditError):
    """Input exceeds the deliberately small range the naive oracles accept."""
