"""Exception hierarchy shared across the package.

Everything derives from :class:`OFMTError` so the CLI can map library
failures onto exit codes without catching unrelated bugs.
"""


class OFMTError(Exception):
    """Base class for all library errors."""


class DimensionError(OFMTError, ValueError):
    """Array or tensor extents are incompatible with an operation."""


class ParameterError(OFMTError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ContractError(OFMTError, RuntimeError):
    """An API was used outside its documented contract."""


class FormatError(OFMTError, ValueError):
    """Input data does not follow the expected format."""


class CorruptWeightsError(FormatError):
    """A weight file is truncated or otherwise unreadable."""


class IncompatibleWeightsError(OFMTError, ValueError):
    """Stored weights do not match the requested model spec."""


class SpecError(OFMTError, ValueError):
    """A model spec cannot be realised (e.g. input too small)."""


class ConfigError(OFMTError, ValueError):
    """Configuration values are invalid or exceed allowed bounds."""


class DataError(OFMTError):
    """A dataset on disk is malformed."""


class MissingFrameError(DataError):
    """A clip directory has a gap in its frame numbering."""


class LabelError(DataError):
    """A class directory name is not a known label."""


class StratificationError(DataError, ValueError):
    """A class has too few samples for the requested number of folds."""
