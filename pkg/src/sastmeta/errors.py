"""Exception hierarchy shared across the platform."""


class SastMetaError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(SastMetaError):
    """A data file does not parse or does not match its schema."""


class InvariantError(SastMetaError):
    """A data file parses but violates a semantic invariant."""


class UnknownTool(SastMetaError):
    pass


class UnknownParser(SastMetaError):
    pass


class MalformedReport(SastMetaError):
    pass


class SpawnError(SastMetaError):
    """The adapter command could not be started at all."""


class XmlError(SastMetaError):
    pass


class TypeAbsent(SastMetaError):
    pass


class InsufficientStates(SastMetaError):
    pass


class EmptyBenchmark(SastMetaError):
    pass
