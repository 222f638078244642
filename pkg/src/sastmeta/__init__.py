"""Meta-evaluation platform for Android SAST tools."""

from sastmeta.errors import (
    EmptyBenchmark,
    InsufficientStates,
    InvariantError,
    MalformedReport,
    SastMetaError,
    SchemaError,
    SpawnError,
    TypeAbsent,
    UnknownParser,
    UnknownTool,
    XmlError,
)

__version__ = "0.1.0"

__all__ = [
    "EmptyBenchmark",
    "InsufficientStates",
    "InvariantError",
    "MalformedReport",
    "SastMetaError",
    "SchemaError",
    "SpawnError",
    "TypeAbsent",
    "UnknownParser",
    "UnknownTool",
    "XmlError",
]
