"""Exception hierarchy shared across the simulator.

The CLI maps these onto its three error categories: ConfigError -> config,
MeshError -> I/O, GeometryError -> geometry.
"""


class SimulatorError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SimulatorError):
    """Invalid configuration, CLI arguments, or parameter/shape mismatch."""


class MeshError(SimulatorError):
    """Unreadable or malformed mesh / point-cloud / weights input."""


class GeometryError(SimulatorError):
    """Degenerate observation geometry (e.g. sensor inside the target's bounding sphere)."""
