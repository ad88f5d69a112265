"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigurationError -> 2,
ProtocolError and GraphGenerationError -> 3, NumericalDivergenceError -> 4.
"""


class ConfigurationError(Exception):
    """Invalid or infeasible parameters, config keys, or file contents."""


class ProtocolError(Exception):
    """Cross-node inconsistency, e.g. comparing sketches from different hash families."""


class GraphGenerationError(Exception):
    """Random topology generation exhausted its retry budget."""


class NumericalDivergenceError(Exception):
    """Training produced non-finite model coordinates."""
