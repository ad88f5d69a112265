"""Byzantine-robust decentralized federated learning with sketch screening."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    GraphGenerationError,
    NumericalDivergenceError,
    ProtocolError,
)
from .sketch import (
    Sketch,
    SketchParams,
    compute_sketch,
    epsilon_hat,
    sketch_distance,
    verify_model_against_sketch,
)
