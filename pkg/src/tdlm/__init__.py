"""Topically-driven neural language model.

A joint topic/language model trained as two sub-tasks over shared
parameters: a convolutional document encoder with attention over topic
lookup tables, and an LSTM language model that fuses the document-topic
vector into every timestep through a GRU-style gate.  Built on a minimal
reverse-mode autodiff tensor core (numpy storage, explicit tape).
"""

import os

# Pin BLAS thread pools before numpy loads anywhere.  The model's matrices
# are small, so threading only adds overhead and (worse) can perturb
# reduction order; single-threaded kernels keep runs bit-reproducible.
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del _var, os

from .errors import (  # noqa: E402
    TdlmError, ShapeError, NumericError, ConfigError, IngestionError,
    DataError, CheckpointError, EvalError, DivergenceError, InvariantError,
)
from .tensor import Tensor, Tape  # noqa: E402
from .config import TrainConfig  # noqa: E402
from .corpus import Vocabulary, Document, Corpus  # noqa: E402
from .model import TdlmModel, init_model  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor", "Tape", "TrainConfig", "Vocabulary", "Document", "Corpus",
    "TdlmModel", "init_model",
    "TdlmError", "ShapeError", "NumericError", "ConfigError",
    "IngestionError", "DataError", "CheckpointError", "EvalError",
    "DivergenceError", "InvariantError",
    "__version__",
]
