"""Semi-supervised contrastive learning engine for time-series classification.

Trains an encoder/classifier pair either end-to-end with a hybrid loss
(unsupervised contrastive + supervised contrastive + cross-entropy) or in the
classic two-stage pretrain/fine-tune regime, on top of a small tape-based
autodiff substrate. See the README for the CLI and file formats.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, grad_check
from .errors import SemiCLError

__all__ = ["Tape", "Tensor", "grad_check", "SemiCLError", "__version__"]
