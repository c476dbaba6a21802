"""Online sharp-calibrated Bayesian optimization."""

from .gp import NOISE_VAR, KernelSpec, gp_fit, gp_predict
from .harness import RunConfig, run_single

__all__ = ["NOISE_VAR", "KernelSpec", "gp_fit", "gp_predict", "RunConfig", "run_single"]
__version__ = "0.1.0"
