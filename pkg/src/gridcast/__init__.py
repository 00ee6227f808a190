"""gridcast: load-series forecasting with an attention encoder, a peephole
recurrent stack, and a particle-swarm hyperparameter tuner.
"""

from .autodiff import GradTape, Tensor, backward

__version__ = "0.1.0"
