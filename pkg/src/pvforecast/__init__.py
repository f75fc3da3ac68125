"""Short-term photovoltaic power forecasting on a small autodiff engine.

The package covers the full pipeline: a seeded synthetic station
generator, 15-minute day reshaping with cyclic time/day encodings, a
causal-masked metadata-fused transformer encoder, AdamW training with an
elastic-net penalty, distribution-aware evaluation metrics, and k-fold
cross-validation / ablation protocols, all driven by one command-line
tool.
"""

from pvforecast.autodiff import Tensor, grad_check

__version__ = "0.1.0"

__all__ = ["Tensor", "grad_check", "__version__"]
