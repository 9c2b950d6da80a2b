"""mobicast: mobility-aware spatio-temporal epidemic forecasting.

A two-stream GCN-GRU forecaster whose graph edges are learned from
mobility, case and demographic signals, with autoregressive long-horizon
rollout and counterfactual mobility-policy simulation.
"""

from .backend import BACKEND_NAME

__version__ = "0.1.0"
__all__ = ["BACKEND_NAME", "__version__"]
