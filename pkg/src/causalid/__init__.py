"""Online identification of causal functions with Gaussian processes and rollout planning."""

__version__ = "0.1.0"
