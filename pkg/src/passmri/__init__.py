"""Simulation toolkit for anomaly-aware accelerated MRI: phantoms, sampling
masks, an unrolled reconstructor, mask optimizers, metrics and a GRAPPA
baseline."""

__version__ = "0.1.0"
