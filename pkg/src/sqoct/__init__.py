"""Surface-code thresholds under correlated dephasing via a constrained
square-octagonal random-bond Ising model, with matching-decoder benchmarks."""

__version__ = "0.1.0"
