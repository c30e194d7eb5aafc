"""Hybrid and pure quantum classifiers for complex-valued SAR chips.

Subpackages: :mod:`qsar.qsim` (state-vector simulator with adjoint
gradients), :mod:`qsar.circuits` (circuit templates), :mod:`qsar.nn`
(autodiff tape, layers, optimizer), :mod:`qsar.data` (chip I/O,
preprocessing, synthetic data), :mod:`qsar.models`, :mod:`qsar.train`
and the :mod:`qsar.cli` entry point.
"""

__version__ = "0.1.0"
