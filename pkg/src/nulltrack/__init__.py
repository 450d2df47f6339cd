"""Null-space-constrained online weight editing inside a track-by-detection loop.

The package is organized around the stages of the pipeline:

- :mod:`nulltrack.tensorio`: dense float32 tensors and the GTED binary format.
- :mod:`nulltrack.linalg`: whitening, regularized correlation, symmetric
  eigendecomposition and null-space projector construction.
- :mod:`nulltrack.fusion`: alignment of geometric features and gated fusion.
- :mod:`nulltrack.predictor`: label-injected reference encoding and the
  attention-based weight predictor.
- :mod:`nulltrack.editing`: per-frame weight editing and score-map localization.
- :mod:`nulltrack.regression`: box regression, GIoU and loss metrics.
- :mod:`nulltrack.scenes` / :mod:`nulltrack.tracker` / :mod:`nulltrack.metrics`:
  the synthetic harness (seeded scene generation, the online tracking loop,
  and study metrics).
- :mod:`nulltrack.cli`: the ``nulltrack`` command line front end.
"""

__version__ = "0.1.0"

from nulltrack.errors import ConfigError, FormatError, ValidationError

__all__ = ["ConfigError", "FormatError", "ValidationError", "__version__"]
