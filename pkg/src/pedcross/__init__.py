"""Pedestrian crossing-action prediction at desk scale.

Pipeline stages: scene-bundle ingestion and validation (:mod:`.scene`),
2 Hz -> 10 Hz annotation densification (:mod:`.densify`), ego-centered
BEV map rasterization (:mod:`.raster`), evaluation-protocol sampling
(:mod:`.sampling`), a minimal autodiff NN core (:mod:`.nn`), and the
hybrid conv+LSTM classifier with training, metrics, and per-modality
ablation (:mod:`.model`). :mod:`.synthetic` generates a deterministic
corpus so everything runs without real recordings; :mod:`.cli` ties the
stages together.
"""

__version__ = "0.1.0"

from .backend import BACKEND

__all__ = ["BACKEND", "__version__"]
