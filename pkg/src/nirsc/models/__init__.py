"""Classifiers: Newton-boosted trees (with optional GOSS) and PLS-DA."""
import json

from .gbdt import (
    BoostedEnsemble,
    BoostedTreesClassifier,
    GbdtConfig,
    GossConfig,
    gbdt_fit,
    gbdt_predict_proba,
    goss_sample,
)
from .plsda import PLSDAClassifier, PlsdaConfig, PlsModel, plsda_fit, plsda_predict


def model_from_dict(d: dict):
    """Rebuild a fitted model from its ``to_dict`` form."""
    kind = d.get("kind")
    if kind == "gbdt":
        return BoostedEnsemble.from_dict(d)
    if kind == "plsda":
        return PlsModel.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


__all__ = [
    "BoostedEnsemble", "BoostedTreesClassifier", "GbdtConfig", "GossConfig",
    "gbdt_fit", "gbdt_predict_proba", "goss_sample", "PLSDAClassifier",
    "PlsdaConfig", "PlsModel", "plsda_fit", "plsda_predict", "model_from_dict",
    "load_model",
]
