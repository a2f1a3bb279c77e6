"""Experiment arms: preprocessing x augmentation x model, fitted as a unit.

Arms use the roman/latin codes of the result tables: I/II/III select the
augmentation (none, SMOTE, GAN) and a/b/c the preprocessing (raw, SNV,
SNV + window features), e.g. ``"III-c"``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .augment.gan import FilterConfig, GanConfig, balance_with_gan
from .augment.smote import SmoteConfig, smote_resample
from .core import Dataset, InvalidConfig, derive_seed
from .features import FEATURE_KINDS, WindowSpec, extract_matrix, feature_columns
from .models import BoostedEnsemble, GbdtConfig, PlsdaConfig, gbdt_fit, model_from_dict, plsda_fit
from .preprocess import snv

PREPROCESSING = ("raw", "snv", "snv_features")
AUGMENTATION = ("none", "smote", "gan")
MODELS = ("gbdt", "plsda")
_AUG_CODES = {"I": "none", "II": "smote", "III": "gan"}
_PRE_CODES = {"a": "raw", "b": "snv", "c": "snv_features"}
WINDOW_KEYS = ("window_count", "overlap_fraction", "feature_mask")


def parse_arm(code: str) -> tuple[str, str]:
    """``"III-c"`` -> ``("snv_features", "gan")``."""
    try:
        aug, pre = code.strip().split("-")
        return _PRE_CODES[pre.lower()], _AUG_CODES[aug.upper()]
    except (ValueError, KeyError):
        raise InvalidConfig(f"unknown arm {code!r}; expected e.g. I-a or III-c") from None


def arm_code(preprocessing: str, augmentation: str) -> str:
    aug = {v: k for k, v in _AUG_CODES.items()}[augmentation]
    pre = {v: k for k, v in _PRE_CODES.items()}[preprocessing]
    return f"{aug}-{pre}"


@dataclass(frozen=True)
class PipelineSpec:
    preprocessing: str = "snv_features"
    augmentation: str = "none"
    model: str = "gbdt"
    params: dict = field(default_factory=dict)
    window: WindowSpec = WindowSpec()
    smote: SmoteConfig = SmoteConfig()
    gan: GanConfig = GanConfig()
    filter: FilterConfig = FilterConfig()
    seed: int = 0

    def __post_init__(self):
        if self.preprocessing not in PREPROCESSING:
            raise InvalidConfig(f"preprocessing must be one of {PREPROCESSING}")
        if self.augmentation not in AUGMENTATION:
            raise InvalidConfig(f"augmentation must be one of {AUGMENTATION}")
        if self.model not in MODELS:
            raise InvalidConfig(f"model must be one of {MODELS}")
        self.model_config()  # validate early

    @classmethod
    def from_arm(cls, arm: str, **kwargs) -> "PipelineSpec":
        pre, aug = parse_arm(arm)
        return cls(preprocessing=pre, augmentation=aug, **kwargs)

    @property
    def arm(self) -> str:
        return arm_code(self.preprocessing, self.augmentation)

    def model_config(self):
        try:
            if self.model == "gbdt":
                return GbdtConfig(**self.params)
            return PlsdaConfig(**self.params)
        except TypeError as exc:
            raise InvalidConfig(f"bad {self.model} parameters: {exc}") from None

    def with_point(self, point: dict) -> "PipelineSpec":
        """Apply a tuner point: window keys go to the feature spec, the rest to the model."""
        point = dict(point)
        window = {k: point.pop(k) for k in WINDOW_KEYS if k in point}
        mask = [k for k in FEATURE_KINDS if point.pop(f"use_{k}", None) is True]
        if mask:
            window["feature_mask"] = tuple(mask)
        win = self.window
        if window:
            win = WindowSpec(**{**asdict(self.window), **window})
        return replace(self, params={**self.params, **point}, window=win)

    def to_dict(self) -> dict:
        return {
            "preprocessing": self.preprocessing,
            "augmentation": self.augmentation,
            "model": self.model,
            "params": _jsonable(self.params),
            "window": {**asdict(self.window), "feature_mask": list(self.window.feature_mask)},
            "smote": {**asdict(self.smote), "gap_range": list(self.smote.gap_range)},
            "gan": self.gan.to_dict(),
            "filter": asdict(self.filter),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        d = dict(d)
        if "arm" in d:
            pre, aug = parse_arm(d.pop("arm"))
            d.setdefault("preprocessing", pre)
            d.setdefault("augmentation", aug)
        w = d.get("window") or {}
        if "feature_mask" in w:
            w = {**w, "feature_mask": tuple(w["feature_mask"])}
        g = dict(d.get("gan") or {})
        for k in ("generator_hidden", "discriminator_hidden"):
            if k in g:
                g[k] = tuple(g[k])
        s = dict(d.get("smote") or {})
        if "gap_range" in s:
            s["gap_range"] = tuple(s["gap_range"])
        try:
            return cls(
                preprocessing=d.get("preprocessing", "snv_features"),
                augmentation=d.get("augmentation", "none"),
                model=d.get("model", "gbdt"),
                params=dict(d.get("params") or {}),
                window=WindowSpec(**w),
                smote=SmoteConfig(**s),
                gan=GanConfig(**g),
                filter=FilterConfig(**(d.get("filter") or {})),
                seed=int(d.get("seed", 0)),
            )
        except TypeError as exc:
            raise InvalidConfig(f"bad pipeline configuration: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def represent(spectra: np.ndarray, spec: PipelineSpec) -> np.ndarray:
    """Map raw spectra into the arm's model input space."""
    X = np.asarray(spectra, dtype=float)
    if spec.preprocessing == "raw":
        return X
    X = snv(X)
    if spec.preprocessing == "snv":
        return X
    return extract_matrix(X, spec.window)


def feature_names(spec: PipelineSpec, grid) -> list[str]:
    if spec.preprocessing == "snv_features":
        return [c.name for c in feature_columns(spec.window, grid)]
    return grid.column_names()


def augment_spectra(train: Dataset, spec: PipelineSpec, seed: int) -> Dataset:
    """Spectral-domain augmentation (GAN); other arms return ``train``."""
    if spec.augmentation != "gan":
        return train
    gan = replace(spec.gan, seed=derive_seed(seed, 7), output_dim=train.grid.count)
    return balance_with_gan(train, gan, spec.filter)


@dataclass
class FittedPipeline:
    spec: PipelineSpec
    model: object
    n_features: int
    visible_ids: frozenset = frozenset()
    n_synthetic: int = 0

    def transform(self, data) -> np.ndarray:
        spectra = data.spectra if isinstance(data, Dataset) else data
        return represent(spectra, self.spec)

    def decision_function(self, data) -> np.ndarray:
        return self.model.decision_function(self.transform(data))

    def predict(self, data) -> np.ndarray:
        score = self.decision_function(data)
        if isinstance(self.model, BoostedEnsemble):
            return (score >= 0.0).astype(int)
        return (score >= self.model.threshold).astype(int)

    def predict_proba(self, data) -> Optional[np.ndarray]:
        if isinstance(self.model, BoostedEnsemble):
            return self.model.predict_proba(self.transform(data))
        return None

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "model": self.model.to_dict(),
                "n_features": self.n_features, "n_synthetic": self.n_synthetic}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPipeline":
        return cls(PipelineSpec.from_dict(d["spec"]), model_from_dict(d["model"]),
                   int(d["n_features"]), n_synthetic=int(d.get("n_synthetic", 0)))

    @classmethod
    def load(cls, path) -> "FittedPipeline":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_pipeline(
    train: Dataset, spec: PipelineSpec, seed: Optional[int] = None,
    augmented: Optional[Dataset] = None,
) -> FittedPipeline:
    """Augment (on ``train`` only), preprocess and fit the model.

    ``augmented`` may carry a precomputed spectral augmentation of
    ``train`` (it must contain ``train`` as its real rows).
    """
    seed = spec.seed if seed is None else seed
    data = augmented if augmented is not None else augment_spectra(train, spec, seed)
    X = represent(data.spectra, spec)
    y = data.labels
    n_syn = int(data.synthetic.sum())
    if spec.augmentation == "smote":
        smote_cfg = replace(spec.smote, seed=derive_seed(seed, 11))
        X, y, mask = smote_resample(X, y, smote_cfg)
        n_syn += int(mask.sum())
    cfg = spec.model_config()
    if spec.model == "gbdt":
        model = gbdt_fit(X, y, replace(cfg, seed=derive_seed(seed, 13)))
    else:
        model = plsda_fit(X, y, cfg)
    return FittedPipeline(spec, model, X.shape[1], frozenset(train.ids.tolist()), n_syn)
