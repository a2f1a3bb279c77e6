"""Class balancing: SMOTE, a small GAN and the PCA ellipse filter."""
from .ellipse import EllipseFilter, chi2_quantile, filter_generated, fit_ellipse
from .gan import (
    FilterConfig,
    GanConfig,
    GanResult,
    MLP,
    SpectrumGenerator,
    balance_with_gan,
    generate_filtered,
    train_gan,
)
from .smote import (
    SMOTESampler,
    SmoteConfig,
    balance_with_smote,
    smote,
    smote_resample,
    smote_samples,
)

__all__ = [
    "EllipseFilter", "chi2_quantile", "filter_generated", "fit_ellipse",
    "FilterConfig", "GanConfig", "GanResult", "MLP", "SpectrumGenerator",
    "balance_with_gan", "generate_filtered", "train_gan",
    "SMOTESampler", "SmoteConfig", "balance_with_smote", "smote",
    "smote_resample", "smote_samples",
]
