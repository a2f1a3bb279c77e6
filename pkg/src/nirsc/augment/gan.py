"""Minimal fully-connected GAN for one-dimensional spectra.

Both networks are plain numpy MLPs with hand-written backpropagation. The
discriminator emits a logit; the sigmoid is folded into the loss so the
log terms stay finite.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..core import (
    ConvergenceFailure,
    Dataset,
    DegenerateClass,
    InvalidConfig,
    check_random_state,
    derive_seed,
    synthetic_records,
)
from ..preprocess import _snv_rows
from .ellipse import EllipseFilter, fit_ellipse


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


class MLP:
    """Dense network: ReLU hidden layers, linear output layer."""

    def __init__(self, sizes: Sequence[int], rng=None, weights=None, biases=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidConfig(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        if weights is None:
            rng = check_random_state(rng)
            weights = [
                rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
                for n_in, n_out in zip(sizes[:-1], sizes[1:])
            ]
            biases = [np.zeros(n_out) for n_out in sizes[1:]]
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for w, b, n_in, n_out in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise InvalidConfig("weight shapes do not match layer sizes")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, X):
        acts = [np.asarray(X, dtype=float)]
        a = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
        return a, acts

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, acts, grad_out):
        """Gradients of a scalar loss given ``d loss / d output``.

        Returns ``(weight_grads, bias_grads, grad_input)``.
        """
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        delta = np.asarray(grad_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (acts[i] > 0)
        return gw, gb, delta

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for i in range(len(self.weights)):
            for params in (self.weights, self.biases):
                size = params[i].size
                params[i] = flat[pos : pos + size].reshape(params[i].shape).copy()
                pos += size

    @staticmethod
    def flatten(gw, gb) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(gw, gb) for p in pair])

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.sizes,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        sizes = d["layer_sizes"]
        weights = [
            np.asarray(w, dtype=float).reshape(n_in, n_out)
            for w, n_in, n_out in zip(d["weights"], sizes[:-1], sizes[1:])
        ]
        return cls(sizes, weights=weights, biases=d["biases"])


def discriminator_loss(D: MLP, real, fake):
    """Binary cross-entropy of D, i.e. ``-(E log D(x) + E log(1 - D(G(z))))``.

    Returns ``(loss, weight_grads, bias_grads)``.
    """
    lr, acts_r = D.forward(real)
    lf, acts_f = D.forward(fake)
    loss = softplus(-lr).mean() + softplus(lf).mean()
    gw_r, gb_r, _ = D.backward(acts_r, (sigmoid(lr) - 1.0) / len(lr))
    gw_f, gb_f, _ = D.backward(acts_f, sigmoid(lf) / len(lf))
    return (
        float(loss),
        [a + b for a, b in zip(gw_r, gw_f)],
        [a + b for a, b in zip(gb_r, gb_f)],
    )


def generator_loss(G: MLP, D: MLP, z):
    """Non-saturating generator loss ``-E log D(G(z))`` and G's gradients."""
    fake, acts_g = G.forward(z)
    lf, acts_d = D.forward(fake)
    loss = softplus(-lf).mean()
    _, _, d_fake = D.backward(acts_d, (sigmoid(lf) - 1.0) / len(lf))
    gw, gb, _ = G.backward(acts_g, d_fake)
    return float(loss), gw, gb


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 32
    generator_hidden: tuple[int, ...] = (64, 128)
    discriminator_hidden: tuple[int, ...] = (128, 64)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 2000
    batch_size: int = 32
    output_dim: int = 125
    seed: int = 0

    def __post_init__(self):
        sizes = [self.noise_dim, *self.generator_hidden, *self.discriminator_hidden,
                 self.epochs, self.batch_size, self.output_dim]
        if min(sizes) < 1:
            raise InvalidConfig("GAN layer sizes, epochs and batch size must be >= 1")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise InvalidConfig("invalid optimiser settings")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


class _Momentum:
    def __init__(self, net: MLP, lr: float, momentum: float):
        self.net, self.lr, self.mu = net, lr, momentum
        self.vw = [np.zeros_like(w) for w in net.weights]
        self.vb = [np.zeros_like(b) for b in net.biases]

    def step(self, gw, gb):
        for i in range(len(gw)):
            self.vw[i] = self.mu * self.vw[i] - self.lr * gw[i]
            self.vb[i] = self.mu * self.vb[i] - self.lr * gb[i]
            self.net.weights[i] += self.vw[i]
            self.net.biases[i] += self.vb[i]


@dataclass
class SpectrumGenerator:
    """Trained generator plus the per-channel scaling it was trained under."""

    network: MLP
    noise_dim: int
    offset: np.ndarray
    scale: np.ndarray

    def sample(self, n: int, seed) -> np.ndarray:
        rng = check_random_state(seed)
        z = rng.standard_normal((n, self.noise_dim))
        return self.network(z) * self.scale + self.offset

    def to_dict(self) -> dict:
        d = self.network.to_dict()
        d.update(noise_dim=self.noise_dim, activations=["relu"] * (len(d["layer_sizes"]) - 2) + ["linear"],
                 offset=self.offset.tolist(), scale=self.scale.tolist())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumGenerator":
        return cls(MLP.from_dict(d), int(d["noise_dim"]),
                   np.asarray(d["offset"], dtype=float), np.asarray(d["scale"], dtype=float))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SpectrumGenerator":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class GanLog(NamedTuple):
    epoch: int
    d_loss: float
    g_loss: float


@dataclass
class GanResult:
    generator: SpectrumGenerator
    discriminator: MLP
    log: list = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(GanLog._fields)
            for row in self.log:
                writer.writerow([row.epoch, repr(row.d_loss), repr(row.g_loss)])


def train_gan(minority, config: GanConfig = GanConfig()) -> GanResult:
    """Train G and D on ``minority`` rows (raw spectra).

    Rows are standardised per channel before training; the returned
    generator undoes that scaling. ``log`` holds, per epoch, the
    discriminator's cross-entropy (the negated minimax value) and the
    generator's minimax term ``E log(1 - D(G(z)))``.
    """
    X = np.asarray(minority, dtype=float)
    if X.ndim != 2 or X.shape[1] != config.output_dim:
        raise InvalidConfig(f"expected rows of width {config.output_dim}")
    if len(X) < 2 * config.batch_size:
        raise InvalidConfig(
            f"GAN training needs >= {2 * config.batch_size} samples, got {len(X)}"
        )
    rng = check_random_state(config.seed)
    offset = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12 * max(1.0, float(np.abs(offset).max())), scale, 1.0)
    Xs = (X - offset) / scale

    G = MLP([config.noise_dim, *config.generator_hidden, config.output_dim], rng)
    D = MLP([config.output_dim, *config.discriminator_hidden, 1], rng)
    opt_g = _Momentum(G, config.learning_rate, config.momentum)
    opt_d = _Momentum(D, config.learning_rate, config.momentum)
    n, bs = len(Xs), config.batch_size
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        d_total = g_total = 0.0
        batches = 0
        for start in range(0, n - bs + 1, bs):
            real = Xs[order[start : start + bs]]
            fake = G(rng.standard_normal((bs, config.noise_dim)))
            d_loss, gw, gb = discriminator_loss(D, real, fake)
            opt_d.step(gw, gb)
            z = rng.standard_normal((bs, config.noise_dim))
            _, gw, gb = generator_loss(G, D, z)
            opt_g.step(gw, gb)
            d_total += d_loss
            g_total += float(-softplus(D(fake)).mean())
            batches += 1
        log.append(GanLog(epoch, d_total / batches, g_total / batches))
    generator = SpectrumGenerator(G, config.noise_dim, offset, scale)
    return GanResult(generator, D, log)


@dataclass(frozen=True)
class FilterConfig:
    n_components: int = 2
    confidence: float = 0.95
    max_rounds: int = 20
    # generated rows per round, as a multiple of the rows still missing
    oversample: float = 2.0


def _snv_or_nan(X):
    out, bad = _snv_rows(np.atleast_2d(X), 1e-12)
    out[bad] = np.nan
    return out


def generate_filtered(
    generator: SpectrumGenerator,
    ellipse: EllipseFilter,
    n: int,
    seed: int,
    config: FilterConfig = FilterConfig(),
) -> np.ndarray:
    """Draw generated spectra until ``n`` of them pass the ellipse test.

    Candidates are SNV-normalised before projection; the raw spectra are
    returned.
    """
    kept = []
    have = 0
    for round_ in range(config.max_rounds):
        if have >= n:
            break
        batch = max(int(np.ceil(config.oversample * (n - have))), 1)
        raw = generator.sample(batch, derive_seed(seed, round_))
        normed = _snv_or_nan(raw)
        finite = np.all(np.isfinite(normed), axis=1)
        inside = np.zeros(batch, dtype=bool)
        if finite.any():
            inside[finite] = ellipse.contains(normed[finite])
        kept.append(raw[inside])
        have += int(inside.sum())
    if have < n:
        raise ConvergenceFailure(
            f"only {have} of {n} generated spectra passed the ellipse after "
            f"{config.max_rounds} rounds"
        )
    return np.vstack(kept)[:n]


def balance_with_gan(
    train: Dataset,
    gan_config: Optional[GanConfig] = None,
    filter_config: FilterConfig = FilterConfig(),
    generator: Optional[SpectrumGenerator] = None,
    return_model: bool = False,
):
    """Fill the minority class of ``train`` with filtered GAN spectra.

    The GAN (unless ``generator`` is given) is trained on the raw minority
    spectra of the non-synthetic rows; returned synthetics are raw too.
    """
    real = train.originals()
    classes, counts = np.unique(real.labels, return_counts=True)
    if len(classes) < 2:
        raise DegenerateClass("both classes are needed to balance")
    all_counts = {c: int(np.sum(train.labels == c)) for c in classes}
    minority = min(all_counts, key=lambda c: (all_counts[c], c))
    deficit = max(all_counts.values()) - all_counts[minority]
    gan_config = gan_config or GanConfig(output_dim=train.grid.count)
    result = None
    if deficit == 0:
        return (train, result) if return_model else train
    minority_spectra = real.spectra[real.labels == minority]
    if generator is None:
        result = train_gan(minority_spectra, gan_config)
        generator = result.generator
    ellipse = fit_ellipse(
        _snv_rows(minority_spectra, 1e-12)[0], filter_config.n_components, filter_config.confidence
    )
    new = generate_filtered(generator, ellipse, deficit, derive_seed(gan_config.seed, 1), filter_config)
    out = train.concat(synthetic_records(new, int(minority), "gan-", train.grid))
    return (out, result) if return_model else out
