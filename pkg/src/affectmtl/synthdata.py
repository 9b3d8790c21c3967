"""Synthetic heterogeneous datasets with known generative relatedness.

Emotion drawn from a prior; AUs Bernoulli with the relatedness weight; VA from
per-emotion means plus bounded uniform noise (so the cleaning rules always
hold); features are a fixed random linear map of the full label signal plus
Gaussian noise. Labels are then stripped so each partition keeps one type.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .labels import HeterogeneousSample, _va_consistent
from .relatedness import CoAnnotatedCorpus, EMOTIONS, NUM_AUS, RelatednessTable

# Per-emotion (valence, arousal) means; signs chosen so the cleaning rules of
# clean_va_expr hold with margin for noise up to the component magnitude.
DEFAULT_VA_MEANS = {
    "neutral": (0.0, 0.0),
    "anger": (-0.6, 0.6),
    "disgust": (-0.6, 0.3),
    "fear": (-0.5, 0.6),
    "happiness": (0.6, 0.4),
    "sadness": (-0.6, -0.3),
    "surprise": (0.1, 0.7),
}

# Neutral VA stays inside the cleaning radius 0.15: per-axis cap 0.15/sqrt(2).
_NEUTRAL_CAP = 0.105


@dataclass
class GeneratorSpec:
    """Ground-truth generative configuration for one synthetic dataset."""

    relatedness: RelatednessTable
    va_means: dict = field(default_factory=lambda: dict(DEFAULT_VA_MEANS))
    feature_dim: int = 32
    noise_scale: float = 0.3
    class_prior: np.ndarray | None = None
    seed: int = 0
    feature_map: str = "random"  # "random" | "identity"
    frames_per_video: int | None = None

    def __post_init__(self):
        k = len(EMOTIONS)
        if self.class_prior is None:
            self.class_prior = np.full(k, 1.0 / k)
        self.class_prior = np.asarray(self.class_prior, dtype=float)
        if self.class_prior.size != k or np.any(self.class_prior < 0):
            raise DataError("class prior must be a nonnegative 7-vector")
        if self.class_prior.sum() <= 0:
            raise DataError("degenerate class prior")
        self.class_prior = self.class_prior / self.class_prior.sum()
        for name, (v, a) in self.va_means.items():
            e = EMOTIONS.index(name)
            if not _va_consistent(e, v, a):
                raise DataError(f"va mean for {name!r} violates the cleaning rules")
        signal_dim = k + NUM_AUS + 2
        if self.feature_map == "identity" and self.feature_dim != signal_dim:
            raise DataError(f"identity feature map needs feature_dim == {signal_dim}")
        if self.feature_map not in ("random", "identity"):
            raise DataError(f"unknown feature map {self.feature_map!r}")


def _va_noise_caps(emotion_index: int, mean_v, mean_a, noise_scale):
    """Per-axis noise bounds keeping the sample inside its cleaning region."""
    if emotion_index == EMOTIONS.index("neutral"):
        return min(noise_scale, _NEUTRAL_CAP), min(noise_scale, _NEUTRAL_CAP)
    cap_v = cap_a = noise_scale
    neg_v = {EMOTIONS.index(e) for e in ("sadness", "disgust", "fear", "anger")}
    if emotion_index in neg_v or emotion_index == EMOTIONS.index("happiness"):
        cap_v = min(noise_scale, abs(mean_v) * 0.99)
    if emotion_index == EMOTIONS.index("anger"):
        cap_a = min(noise_scale, abs(mean_a) * 0.99)
    return cap_v, cap_a


def _draw_full_samples(spec: GeneratorSpec, n: int) -> list[HeterogeneousSample]:
    rng = np.random.default_rng(spec.seed)
    k = len(EMOTIONS)
    r = spec.relatedness.weight_matrix(reweight=True)
    if r.shape[0] != k:
        raise DataError("relatedness table must cover all 7 emotions")
    signal_dim = k + NUM_AUS + 2
    if spec.feature_map == "identity":
        w = np.eye(signal_dim)
    else:
        map_rng = np.random.default_rng(spec.seed + 104729)
        w = map_rng.normal(size=(spec.feature_dim, signal_dim)) / np.sqrt(signal_dim)
    samples = []
    for i in range(n):
        emo = int(rng.choice(k, p=spec.class_prior))
        au = (rng.random(NUM_AUS) < r[emo]).astype(float)
        mv, ma = spec.va_means[EMOTIONS[emo]]
        cap_v, cap_a = _va_noise_caps(emo, mv, ma, spec.noise_scale)
        v = float(np.clip(mv + rng.uniform(-cap_v, cap_v), -1.0, 1.0))
        a = float(np.clip(ma + rng.uniform(-cap_a, cap_a), -1.0, 1.0))
        onehot = np.zeros(k)
        onehot[emo] = 1.0
        signal = np.concatenate([onehot, au, [v, a]])
        x = w @ signal + spec.noise_scale * rng.normal(size=w.shape[0])
        seq = None
        if spec.frames_per_video:
            seq = (f"vid{i // spec.frames_per_video:05d}", i % spec.frames_per_video)
        samples.append(
            HeterogeneousSample(
                id=f"s{i:06d}", features=x, va=(v, a), expr=emo, au=au,
                sequence_key=seq,
            )
        )
    return samples


def generate_full(spec: GeneratorSpec, n: int) -> list[HeterogeneousSample]:
    """Samples carrying all three label types (no stripping)."""
    return _draw_full_samples(spec, n)


def generate(spec: GeneratorSpec, n: int, partition=(1 / 3, 1 / 3, 1 / 3)):
    """Three disjoint sets keeping only VA, only AU, and only expression labels."""
    fr = np.asarray(partition, dtype=float)
    if fr.size != 3 or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("partition fractions must be 3 nonnegative values summing to 1")
    full = _draw_full_samples(spec, n)
    n_va = int(round(n * fr[0]))
    n_au = int(round(n * (fr[0] + fr[1]))) - n_va
    va_set = [replace(s, expr=None, au=None) for s in full[:n_va]]
    au_set = [replace(s, va=None, expr=None) for s in full[n_va : n_va + n_au]]
    expr_set = [replace(s, va=None, au=None) for s in full[n_va + n_au :]]
    return va_set, au_set, expr_set


def generate_corpus(spec: GeneratorSpec, n: int) -> CoAnnotatedCorpus:
    """Unstripped co-annotated corpus for empirical-relatedness inference."""
    full = _draw_full_samples(spec, n)
    return CoAnnotatedCorpus(
        class_names=EMOTIONS,
        label_names=spec.relatedness.binary_label_names,
        samples=[(s.expr, s.au) for s in full],
    )
