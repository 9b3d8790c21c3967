"""Zero-shot compound-expression scoring from trained-model outputs.

Each compound class blends two basic emotions and carries an AU profile. The
candidate score sums an AU agreement term, the two constituent emotion
probabilities, and a valence-sign bonus restricted to positive-valence blends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import PredictionBundle
from .relatedness import CANONICAL_AUS, EMOTIONS, RelatednessTable

_AU_TO_INDEX = {au: i for i, au in enumerate(CANONICAL_AUS)}


@dataclass
class CompoundClass:
    """A blend of two basic emotions with an AU activation profile.

    ``au_profile`` maps AU number (canonical set) -> p(au | compound) in (0, 1].
    """

    name: str
    emo1: int
    emo2: int
    au_profile: dict[int, float]
    requires_positive_valence: bool = False

    def __post_init__(self):
        if self.emo1 == self.emo2:
            raise DataError(f"compound {self.name!r}: constituent emotions must differ")
        if not self.au_profile:
            raise DataError(f"compound {self.name!r}: empty AU profile")
        for au, w in self.au_profile.items():
            if au not in _AU_TO_INDEX:
                raise DataError(f"compound {self.name!r}: AU{au} outside the canonical set")
            if not 0.0 < w <= 1.0:
                raise DataError(f"compound {self.name!r}: weight {w} outside (0, 1]")


@dataclass(frozen=True)
class CompoundScore:
    """Candidate-score decomposition for one compound class."""

    i_au: float
    f_emo: float
    d_va: float
    total: float


def compound_scores(bundle: PredictionBundle, classes) -> list[CompoundScore]:
    """Score every compound class from one sample's prediction bundle."""
    if bundle.au_probs is None or bundle.expr_probs is None or bundle.va is None:
        raise DataError("compound scoring needs AU, expression, and VA outputs")
    scores = []
    for c in classes:
        w = np.array(list(c.au_profile.values()))
        idx = np.array([_AU_TO_INDEX[au] for au in c.au_profile])
        i_au = float(w @ bundle.au_probs[idx] / w.sum())
        f_emo = float(bundle.expr_probs[c.emo1] + bundle.expr_probs[c.emo2])
        d_va = 1.0 if c.requires_positive_valence and bundle.va[0] > 0 else 0.0
        scores.append(CompoundScore(i_au, f_emo, d_va, i_au + f_emo + d_va))
    return scores


def predict_compound(scores) -> int:
    """Index of the maximum candidate score; ties break to the lowest index."""
    scores = list(scores)
    if not scores:
        raise DataError("no compound scores to rank")
    totals = [s.total for s in scores]
    return int(np.argmax(totals))


def compound_class_from_emotions(
    name: str,
    emo1: int,
    emo2: int,
    table: RelatednessTable,
    positive_valence: bool = False,
) -> CompoundClass:
    """Build a compound profile as the union of two emotions' table entries.

    AUs present in both constituents take the larger weight.
    """
    profile: dict[int, float] = {}
    for emo in (emo1, emo2):
        for e in table.lookup(emo):
            au = CANONICAL_AUS[e.index]
            profile[au] = max(profile.get(au, 0.0), e.weight)
    return CompoundClass(name, emo1, emo2, profile, positive_valence)


# (emo1, emo2, positive valence) for the standard eleven blends.
_DEFAULT_BLENDS = [
    ("happily_surprised", "happiness", "surprise", True),
    ("happily_disgusted", "happiness", "disgust", True),
    ("sadly_fearful", "sadness", "fear", False),
    ("sadly_angry", "sadness", "anger", False),
    ("sadly_surprised", "sadness", "surprise", False),
    ("sadly_disgusted", "sadness", "disgust", False),
    ("fearfully_angry", "fear", "anger", False),
    ("fearfully_surprised", "fear", "surprise", False),
    ("angrily_surprised", "anger", "surprise", False),
    ("angrily_disgusted", "anger", "disgust", False),
    ("disgustedly_surprised", "disgust", "surprise", False),
]


def default_compound_classes(table: RelatednessTable) -> list[CompoundClass]:
    """The standard eleven two-emotion blends, profiled from the domain table."""
    return [
        compound_class_from_emotions(
            name, EMOTIONS.index(e1), EMOTIONS.index(e2), table, pos
        )
        for name, e1, e2, pos in _DEFAULT_BLENDS
    ]


def save_compound_profiles(path, classes) -> None:
    payload = [
        {
            "name": c.name,
            "emo1": c.emo1,
            "emo2": c.emo2,
            "aus": {str(au): w for au, w in sorted(c.au_profile.items())},
            "positive_valence": c.requires_positive_valence,
        }
        for c in classes
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_compound_profiles(path) -> list[CompoundClass]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read compound profiles {path}: {e}") from e
    if not payload:
        raise DataError(f"empty compound profile file: {path}")
    return [
        CompoundClass(
            name=d["name"],
            emo1=int(d["emo1"]),
            emo2=int(d["emo2"]),
            au_profile={int(au): float(w) for au, w in d["aus"].items()},
            requires_positive_valence=bool(d.get("positive_valence", False)),
        )
        for d in payload
    ]
