import numpy as np
import pytest

from affectmtl import (
    CANONICAL_AUS,
    EMOTIONS,
    CompoundClass,
    DataError,
    PredictionBundle,
    compound_scores,
    default_compound_classes,
    domain_table,
    load_compound_profiles,
    predict_compound,
    save_compound_profiles,
)

AU_IDX = {au: i for i, au in enumerate(CANONICAL_AUS)}
TABLE = domain_table()


def bundle(expr=None, au=None, va=(0.0, 0.0)):
    expr_probs = np.full(7, 1 / 7) if expr is None else np.asarray(expr, float)
    au_probs = np.full(17, 0.5) if au is None else np.asarray(au, float)
    return PredictionBundle(va=va, expr_probs=expr_probs, au_probs=au_probs)


def test_compound_class_validation():
    with pytest.raises(DataError):
        CompoundClass("x", 1, 1, {12: 1.0})
    with pytest.raises(DataError):
        CompoundClass("x", 1, 2, {})
    with pytest.raises(DataError):
        CompoundClass("x", 1, 2, {3: 1.0})  # AU3 outside the canonical set
    with pytest.raises(DataError):
        CompoundClass("x", 1, 2, {12: 1.5})


def test_i_au_perfect_match():
    c = CompoundClass("hs", 4, 6, {12: 1.0, 25: 1.0})
    au = np.zeros(17)
    au[AU_IDX[12]] = au[AU_IDX[25]] = 1.0
    (score,) = compound_scores(bundle(au=au), [c])
    assert score.i_au == pytest.approx(1.0)


def test_f_emo_sum():
    happy, surprised = EMOTIONS.index("happiness"), EMOTIONS.index("surprise")
    expr = np.zeros(7)
    expr[happy], expr[surprised] = 0.5, 0.3
    expr[0] = 0.2
    c = CompoundClass("happily_surprised", happy, surprised, {12: 1.0})
    (score,) = compound_scores(bundle(expr=expr), [c])
    assert score.f_emo == pytest.approx(0.8)


def test_valence_sign_rule():
    c = CompoundClass("hs", 4, 6, {12: 1.0}, requires_positive_valence=True)
    (neg,) = compound_scores(bundle(va=(-0.2, 0.0)), [c])
    (pos,) = compound_scores(bundle(va=(0.2, 0.0)), [c])
    assert neg.d_va == 0.0 and pos.d_va == 1.0
    unflagged = CompoundClass("sf", 3, 5, {4: 1.0})
    (s,) = compound_scores(bundle(va=(0.9, 0.0)), [unflagged])
    assert s.d_va == 0.0


def test_predict_compound_argmax_and_ties():
    from affectmtl.zeroshot import CompoundScore

    scores = [CompoundScore(0.2, 1.0, 0, 1.2), CompoundScore(0.4, 1.0, 1, 2.4), CompoundScore(0.1, 0.2, 0, 0.3)]
    assert predict_compound(scores) == 1
    tied = [CompoundScore(0, 0, 0, 1.0), CompoundScore(0, 0, 0, 1.0)]
    assert predict_compound(tied) == 0
    with pytest.raises(DataError):
        predict_compound([])


def test_predict_compound_brute_force_oracle():
    from affectmtl.zeroshot import CompoundScore

    rng = np.random.default_rng(0)
    for _ in range(100):
        totals = rng.uniform(0, 3, size=rng.integers(1, 12))
        scores = [CompoundScore(0, 0, 0, t) for t in totals]
        best = max(range(len(totals)), key=lambda i: (totals[i], -i))
        assert predict_compound(scores) == best


def test_score_component_invariants():
    classes = default_compound_classes(TABLE)
    rng = np.random.default_rng(1)
    for _ in range(200):
        b = bundle(
            expr=rng.dirichlet(np.ones(7)),
            au=rng.random(17),
            va=tuple(rng.uniform(-1, 1, 2)),
        )
        for s in compound_scores(b, classes):
            assert 0.0 <= s.i_au <= 1.0
            assert 0.0 <= s.f_emo <= 1.0
            assert s.d_va in (0.0, 1.0)
            assert s.total == s.i_au + s.f_emo + s.d_va
            assert 0.0 <= s.total <= 3.0


def test_i_au_monotonicity():
    classes = default_compound_classes(TABLE)
    rng = np.random.default_rng(2)
    for _ in range(50):
        au = rng.random(17)
        c = classes[int(rng.integers(len(classes)))]
        target_au = list(c.au_profile)[int(rng.integers(len(c.au_profile)))]
        (before,) = compound_scores(bundle(au=au), [c])
        au2 = au.copy()
        au2[AU_IDX[target_au]] = min(1.0, au2[AU_IDX[target_au]] + rng.uniform(0, 0.5))
        (after,) = compound_scores(bundle(au=au2), [c])
        assert after.i_au >= before.i_au - 1e-12


def test_default_profiles_from_table():
    classes = {c.name: c for c in default_compound_classes(TABLE)}
    hs = classes["happily_surprised"]
    assert hs.requires_positive_valence
    assert hs.au_profile[12] == 1.0  # prototypical for happiness
    assert hs.au_profile[5] == 0.66  # observational for surprise
    assert hs.au_profile[25] == 1.0  # prototypical for both constituents
    assert not classes["sadly_fearful"].requires_positive_valence


def test_profile_file_round_trip(tmp_path):
    classes = default_compound_classes(TABLE)
    p = tmp_path / "profiles.json"
    save_compound_profiles(p, classes)
    back = load_compound_profiles(p)
    assert [c.name for c in back] == [c.name for c in classes]
    assert back[0].au_profile == classes[0].au_profile
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    with pytest.raises(DataError):
        load_compound_profiles(empty)
