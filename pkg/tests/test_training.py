import json
from pathlib import Path

import numpy as np
import pytest

from affectmtl import ConfigError, DataError, ExperimentConfig, domain_table
from affectmtl.labels import write_samples_csv
from affectmtl.synthdata import GeneratorSpec, generate
from affectmtl.training import run_eval, run_gradcheck, run_train

TABLE = domain_table()


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = GeneratorSpec(relatedness=TABLE, feature_dim=12, noise_scale=0.3, seed=0)
    va_set, au_set, expr_set = generate(spec, 360)
    write_samples_csv(out / "va.csv", va_set)
    write_samples_csv(out / "au.csv", au_set)
    write_samples_csv(out / "expr.csv", expr_set)
    return out


def make_config(dataset_dir, out_dir, **overrides):
    d = {
        "data": {
            "va": str(dataset_dir / "va.csv"),
            "au": str(dataset_dir / "au.csv"),
            "expr": str(dataset_dir / "expr.csv"),
        },
        "coupling": "none",
        "model": {"hidden": [16]},
        "max_batch": 40,
        "epochs": 2,
        "optimizer": {"lr": 0.05, "momentum": 0.9},
        "holdout_fraction": 0.2,
        "seed": 0,
        "out_dir": str(out_dir),
    }
    d.update(overrides)
    return ExperimentConfig.from_dict(d)


def test_run_train_writes_artifacts(dataset_dir, tmp_path):
    config = make_config(dataset_dir, tmp_path / "run")
    manifest = run_train(config)
    out = tmp_path / "run"
    assert (out / "model.bin").exists()
    assert (out / "losses.csv").exists()
    assert (out / "manifest.json").exists()
    assert manifest["config_hash"] == config.config_hash()
    assert manifest["steps"] > 0
    assert "expr" in manifest["final_metrics"]
    assert "va" in manifest["final_metrics"]
    plans = manifest["epoch_plans"]
    assert plans and plans[0]["iteration_count"] >= 1


@pytest.mark.parametrize(
    "mode", ["co_annotation", "soft_co_annotation", "distr_matching", "soft_plus_dm"]
)
def test_all_coupling_modes_train(dataset_dir, tmp_path, mode):
    config = make_config(dataset_dir, tmp_path / mode, coupling=mode, epochs=1)
    manifest = run_train(config)
    losses = (tmp_path / mode / "losses.csv").read_text().splitlines()
    header = losses[0].split(",")
    first = dict(zip(header, losses[1].split(",")))
    if mode in ("soft_co_annotation", "soft_plus_dm"):
        assert float(first["sca"]) > 0
    if mode in ("distr_matching", "soft_plus_dm"):
        assert float(first["dm"]) > 0
    if mode == "co_annotation":
        assert float(first["sca"]) == 0.0 and float(first["dm"]) == 0.0
    assert manifest["steps"] == int(first["step"]) + manifest["epoch_plans"][0]["iteration_count"] - 0


def test_determinism_byte_identical(dataset_dir, tmp_path):
    c1 = make_config(dataset_dir, tmp_path / "r1", coupling="soft_plus_dm", epochs=1)
    c2 = make_config(dataset_dir, tmp_path / "r2", coupling="soft_plus_dm", epochs=1)
    run_train(c1)
    run_train(c2)
    assert (tmp_path / "r1" / "losses.csv").read_bytes() == (tmp_path / "r2" / "losses.csv").read_bytes()
    assert (tmp_path / "r1" / "model.bin").read_bytes() == (tmp_path / "r2" / "model.bin").read_bytes()


def test_missing_dataset_path(dataset_dir, tmp_path):
    config = make_config(dataset_dir, tmp_path / "x")
    config.data["va"] = str(dataset_dir / "nope.csv")
    with pytest.raises(DataError, match="nope.csv"):
        run_train(config)


def test_invalid_coupling_mode(dataset_dir, tmp_path):
    with pytest.raises(ConfigError):
        make_config(dataset_dir, tmp_path / "x", coupling="all_of_them")


def test_va_batch_of_one_rejected(tmp_path):
    spec = GeneratorSpec(relatedness=TABLE, feature_dim=8, seed=1)
    va_set, au_set, expr_set = generate(spec, 90, partition=(0.1, 0.6, 0.3))
    out = tmp_path / "data"
    out.mkdir()
    write_samples_csv(out / "va.csv", va_set)
    write_samples_csv(out / "au.csv", au_set)
    write_samples_csv(out / "expr.csv", expr_set)
    # 9 VA training samples (holdout 0), 54 AU -> max_batch 6 gives 9 iterations
    # and VA batches of size 1
    config = make_config(out, tmp_path / "run", max_batch=6, holdout_fraction=0.0)
    with pytest.raises(ConfigError, match="VA batch"):
        run_train(config)


def test_single_set_training(dataset_dir, tmp_path):
    config = make_config(dataset_dir, tmp_path / "expr_only")
    config.data = {"expr": str(dataset_dir / "expr.csv")}
    manifest = run_train(config)
    assert list(manifest["final_metrics"]) == ["expr"]


def test_run_eval_with_and_without_sequence_keys(tmp_path):
    spec = GeneratorSpec(relatedness=TABLE, feature_dim=8, seed=2, frames_per_video=20)
    samples = [s for s in generate(spec, 120)[0]]
    keyed = tmp_path / "keyed.csv"
    write_samples_csv(keyed, samples)
    unkeyed = tmp_path / "unkeyed.csv"
    write_samples_csv(unkeyed, [type(s)(id=s.id, features=s.features, va=s.va) for s in samples])
    config = make_config(tmp_path, tmp_path / "run", epochs=1)
    config.data = {"va": str(keyed)}
    run_train(config)
    ckpt = tmp_path / "run" / "model.bin"
    res_keyed = run_eval(ckpt, keyed, tmp_path / "metrics.json")
    assert "va" in res_keyed and "va_filtered" in res_keyed
    assert (tmp_path / "metrics.json").exists()
    res_unkeyed = run_eval(ckpt, unkeyed)
    assert "va" in res_unkeyed and "va_filtered" not in res_unkeyed


def test_empirical_relatedness_source(tmp_path):
    from affectmtl.synthdata import generate_full

    spec = GeneratorSpec(relatedness=TABLE, feature_dim=8, seed=3)
    corpus_csv = tmp_path / "corpus.csv"
    write_samples_csv(corpus_csv, generate_full(spec, 400))
    va_set, au_set, expr_set = generate(spec, 120)
    for name, group in [("va", va_set), ("au", au_set), ("expr", expr_set)]:
        write_samples_csv(tmp_path / f"{name}.csv", group)
    config = make_config(
        tmp_path, tmp_path / "run", epochs=1,
        relatedness={"source": "empirical", "corpus": str(corpus_csv), "threshold": 0.1},
        coupling="distr_matching",
    )
    manifest = run_train(config)
    saved = json.loads((tmp_path / "run" / "relatedness.json").read_text())
    assert saved["kind"] == "empirical"
    assert manifest["steps"] > 0


def test_run_gradcheck_passes_all_modes():
    report = run_gradcheck(batch_size=9, hidden=(8,), input_dim=8)
    assert set(report) == {"none", "co_annotation", "soft_co_annotation", "distr_matching", "soft_plus_dm"}
    assert max(report.values()) < 1e-5
