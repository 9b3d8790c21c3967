"""Experiment configuration, the joint training loop, and evaluation runs.

The coupling mode is pure configuration: co-annotation rewrites labels before
training, soft co-annotation precomputes soft emotion targets for AU-labeled
samples, and distribution matching adds a prediction-alignment term each step.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import labels as lab
from . import relatedness as rel
from .errors import ConfigError, DataError, NumericalError
from .losses import (
    LossWeights,
    SoftTargets,
    ccc_loss_grad,
    dm_loss_grad,
    masked_bce_grad,
    sca_loss_grad,
    softmax_ce_grad,
    total_mt_loss,
)
from .metrics import ConfusionMatrix, au_metrics, classification_metrics, va_metrics
from .model import MultiHeadModel, SGDMomentum, gradient_check, median_filter
from .scheduler import next_joint_batch, plan_epoch

COUPLING_MODES = ("none", "co_annotation", "soft_co_annotation", "distr_matching", "soft_plus_dm")
SET_NAMES = ("va", "au", "expr")
TASK_NAMES = ("expr", "au", "va")
COUPLING_NAMES = ("sca", "dm")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one training run."""

    data: dict = field(default_factory=dict)  # set name -> CSV path
    relatedness: dict = field(default_factory=lambda: {"source": "domain"})
    coupling: str = "none"
    reweight_observational: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)
    hidden: tuple = (64, 64)
    max_batch: int = 200
    epochs: int = 10
    lr: float = 1e-4
    momentum: float = 0.9
    holdout_fraction: float = 0.2
    median_filter_window: int = 5
    seed: int = 0
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.coupling not in COUPLING_MODES:
            raise ConfigError(f"invalid coupling mode {self.coupling!r}")
        if not self.data:
            raise ConfigError("no datasets configured")
        for name in self.data:
            if name not in SET_NAMES:
                raise ConfigError(f"unknown dataset set {name!r}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)")
        if self.epochs < 1 or self.max_batch < 1:
            raise ConfigError("epochs and max_batch must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        lw = d.get("loss_weights", {})
        try:
            return cls(
                data=dict(d.get("data", {})),
                relatedness=dict(d.get("relatedness", {"source": "domain"})),
                coupling=d.get("coupling", "none"),
                reweight_observational=bool(d.get("reweight_observational", True)),
                loss_weights=LossWeights(
                    lambda_per_task=dict(lw.get("tasks", {})),
                    coupling_weights=dict(lw.get("couplings", {})),
                    epsilon=float(lw.get("epsilon", 1e-7)),
                ),
                hidden=tuple(d.get("model", {}).get("hidden", (64, 64))),
                max_batch=int(d.get("max_batch", 200)),
                epochs=int(d.get("epochs", 10)),
                lr=float(d.get("optimizer", {}).get("lr", 1e-4)),
                momentum=float(d.get("optimizer", {}).get("momentum", 0.9)),
                holdout_fraction=float(d.get("holdout_fraction", 0.2)),
                median_filter_window=int(d.get("median_filter_window", 5)),
                seed=int(d.get("seed", 0)),
                out_dir=str(d.get("out_dir", "runs/run")),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed config: {e}") from e

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "data": dict(self.data),
            "relatedness": dict(self.relatedness),
            "coupling": self.coupling,
            "reweight_observational": self.reweight_observational,
            "loss_weights": {
                "tasks": dict(self.loss_weights.lambda_per_task),
                "couplings": dict(self.loss_weights.coupling_weights),
                "epsilon": self.loss_weights.epsilon,
            },
            "model": {"hidden": list(self.hidden)},
            "max_batch": self.max_batch,
            "epochs": self.epochs,
            "optimizer": {"lr": self.lr, "momentum": self.momentum},
            "holdout_fraction": self.holdout_fraction,
            "median_filter_window": self.median_filter_window,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_relatedness(config: ExperimentConfig) -> rel.RelatednessTable:
    src = config.relatedness.get("source", "domain")
    if src == "domain":
        return rel.domain_table()
    if src == "file":
        path = Path(config.relatedness["path"])
        d = json.loads(path.read_text()) if path.exists() else None
        if d is None:
            raise DataError(f"relatedness file not found: {path}")
        if "entries" in d:
            return rel.RelatednessTable.from_dict(d)
        return rel.load_domain_table(path)
    if src == "empirical":
        corpus_path = config.relatedness.get("corpus")
        if corpus_path is None:
            raise ConfigError("empirical relatedness needs a 'corpus' path")
        samples = lab.read_samples_csv(corpus_path)
        pairs = [(s.expr, s.au) for s in samples if s.expr is not None and s.au is not None]
        if not pairs:
            raise DataError(f"corpus {corpus_path} has no co-annotated samples")
        corpus = rel.CoAnnotatedCorpus(rel.EMOTIONS, rel.AU_LABELS, pairs)
        return rel.infer_empirical(corpus, float(config.relatedness.get("threshold", 0.1)))
    raise ConfigError(f"unknown relatedness source {src!r}")


# -- joint batch loss ----------------------------------------------------


def joint_loss_and_grads(model, batch, weights, mode, table, reweight, sca_targets):
    """Compute all loss terms on one tagged joint batch.

    ``batch`` is a list of (set name, sample). Returns (LossReport,
    parameter-gradient dict); the gradients correspond to the weighted total.
    """
    report, out_grads, cache = _joint_loss(model, batch, weights, mode, table, reweight, sca_targets)
    return report, model.backward(cache, out_grads)


def joint_loss_value(model, batch, weights, mode, table, reweight, sca_targets) -> float:
    return _joint_loss(model, batch, weights, mode, table, reweight, sca_targets)[0].total


def _joint_loss(model, batch, weights, mode, table, reweight, sca_targets):
    X = np.stack([s.features for _, s in batch])
    out, cache = model.forward(X)
    eps = weights.epsilon
    n = len(batch)
    g = {h: np.zeros_like(out[h]) for h in out}
    task_losses: dict = {}
    coupling_losses: dict = {}

    expr_rows = [i for i, (_, s) in enumerate(batch) if s.expr is not None]
    if expr_rows and "expr" in out:
        acc = 0.0
        for i in expr_rows:
            v, grad = softmax_ce_grad(out["expr"][i], batch[i][1].expr, eps)
            acc += v
            g["expr"][i] += weights.task("expr") * grad / len(expr_rows)
        task_losses["expr"] = acc / len(expr_rows)

    au_rows = [i for i, (_, s) in enumerate(batch) if s.au is not None]
    if au_rows and "au" in out:
        acc = 0.0
        for i in au_rows:
            s = batch[i][1]
            v, grad = masked_bce_grad(out["au"][i], s.au, s.au_weights, eps)
            acc += v
            g["au"][i] += weights.task("au") * grad / len(au_rows)
        task_losses["au"] = acc / len(au_rows)

    va_rows = [i for i, (_, s) in enumerate(batch) if s.va is not None]
    if len(va_rows) >= 2 and "va" in out:
        y = np.array([batch[i][1].va for i in va_rows])
        v, grad = ccc_loss_grad(y, out["va"][va_rows])
        task_losses["va"] = v
        g["va"][va_rows] += weights.task("va") * grad

    if mode in ("soft_co_annotation", "soft_plus_dm") and "expr" in out:
        sca_rows = [
            i for i, (name, s) in enumerate(batch)
            if name == "au" and s.id in sca_targets
        ]
        if sca_rows:
            acc = 0.0
            for i in sca_rows:
                v, grad = sca_loss_grad(out["expr"][i], sca_targets[batch[i][1].id], eps)
                acc += v
                g["expr"][i] += weights.coupling("sca") * grad / len(sca_rows)
            coupling_losses["sca"] = acc / len(sca_rows)

    if mode in ("distr_matching", "soft_plus_dm") and "expr" in out and "au" in out:
        r = table.weight_matrix(reweight)
        acc = 0.0
        for i in range(n):
            q = SoftTargets(q_binary=out["expr"][i] @ r)
            v, grad_p, grad_q = dm_loss_grad(out["au"][i], q, eps)
            acc += v
            g["au"][i] += weights.coupling("dm") * grad_p / n
            g["expr"][i] += weights.coupling("dm") * (r @ grad_q) / n
        coupling_losses["dm"] = acc / n

    report = total_mt_loss(task_losses, coupling_losses, weights)
    return report, g, cache


# -- training ------------------------------------------------------------


def _holdout_split(samples, fraction, seed):
    if fraction == 0.0:
        return list(samples), []
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(samples))
    n_eval = int(round(len(samples) * fraction))
    eval_idx = set(int(i) for i in idx[:n_eval])
    train = [s for i, s in enumerate(samples) if i not in eval_idx]
    heldout = [s for i, s in enumerate(samples) if i in eval_idx]
    return train, heldout


def _validate_va_plan(plan, va_set_index):
    for it in range(plan.iteration_count):
        k = len(plan.slice_indices(va_set_index, it))
        if k == 1:
            raise ConfigError(
                "epoch plan produces a VA batch of size 1; CCC needs at least 2 "
                "(adjust max_batch or the VA set size)"
            )


def run_train(config: ExperimentConfig) -> dict:
    """Train per the config; write checkpoint, loss CSV, and manifest. Returns the manifest."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = load_relatedness(config)

    sets: dict[str, list] = {}
    heldout: dict[str, list] = {}
    for si, name in enumerate(SET_NAMES):
        if name not in config.data:
            continue
        samples = lab.read_samples_csv(config.data[name])
        train, ho = _holdout_split(samples, config.holdout_fraction, config.seed + 7919 * si)
        sets[name] = train
        heldout[name] = ho
    if not sets:
        raise ConfigError("no datasets configured")
    dims = {s.features.size for group in sets.values() for s in group}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions across sets: {sorted(dims)}")
    input_dim = dims.pop()

    if config.coupling == "co_annotation":
        if "expr" in sets:
            sets["expr"] = [lab.co_annotate_emotion_to_aus(s, table) for s in sets["expr"]]
        if "au" in sets:
            sets["au"] = [lab.co_annotate_aus_to_emotion(s, table) for s in sets["au"]]
    sca_targets = {}
    if config.coupling in ("soft_co_annotation", "soft_plus_dm") and "au" in sets:
        sca_targets = {
            s.id: lab.soft_co_annotate(s, table, config.reweight_observational)
            for s in sets["au"]
        }

    model = MultiHeadModel(input_dim, hidden=config.hidden, seed=config.seed)
    opt = SGDMomentum(model, lr=config.lr, momentum=config.momentum)

    set_names = [n for n in SET_NAMES if n in sets]
    set_lists = [sets[n] for n in set_names]
    sizes = [len(s) for s in set_lists]
    plan_summaries = []
    loss_csv = out_dir / "losses.csv"
    step = 0
    with open(loss_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "epoch", "iteration"]
                   + list(TASK_NAMES) + list(COUPLING_NAMES) + ["total"])
        for epoch in range(config.epochs):
            plan = plan_epoch(sizes, config.max_batch, seed=config.seed + 1000003 * epoch)
            if "va" in set_names:
                _validate_va_plan(plan, set_names.index("va"))
            if epoch == 0:
                plan_summaries.append(plan.summary())
            for it in range(plan.iteration_count):
                tagged = [
                    (set_names[si], s)
                    for si, s in next_joint_batch(plan, it, set_lists)
                ]
                report, grads = joint_loss_and_grads(
                    model, tagged, config.loss_weights, config.coupling,
                    table, config.reweight_observational, sca_targets,
                )
                opt.step(model, grads)
                w.writerow([step, epoch, it]
                           + report.csv_row(TASK_NAMES, COUPLING_NAMES))
                step += 1

    ckpt = out_dir / "model.bin"
    model.save(ckpt)
    table.save(out_dir / "relatedness.json")

    eval_samples = [s for group in heldout.values() for s in group]
    final_metrics = (
        evaluate_model(model, eval_samples, config.median_filter_window)
        if eval_samples
        else {}
    )
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "epoch_plans": plan_summaries,
        "steps": step,
        "final_metrics": final_metrics,
        "versions": _versions(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _versions() -> dict:
    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "affectmtl": __version__,
    }


# -- evaluation ----------------------------------------------------------


def evaluate_model(model, samples, median_window: int = 5) -> dict:
    """All applicable metrics on a sample list; VA gets a median-filtered variant
    when sequence keys are present."""
    if not samples:
        raise DataError("nothing to evaluate")
    X = np.stack([s.features for s in samples])
    out, _ = model.forward(X)
    results: dict = {}

    expr_rows = [i for i, s in enumerate(samples) if s.expr is not None]
    if expr_rows and "expr" in out:
        truth = [samples[i].expr for i in expr_rows]
        pred = [int(np.argmax(out["expr"][i])) for i in expr_rows]
        cm = ConfusionMatrix.from_labels(truth, pred, out["expr"].shape[1])
        results["expr"] = classification_metrics(cm)
        results["expr"]["confusion"] = cm.counts.tolist()

    au_rows = [i for i, s in enumerate(samples) if s.au is not None]
    if au_rows and "au" in out:
        truth = np.stack([samples[i].au for i in au_rows])
        results["au"] = au_metrics(out["au"][au_rows], truth)

    va_rows = [i for i, s in enumerate(samples) if s.va is not None]
    if len(va_rows) >= 2 and "va" in out:
        truth = np.array([samples[i].va for i in va_rows])
        pred = out["va"][va_rows]
        results["va"] = va_metrics(truth, pred)
        keyed = [i for i in va_rows if samples[i].sequence_key is not None]
        if len(keyed) == len(va_rows):
            filtered = _median_filter_by_video(
                [samples[i] for i in va_rows], pred, median_window
            )
            results["va_filtered"] = va_metrics(truth, filtered)
    return results


def _median_filter_by_video(samples, predictions, window):
    """Apply per-video median filtering, preserving the input row order."""
    by_video: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        by_video.setdefault(s.sequence_key[0], []).append(i)
    out = np.array(predictions, dtype=float, copy=True)
    for rows in by_video.values():
        rows = sorted(rows, key=lambda i: samples[i].sequence_key[1])
        out[rows] = median_filter(predictions[rows], window)
    return out


def run_eval(checkpoint, dataset, out_path=None, median_window: int = 5) -> dict:
    """Evaluate a checkpoint on a dataset CSV; optionally write the JSON report."""
    model = MultiHeadModel.load(checkpoint)
    samples = lab.read_samples_csv(dataset)
    results = evaluate_model(model, samples, median_window)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(results, indent=2, sort_keys=True))
    return results


# -- gradient checking ---------------------------------------------------


def run_gradcheck(
    input_dim=16, hidden=(32, 32), batch_size=16, seed=0, modes=COUPLING_MODES,
    tolerance=1e-5,
):
    """Finite-difference check of the full training gradient for every coupling mode.

    Builds a small synthetic joint batch (all three label types), computes the
    analytic parameter gradients, and compares against central differences.
    Raises NumericalError if any mode exceeds the tolerance.
    """
    from .synthdata import GeneratorSpec, generate

    table = rel.domain_table()
    spec = GeneratorSpec(relatedness=table, feature_dim=input_dim, seed=seed)
    per = max(2, batch_size // 3)
    va_set, au_set, expr_set = generate(spec, 3 * per)
    tagged = (
        [("va", s) for s in va_set[:per]]
        + [("au", s) for s in au_set[:per]]
        + [("expr", s) for s in expr_set[:per]]
    )
    weights = LossWeights()
    report = {}
    for mode in modes:
        batch = [(name, s) for name, s in tagged]
        if mode == "co_annotation":
            batch = [
                (name, lab.co_annotate_emotion_to_aus(s, table) if name == "expr" else s)
                for name, s in batch
            ]
            batch = [
                (name, lab.co_annotate_aus_to_emotion(s, table) if name == "au" else s)
                for name, s in batch
            ]
        sca = {}
        if mode in ("soft_co_annotation", "soft_plus_dm"):
            sca = {
                s.id: lab.soft_co_annotate(s, table, True)
                for name, s in batch
                if name == "au"
            }
        model = MultiHeadModel(input_dim, hidden=hidden, seed=seed)
        err = gradient_check(
            model,
            value_fn=lambda m: joint_loss_value(m, batch, weights, mode, table, True, sca),
            grad_fn=lambda m: joint_loss_and_grads(m, batch, weights, mode, table, True, sca)[1],
            rng=np.random.default_rng(seed),
        )
        report[mode] = float(err)
    worst = max(report.values())
    if worst > tolerance:
        bad = {m: e for m, e in report.items() if e > tolerance}
        raise NumericalError(f"gradient check failed: {bad}")
    return report
