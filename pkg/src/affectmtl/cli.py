"""Command-line entry points for the full pipeline.

Subcommands: gen-data, infer-relatedness, train, eval, zero-shot, gradcheck.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import labels as lab
from . import relatedness as rel
from .errors import AffectMTLError, ConfigError
from .model import MultiHeadModel
from .synthdata import GeneratorSpec, generate, generate_full
from .training import ExperimentConfig, run_eval, run_gradcheck, run_train, _versions
from .zeroshot import compound_scores, load_compound_profiles, predict_compound


def _write_manifest(out_dir: Path, command: str, args: dict, extra: dict | None = None):
    manifest = {"command": command, "args": args, "versions": _versions()}
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = GeneratorSpec(
        relatedness=rel.domain_table(),
        feature_dim=args.feature_dim,
        noise_scale=args.noise,
        seed=args.seed,
        frames_per_video=args.frames_per_video,
    )
    fractions = tuple(float(x) for x in args.partition.split(","))
    va_set, au_set, expr_set = generate(spec, args.n, fractions)
    lab.write_samples_csv(out / "va.csv", va_set)
    lab.write_samples_csv(out / "au.csv", au_set)
    lab.write_samples_csv(out / "expr.csv", expr_set)
    if args.full:
        lab.write_samples_csv(out / "full.csv", generate_full(spec, args.n))
    _write_manifest(
        out, "gen-data",
        {"n": args.n, "feature_dim": args.feature_dim, "noise": args.noise,
         "seed": args.seed, "partition": args.partition,
         "frames_per_video": args.frames_per_video},
        {"set_sizes": {"va": len(va_set), "au": len(au_set), "expr": len(expr_set)}},
    )
    print(f"wrote {len(va_set)}/{len(au_set)}/{len(expr_set)} va/au/expr samples to {out}")
    return 0


def _cmd_infer_relatedness(args) -> int:
    samples = lab.read_samples_csv(args.corpus)
    pairs = [(s.expr, s.au) for s in samples if s.expr is not None and s.au is not None]
    if not pairs:
        raise ConfigError(f"corpus {args.corpus} has no co-annotated samples")
    corpus = rel.CoAnnotatedCorpus(rel.EMOTIONS, rel.AU_LABELS, pairs)
    table = rel.infer_empirical(corpus, args.threshold)
    table.save(args.out)
    print(f"inferred empirical table over {len(table.class_names)} classes -> {args.out}")
    return 0


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    return config


def _cmd_train(args) -> int:
    manifest = run_train(_load_config(args))
    final = manifest.get("final_metrics", {})
    line = ", ".join(
        f"{task} {sorted(m)[0]}={m[sorted(m)[0]]:.4f}" if isinstance(m, dict) else task
        for task, m in final.items()
    )
    print(f"run complete: {manifest['steps']} steps -> {args.out or 'config out_dir'}")
    if line:
        print(f"held-out: {line}")
    return 0


def _cmd_eval(args) -> int:
    results = run_eval(args.checkpoint, args.data, args.out, args.median_window)
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def _cmd_zero_shot(args) -> int:
    model = MultiHeadModel.load(args.checkpoint)
    classes = load_compound_profiles(args.profiles)
    samples = lab.read_samples_csv(args.data)
    bundles = model.predict(np.stack([s.features for s in samples]))
    truth = _read_compound_column(args.data)
    rows = []
    correct = total_scored = 0
    for s, b in zip(samples, bundles):
        scores = compound_scores(b, classes)
        pred = predict_compound(scores)
        for ci, (c, sc) in enumerate(zip(classes, scores)):
            rows.append([s.id, c.name, repr(sc.i_au), repr(sc.f_emo),
                         repr(sc.d_va), repr(sc.total), int(ci == pred)])
        if truth is not None and truth.get(s.id):
            total_scored += 1
            correct += int(classes[pred].name == truth[s.id])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compound_scores.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "class", "i_au", "f_emo", "d_va", "total", "predicted"])
        w.writerows(rows)
    extra = {}
    if total_scored:
        extra["compound_accuracy"] = correct / total_scored
        (out / "metrics.json").write_text(json.dumps(extra, indent=2, sort_keys=True))
    _write_manifest(out, "zero-shot",
                    {"checkpoint": args.checkpoint, "profiles": args.profiles,
                     "data": args.data}, extra)
    print(f"scored {len(samples)} samples over {len(classes)} compound classes -> {out}")
    return 0


def _read_compound_column(path) -> dict | None:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "compound" not in reader.fieldnames:
            return None
        return {row["id"]: row["compound"] for row in reader}


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(seed=args.seed, tolerance=args.tolerance)
    for mode, err in report.items():
        print(f"{mode}: max relative error {err:.3e}")
    print("gradient check passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affectmtl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic heterogeneous dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=6000)
    g.add_argument("--feature-dim", type=int, default=32)
    g.add_argument("--noise", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--partition", default="0.3333,0.3333,0.3334")
    g.add_argument("--frames-per-video", type=int, default=None)
    g.add_argument("--full", action="store_true",
                   help="also write the unstripped co-annotated corpus")
    g.set_defaults(func=_cmd_gen_data)

    r = sub.add_parser("infer-relatedness", help="infer an empirical relatedness table")
    r.add_argument("--corpus", required=True)
    r.add_argument("--threshold", type=float, default=0.1)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_infer_relatedness)

    t = sub.add_parser("train", help="train per an experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--median-window", type=int, default=5)
    e.set_defaults(func=_cmd_eval)

    z = sub.add_parser("zero-shot", help="compound-expression scoring")
    z.add_argument("--checkpoint", required=True)
    z.add_argument("--profiles", required=True)
    z.add_argument("--data", required=True)
    z.add_argument("--out", required=True)
    z.set_defaults(func=_cmd_zero_shot)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tolerance", type=float, default=1e-5)
    c.set_defaults(func=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AffectMTLError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
