"""Command-line entry point for reproducible experiments.

Subcommands: gen, train, eval, analyze, mismatch, weights, sweep.
Exit codes: 0 success, 1 validation error (bad flags, missing or malformed
files), 2 runtime failure (training divergence, unexpected errors). A
--config JSON file may supply any flag; explicit flags take precedence.
Outputs are overwritten, never appended, and a fixed --seed makes every
artifact byte-identical across runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from .corpus import GeneratorConfig, generate_corpus, load_corpus, save_corpus
from .fpo import FpoConfig, TrainingDivergenceError
from .metrics import (
    positional_error_profile,
    spatial_logical_mismatch,
    write_mismatch_csv,
    write_profile_csv,
)
from .model import ModelConfig
from .training import (
    MODES,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    sensitivity_harness,
    train,
    write_sweep_csv,
    write_training_log_csv,
    write_weight_dump_csv,
)


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="focalorder", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", type=str, default=None, help="JSON file of flag defaults")

    g = sub.add_parser("gen", help="generate a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--docs", type=int, default=100)
    g.add_argument("--ambiguity", type=float, default=0.0)
    g.add_argument("--elements-min", type=int, default=20)
    g.add_argument("--elements-max", type=int, default=40)
    g.add_argument("--columns-min", type=int, default=1)
    g.add_argument("--columns-max", type=int, default=3)
    g.add_argument("--page-width", type=float, default=612.0)
    g.add_argument("--page-height", type=float, default=792.0)
    common(g)

    t = sub.add_parser("train", help="train a model on a corpus")
    t.add_argument("--data", required=True)
    t.add_argument("--mode", choices=MODES, default="full_fpo")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--gamma", type=float, default=0.99)
    t.add_argument("--delta", type=float, default=0.8)
    t.add_argument("--beta", type=float, default=0.05)
    t.add_argument("--rho", type=float, default=0.20)
    t.add_argument("--alpha", type=float, default=0.10)
    t.add_argument("--lambda-rank", type=float, default=1.0)
    t.add_argument("--log", default=None, help="write the per-step training log CSV here")
    t.add_argument("--weights-log", default=None, help="write per-step weight dumps here")
    common(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--bins", type=int, default=10)
    e.add_argument("--emit-pred", default=None, help="write per-document predictions here")
    common(e)

    a = sub.add_parser("analyze", help="disparity profile from a prediction file")
    a.add_argument("--pred", required=True)
    a.add_argument("--gt", required=True)
    a.add_argument("--bins", type=int, default=10)
    a.add_argument("--out", required=True)
    common(a)

    m = sub.add_parser("mismatch", help="spatial-logical mismatch report")
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    common(m)

    w = sub.add_parser("weights", help="dump a checkpoint's difficulty weights")
    w.add_argument("--ckpt", required=True)
    w.add_argument("--out", required=True)
    common(w)

    s = sub.add_parser("sweep", help="sensitivity sweep over one hyperparameter")
    s.add_argument("--param", required=True, choices=("K", "beta", "rho", "alpha", "lambda_rank"))
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=MODES, default="full_fpo")
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--hidden", type=int, default=64)
    s.add_argument("--seeds", default=None, help="comma-separated seeds (default: --seed)")
    common(s)

    return p


def _apply_config_file(args: argparse.Namespace, argv: Sequence[str]) -> argparse.Namespace:
    """Values from --config fill in flags the user did not pass explicitly."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as f:
            defaults = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {args.config} is not valid JSON: {exc}")
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValidationError(f"config file {args.config}: unknown option {key!r}")
        if attr not in explicit:
            setattr(args, attr, value)
    return args


def _print_resolved(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    print("resolved config:", json.dumps(resolved, sort_keys=True, default=str))


def _seed(args, default=0) -> int:
    return args.seed if args.seed is not None else default


def _load_corpus_checked(path: str):
    try:
        return load_corpus(path)
    except FileNotFoundError:
        raise ValidationError(f"corpus file not found: {path}")
    except ValueError as exc:
        raise ValidationError(str(exc))


def _load_checkpoint_checked(path: str):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise ValidationError(f"checkpoint file not found: {path}")
    except ValueError as exc:
        raise ValidationError(str(exc))


def _train_config(args, mode: str, seed: int) -> TrainConfig:
    fpo = FpoConfig(
        K=args.k if hasattr(args, "k") else 10,
        gamma=getattr(args, "gamma", 0.99),
        delta=getattr(args, "delta", 0.8),
        beta=getattr(args, "beta", 0.05),
        rho=getattr(args, "rho", 0.20),
        alpha=getattr(args, "alpha", 0.10),
        lambda_rank=getattr(args, "lambda_rank", 1.0),
    )
    return TrainConfig(
        mode=mode,
        epochs=args.epochs,
        batch_size=args.batch,
        base_lr=args.lr,
        seed=seed,
        fpo=fpo,
        model=ModelConfig(hidden_dim=args.hidden),
    )


def _cmd_gen(args) -> int:
    cfg = GeneratorConfig(
        n_docs=args.docs,
        elements_min=args.elements_min,
        elements_max=args.elements_max,
        columns_min=args.columns_min,
        columns_max=args.columns_max,
        ambiguity=args.ambiguity,
        page_width=args.page_width,
        page_height=args.page_height,
        seed=_seed(args),
    )
    docs = generate_corpus(cfg)
    save_corpus(docs, args.out)
    print(f"wrote {len(docs)} documents to {args.out}")
    return 0


def _cmd_train(args) -> int:
    corpus = _load_corpus_checked(args.data)
    if not corpus:
        raise ValidationError(f"corpus {args.data} is empty")
    cfg = _train_config(args, args.mode, _seed(args))
    result = train(cfg, corpus)
    save_checkpoint(result.checkpoint, args.out)
    if args.log:
        write_training_log_csv(result.log, args.log)
    if args.weights_log:
        write_weight_dump_csv(result.weight_history, args.weights_log)
    final = result.log[-1]
    print(
        f"trained mode={args.mode} for {final.step + 1} steps; "
        f"final total={final.total:.6f} -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    ckpt = _load_checkpoint_checked(args.ckpt)
    corpus = _load_corpus_checked(args.data)
    try:
        result = evaluate(ckpt, corpus, K=args.bins)
    except ValueError as exc:
        raise ValidationError(str(exc))
    with open(args.report, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["doc_id", "n_elements", "edit", "reward"])
        for row in result.per_doc:
            w.writerow([row["doc_id"], row["n_elements"], repr(row["edit"]), repr(row["reward"])])
    if args.emit_pred:
        with open(args.emit_pred, "w", encoding="utf-8") as f:
            for doc_id, seq in result.predictions:
                f.write(json.dumps({"doc_id": doc_id, "pred_order": list(seq)}))
                f.write("\n")
    print(f"mean_edit={result.mean_edit!r} over {len(result.per_doc)} documents -> {args.report}")
    return 0


def _cmd_analyze(args) -> int:
    corpus = _load_corpus_checked(args.gt)
    by_id = {doc.doc_id: doc for doc in corpus}
    try:
        with open(args.pred, encoding="utf-8") as f:
            lines = [json.loads(l) for l in f if l.strip()]
    except FileNotFoundError:
        raise ValidationError(f"prediction file not found: {args.pred}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"prediction file {args.pred} is malformed: {exc}")
    pairs = []
    predicted_ids = set()
    for rec in lines:
        doc_id = rec["doc_id"]
        if doc_id not in by_id:
            raise ValidationError(f"prediction for unknown doc_id {doc_id!r}")
        predicted_ids.add(doc_id)
        doc = by_id[doc_id]
        pred = [int(x) for x in rec["pred_order"]]
        if sorted(pred) != list(range(len(doc))):
            print(
                f"warning: prediction for {doc_id!r} is not a permutation; scoring as-is",
                file=sys.stderr,
            )
        pairs.append((pred, list(doc.gt_order)))
    # documents without predictions are scored as fully missing
    for doc_id, doc in by_id.items():
        if doc_id not in predicted_ids:
            pairs.append(([], list(doc.gt_order)))
    profile = positional_error_profile(pairs, args.bins)
    write_profile_csv(profile, args.out)
    print(f"analyzed {len(pairs)} documents -> {args.out}")
    return 0


def _cmd_mismatch(args) -> int:
    corpus = _load_corpus_checked(args.data)
    results = [(doc.doc_id, spatial_logical_mismatch(doc)) for doc in corpus]
    write_mismatch_csv(results, args.out)
    total = sum(r.count for _, r in results)
    print(f"{total} mismatches across {len(corpus)} documents -> {args.out}")
    return 0


def _cmd_weights(args) -> int:
    ckpt = _load_checkpoint_checked(args.ckpt)
    from .fpo import applied_weights
    from .training import apply_mode

    cfg = ckpt.train_config
    weights = applied_weights(apply_mode(cfg.mode, cfg.fpo), ckpt.state)
    write_weight_dump_csv([(ckpt.step, ckpt.state.ema, weights)], args.out)
    print(f"wrote {len(weights)} bin weights at step {ckpt.step} -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    corpus = _load_corpus_checked(args.data)
    if not corpus:
        raise ValidationError(f"corpus {args.data} is empty")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse --values {args.values!r}")
    seed = _seed(args)
    seeds = None
    if args.seeds:
        try:
            seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"cannot parse --seeds {args.seeds!r}")
    cfg = _train_config(args, args.mode, seed)
    rows = sensitivity_harness(cfg, corpus, args.param, values, seeds=seeds)
    write_sweep_csv(rows, args.out)
    print(f"swept {args.param} over {len(values)} values -> {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "mismatch": _cmd_mismatch,
    "weights": _cmd_weights,
    "sweep": _cmd_sweep,
}


def run(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, argv)
        _print_resolved(args)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergenceError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
