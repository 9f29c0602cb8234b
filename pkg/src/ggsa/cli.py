"""Command-line interface.

Subcommands: gen-data, train, eval, bench, gradcheck. Output mixes human text
with machine-readable records: lines of space-separated key=value pairs.
Usage errors exit 2 (argparse), runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import bench as bench_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, config_from_kv_text
from .data import SPLITS, SyntheticSpec, generate_dataset, read_dataset, write_dataset
from .errors import GgsaError
from .gradcheck import full_model_gradcheck
from .train import TrainSettings, evaluate, train

GRADCHECK_TOLERANCE = 1e-4


def _kv(**pairs) -> str:
    parts = []
    for key, value in pairs.items():
        if isinstance(value, float):
            parts.append(f"{key}={value!r}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def _load_config(path: str | None) -> ModelConfig:
    if path is None:
        return ModelConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_kv_text(fh.read())


def _int_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ggsa",
                                     description="Gated group self-attention encoders "
                                                 "for answer selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--polysemy", action="store_true",
                   help="paired-topic task that requires question-conditioned reading")
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--topics", type=int, default=8)
    p.add_argument("--ambiguous-tokens", type=int, default=120)
    p.add_argument("--candidates", type=int, default=5)
    p.add_argument("--train-questions", type=int, default=2000)
    p.add_argument("--dev-questions", type=int, default=200)
    p.add_argument("--test-questions", type=int, default=200)
    p.add_argument("--question-len", type=_int_pair, default=(4, 8), metavar="LO,HI")
    p.add_argument("--answer-len", type=_int_pair, default=(6, 12), metavar="LO,HI")
    p.add_argument("--topic-token-rate", type=float, default=0.5)
    p.add_argument("--min-topic-tokens", type=int, default=2)

    p = sub.add_parser("train", help="train an encoder")
    p.add_argument("--data", required=True, help="dataset directory (train.txt, dev.txt)")
    p.add_argument("--out", required=True, help="output directory for checkpoint and history")
    p.add_argument("--config", help="model config file (key=value lines)")
    p.add_argument("--seed", type=int, help="master seed: overrides config seed, drives training streams")
    p.add_argument("--variant", choices=("ggsa", "iggsa", "global"), default="ggsa")
    p.add_argument("--composition", choices=("maxpool", "attention"), default="maxpool")
    p.add_argument("--loss", choices=("pairwise", "pointwise"), default="pairwise")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--target-dev-p1", type=float, help="stop early at this dev P@1")
    p.add_argument("--vocab-size", type=int, default=1000)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--config", help="expected model config; conflicts are an error")
    p.add_argument("--variant", choices=("ggsa", "iggsa", "global"), default="ggsa")
    p.add_argument("--composition", choices=("maxpool", "attention"), default="maxpool")
    p.add_argument("--scoring", choices=("cosine", "pointwise-prob"), default="cosine")
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("bench", help="attention complexity benchmark")
    p.add_argument("--lengths", type=_int_list, default=[256, 1024, 2048], metavar="L1,L2,...")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--group-size", type=int, default=10)
    p.add_argument("--window", type=int, help="local half-width; defaults to group size")
    p.add_argument("--variants", default="global,group,local")
    p.add_argument("--reps", type=int, default=9)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS thread cap for stable medians; 0 leaves it uncontrolled")
    p.add_argument("--out", help="write the CSV here as well as stdout")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    return parser


def _cmd_gen_data(args) -> int:
    spec = SyntheticSpec(vocab_size=args.vocab_size, topic_count=args.topics,
                         ambiguous_token_count=args.ambiguous_tokens,
                         question_len=args.question_len, answer_len=args.answer_len,
                         candidate_count=args.candidates,
                         train_questions=args.train_questions,
                         dev_questions=args.dev_questions,
                         test_questions=args.test_questions,
                         topic_token_rate=args.topic_token_rate,
                         min_topic_tokens=args.min_topic_tokens,
                         polysemy=args.polysemy, seed=args.seed)
    splits = generate_dataset(spec)
    os.makedirs(args.out, exist_ok=True)
    for name in SPLITS:
        write_dataset(splits[name], os.path.join(args.out, f"{name}.txt"))
    print(f"wrote {', '.join(SPLITS)} to {args.out}")
    print(_kv(task="polysemy" if spec.polysemy else "default",
              vocab_size=spec.vocab_size, seed=spec.seed,
              train=len(splits["train"]), dev=len(splits["dev"]),
              test=len(splits["test"])))
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    settings = TrainSettings(variant=args.variant, composition=args.composition,
                             loss=args.loss, learning_rate=args.lr,
                             epochs=args.epochs, batch_size=args.batch_size,
                             margin=args.margin, seed=cfg.seed,
                             target_dev_p1=args.target_dev_p1)
    train_set = read_dataset(os.path.join(args.data, "train.txt"))
    dev_path = os.path.join(args.data, "dev.txt")
    dev_set = read_dataset(dev_path) if os.path.exists(dev_path) else None
    result = train(cfg, train_set, settings, dev_set, vocab_size=args.vocab_size)
    os.makedirs(args.out, exist_ok=True)
    history_path = os.path.join(args.out, "history.txt")
    with open(history_path, "w", encoding="utf-8") as fh:
        for record in result.history:
            line = _kv(**record)
            print(line)
            fh.write(line + "\n")
    if result.diverged:
        print(f"training diverged: {result.diagnostic}; "
              "parameters rolled back to the last finished epoch", file=sys.stderr)
    ckpt = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(ckpt, cfg, result.params)
    print(f"saved checkpoint to {ckpt}")
    print(_kv(checkpoint=ckpt, epochs_run=len(result.history),
              diverged=int(result.diverged)))
    return 1 if result.diverged else 0


def _cmd_eval(args) -> int:
    expected = _load_config(args.config) if args.config else None
    cfg, params = load_checkpoint(args.checkpoint, expected)
    examples = read_dataset(os.path.join(args.data, f"{args.split}.txt"))
    scoring = "pointwise" if args.scoring == "pointwise-prob" else args.scoring
    p1, mrr = evaluate(params, cfg, examples, args.variant, args.composition,
                       scoring, args.batch_size)
    print(f"{args.split}: P@1 {p1:.4f}, MRR {mrr:.4f} over {len(examples)} questions")
    print(_kv(split=args.split, questions=len(examples), p_at_1=p1, mrr=mrr))
    return 0


def _cmd_bench(args) -> int:
    variants = tuple(v for v in args.variants.split(",") if v)
    threads = None if args.threads == 0 else args.threads
    reports = bench_mod.run_benchmark(args.lengths, dim=args.dim, heads=args.heads,
                                      group_size=args.group_size, window=args.window,
                                      variants=variants, reps=args.reps,
                                      warmup=args.warmup, seed=args.seed,
                                      threads=threads)
    print(_kv(machine=bench_mod.machine_note(threads).replace(" ", ";")))
    csv_text = bench_mod.reports_to_csv(reports)
    sys.stdout.write(csv_text)
    if args.out:
        out = args.out
        if os.path.isdir(out):
            out = os.path.join(out, "bench.csv")
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
        print(f"wrote {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    errors = full_model_gradcheck(seed=args.seed, step=args.step)
    worst = max(errors.values())
    for name in sorted(errors):
        print(_kv(param=name, rel_err=errors[name]))
    ok = worst <= GRADCHECK_TOLERANCE
    print(_kv(worst_rel_err=worst, tolerance=GRADCHECK_TOLERANCE,
              status="ok" if ok else "FAIL"))
    return 0 if ok else 1


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GgsaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
