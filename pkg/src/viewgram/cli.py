"""Command-line entry point: synth, train, embed, evaluate, gradcheck.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 data
error, 4 numeric error.  Logs go to stderr; machine-readable artifacts go
to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as vdata
from . import metrics as vmetrics
from .errors import ConfigurationError, DataError, NumericError
from .model import BranchConfig, extract_descriptor, init_parameters, multi_scale_forward
from .rng import Rng
from .train import TrainConfig, load_checkpoint, save_checkpoint, train


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _log_config(name: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    _log(f"[viewgram {name}] config: {json.dumps(resolved, default=str)}")


def _bool_flag(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {value!r}")


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n-gram sizes {text!r}")
    if not sizes:
        raise argparse.ArgumentTypeError("need at least one n-gram size")
    return sizes


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    _log_config("synth", args)
    pairs = args.confusable_pairs
    if pairs < 0:
        pairs = args.classes // 2
    if args.ngram_check > 0 and args.views < args.ngram_check:
        raise ConfigurationError(
            f"{args.views} views cannot form {args.ngram_check}-grams"
        )
    train_count = int(round(args.per_class * args.train_frac))
    spec = vdata.SyntheticSpec(
        classes=args.classes,
        confusable_pairs=pairs,
        views=args.views,
        dim=args.dim,
        samples_per_class={"train": train_count, "test": args.per_class - train_count},
        sigma=args.sigma,
        seed=args.seed,
    )
    out = Path(args.out)
    records = vdata.generate_synthetic(spec, out)
    manifest = out / "manifest.json"
    vdata.write_manifest(manifest, records)
    _log(f"wrote {len(records)} samples to {out}")
    print(manifest)
    return 0


def cmd_train(args) -> int:
    _log_config("train", args)
    config = TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        clip_bound=args.clip,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        branch_sizes=args.ngram_sizes,
        d_prime=args.dprime,
        circular=args.circular,
        aggregation=args.aggregation,
    )
    dataset = vdata.load_split(args.manifest, args.split)
    if not dataset:
        raise DataError(f"no samples in split {args.split!r}")
    resume = load_checkpoint(args.resume) if args.resume else None
    ckpt, history = train(dataset, config, resume)
    save_checkpoint(args.out, ckpt)
    loss_log = args.loss_log or (str(args.out) + ".losses.txt")
    with open(loss_log, "w", encoding="utf-8") as fh:
        for epoch, loss in enumerate(history, start=ckpt.epoch - len(history) + 1):
            fh.write(f"{epoch}\t{loss!r}\n")
    _log(f"trained {len(history)} epochs; checkpoint at {args.out}")
    print(args.out)
    return 0


def cmd_embed(args) -> int:
    _log_config("embed", args)
    ckpt = load_checkpoint(args.checkpoint)
    dataset = vdata.load_split(args.manifest, args.split)
    if not dataset:
        raise DataError(f"no samples in split {args.split!r}")
    dim = dataset[0][2].shape[1]
    if dim != ckpt.model.feature_dim:
        raise DataError(
            f"checkpoint feature dim {ckpt.model.feature_dim} vs data dim {dim}"
        )
    ids = [sid for sid, _, _ in dataset]
    rows = np.stack([extract_descriptor(feats, ckpt.model) for _, _, feats in dataset])
    vdata.write_descriptors(args.out, ids, rows)
    _log(f"wrote {len(ids)} descriptors to {args.out}")
    print(args.out)
    return 0


def cmd_evaluate(args) -> int:
    _log_config("evaluate", args)
    label_of = {
        rec["id"]: rec["class_label"] for rec in vdata.load_manifest(args.manifest)
    }

    def descriptor_set(path) -> vmetrics.DescriptorSet:
        ids, rows = vdata.read_descriptors(path)
        missing = [sid for sid in ids if sid not in label_of]
        if missing:
            raise DataError(f"ids missing from manifest: {missing[:3]}")
        return vmetrics.DescriptorSet(ids, [label_of[sid] for sid in ids], rows)

    options = vmetrics.EvalOptions(
        similarity=args.similarity,
        f1_cutoff=args.f1_cutoff,
        ndcg_cutoff=args.ndcg_cutoff,
        normalize=args.normalize,
    )
    report = vmetrics.evaluate_retrieval(
        descriptor_set(args.query), descriptor_set(args.gallery), options
    )
    text = vmetrics.report_to_json(report)
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
        _log(f"report written to {args.json}")
    else:
        sys.stdout.write(text)
    return 0


def _parse_branch_sets(text: str) -> list[tuple[int, ...]]:
    """'1,2,3+5' -> [(1,), (2,), (3, 5)]: commas separate sets, + joins sizes."""
    sets = []
    for chunk in text.split(","):
        sizes = tuple(int(tok) for tok in chunk.split("+"))
        if not sizes or any(n < 1 for n in sizes):
            raise argparse.ArgumentTypeError(f"bad branch set {chunk!r}")
        sets.append(sizes)
    return sets


def cmd_gradcheck(args) -> int:
    _log_config("gradcheck", args)
    if args.break_adjoint:
        ad._BROKEN_ADJOINTS.add(args.break_adjoint)
    try:
        worst_overall = 0.0
        failed = False
        for sizes in args.branches:
            branches = [BranchConfig(n=n, d_prime=args.dprime) for n in sizes]
            rng = Rng(args.seed)
            model = init_parameters(args.dim, branches, args.classes, rng)
            feats = rng.uniform(-1.0, 1.0, (args.views, args.dim))
            label = args.classes - 1

            def loss_fn():
                logits, _ = multi_scale_forward(feats, model)
                return ad.cross_entropy(logits, label)

            err, worst_name = ad.finite_diff_report(
                loss_fn, model.named_parameters(), args.step
            )
            tag = "+".join(str(n) for n in sizes)
            status = "ok" if err < args.threshold else "FAIL"
            print(f"branches {tag}: max relative error {err:.3e} ({worst_name}) {status}")
            worst_overall = max(worst_overall, err)
            failed = failed or err >= args.threshold
        print(f"worst overall: {worst_overall:.3e}")
        return 1 if failed else 0
    finally:
        if args.break_adjoint:
            ad._BROKEN_ADJOINTS.discard(args.break_adjoint)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewgram",
        description="n-gram aggregation over view-feature sequences: "
        "synthesize data, train, embed, and evaluate retrieval",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic dataset", formatter_class=fmt)
    p.add_argument("--classes", type=int, default=4, help="number of classes")
    p.add_argument("--confusable-pairs", type=int, default=-1,
                   help="order-confusable class pairs; -1 means classes//2")
    p.add_argument("--views", type=int, default=12, help="views per shape")
    p.add_argument("--dim", type=int, default=32, help="feature dimension per view")
    p.add_argument("--per-class", type=int, default=150, help="samples per class")
    p.add_argument("--train-frac", type=float, default=2.0 / 3.0,
                   help="fraction of each class assigned to train")
    p.add_argument("--sigma", type=float, default=0.05, help="gaussian noise level")
    p.add_argument("--seed", type=int, default=7, help="generator seed")
    p.add_argument("--ngram-check", type=int, default=0,
                   help="refuse when views < this n-gram size (0 disables)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a manifest split", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--split", default="train", help="manifest split to train on")
    p.add_argument("--lr", type=float, default=0.001, help="learning rate")
    p.add_argument("--momentum", type=float, default=0.9, help="momentum factor")
    p.add_argument("--weight-decay", type=float, default=0.0001, help="weight decay")
    p.add_argument("--clip", type=float, default=0.01,
                   help="elementwise gradient clip bound")
    p.add_argument("--epochs", type=int, default=150, help="training epochs")
    p.add_argument("--batch-size", type=int, default=8, help="mini-batch size")
    p.add_argument("--ngram-sizes", type=_parse_sizes, default=(3, 5, 7),
                   help="comma-separated branch sizes, e.g. 3,5,7")
    p.add_argument("--dprime", type=int, default=512, help="branch output width")
    p.add_argument("--circular", type=_bool_flag, default=False,
                   help="wraparound windows (true/false)")
    p.add_argument("--aggregation", choices=("attention", "max"), default="attention",
                   help="gram aggregation mode")
    p.add_argument("--seed", type=int, default=0, help="init and shuffle seed")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--loss-log", default=None,
                   help="loss history path (default: <out>.losses.txt)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="extract descriptors for a split", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint path")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--split", default="test", help="manifest split to embed")
    p.add_argument("--out", required=True, help="descriptor file output path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("evaluate", help="score retrieval of query vs gallery",
                       formatter_class=fmt)
    p.add_argument("--query", required=True, help="query descriptor file")
    p.add_argument("--gallery", required=True, help="gallery descriptor file")
    p.add_argument("--manifest", required=True, help="manifest providing class labels")
    p.add_argument("--similarity", choices=("cosine", "euclidean"), default="cosine",
                   help="ranking similarity")
    p.add_argument("--f1-cutoff", type=int, default=32, help="F-measure cutoff")
    p.add_argument("--ndcg-cutoff", type=int, default=0,
                   help="NDCG cutoff; 0 = full gallery")
    p.add_argument("--normalize", type=_bool_flag, default=False,
                   help="L2-normalize descriptors before ranking (true/false)")
    p.add_argument("--json", default=None, help="report path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="verify gradients with central differences",
                       formatter_class=fmt)
    p.add_argument("--views", type=int, default=6, help="views in the probe input")
    p.add_argument("--dim", type=int, default=8, help="feature dimension")
    p.add_argument("--dprime", type=int, default=4, help="branch output width")
    p.add_argument("--classes", type=int, default=3, help="classes in the probe head")
    p.add_argument("--branches", type=_parse_branch_sets, default=[(1,), (2,), (3,), (3, 5)],
                   help="comma-separated branch sets; join sizes with +, e.g. 1,2,3+5")
    p.add_argument("--step", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--threshold", type=float, default=1e-4,
                   help="max acceptable relative error")
    p.add_argument("--seed", type=int, default=0, help="probe model seed")
    p.add_argument("--break-adjoint", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        _log(f"configuration error: {exc}")
        return 2
    except (DataError, OSError) as exc:
        _log(f"data error: {exc}")
        return 3
    except NumericError as exc:
        _log(f"numeric error: {exc}")
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
