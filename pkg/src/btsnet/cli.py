"""Command-line entry point: ``btsnet <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .attention import export_attention
from .data import SyntheticTaskSpec, generate_clips, load_split, save_split
from .io import FormatError
from .network import (
    REFERENCE_PARAMS_M,
    TINY_CARDINALITY,
    NetworkConfig,
    build_network,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from .rf import compare_pathways, load_stack, write_csv
from .train import TrainingDiverged, TrainOptions, evaluate, train

log = logging.getLogger("btsnet")


def cmd_gen(args) -> int:
    spec = SyntheticTaskSpec(
        T=args.t, H=args.hw, W=args.hw, square=args.square, noise=args.noise, seed=args.seed
    )
    val_n = args.val_per_class if args.val_per_class is not None else max(1, args.n_per_class // 2)
    train_set = generate_clips(spec, args.n_per_class, stream=0)
    val_set = generate_clips(spec, val_n, stream=1)
    save_split(args.out, "train", train_set)
    save_split(args.out, "val", val_set)
    meta = {"spec": spec.__dict__ | {"speeds": list(spec.speeds)}, "train": len(train_set), "val": len(val_set)}
    (Path(args.out) / "dataset.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    print(f"wrote {len(train_set)} train / {len(val_set)} val clips to {args.out}")
    return 0


def network_config(args, clip_shape=(16, 32, 32), in_channels=3, num_classes=4) -> NetworkConfig:
    common = dict(
        depth=args.depth,
        num_classes=num_classes,
        M=args.m,
        rf_option=args.rf,
        fuse_type=args.fuse,
        clip_shape=clip_shape,
        in_channels=in_channels,
    )
    if getattr(args, "tiny", False):
        if args.cardinality != TINY_CARDINALITY:
            log.warning("tiny preset uses cardinality %d (requested %d does not divide width 8)",
                        TINY_CARDINALITY, args.cardinality)
        return NetworkConfig.tiny(**common)
    return NetworkConfig(cardinality=args.cardinality, **common)


def cmd_train(args) -> int:
    train_set = load_split(args.data, "train")
    val_path = Path(args.data) / "val.btsc"
    val_set = load_split(args.data, "val") if val_path.exists() else None
    _, C, T, H, W = train_set.clips.shape
    cfg = network_config(args, (T, H, W), C, int(train_set.labels.max()) + 1)
    net = build_network(cfg, seed=args.seed)
    opts = TrainOptions(
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
    )
    record = train(net, train_set, opts, val=val_set)
    save_checkpoint(net, args.ckpt)
    (Path(args.ckpt) / "train_log.json").write_text(json.dumps(record.to_dict(), indent=2), encoding="utf-8")
    last = record.epochs[-1]
    print(json.dumps({"final": last, "best_val_accuracy": record.best_val_accuracy}))
    return 0


def cmd_eval(args) -> int:
    net = load_checkpoint(args.ckpt)
    metrics = evaluate(net, load_split(args.data, args.split))
    print(json.dumps(metrics, indent=2))
    return 0


def cmd_export(args) -> int:
    net = load_checkpoint(args.ckpt)
    result = export_attention(net, load_split(args.data, args.split), args.out)
    print(json.dumps(result, indent=2))
    return 0


def cmd_rf(args) -> int:
    stack_a = load_stack(args.stack)
    stack_b = load_stack(args.compare) if args.compare else []
    rows = compare_pathways(stack_a, stack_b)
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_count(args) -> int:
    cfg = network_config(args)
    total, rows = count_params(build_network(cfg, seed=0))
    if args.per_layer:
        for name, n in rows:
            print(f"{name}\t{n}")
    label = f"BTS-{cfg.depth}-C{cfg.cardinality}"
    ref = REFERENCE_PARAMS_M.get((cfg.cardinality, cfg.depth)) if not args.tiny else None
    report = {"model": label, "total": total, "millions": round(total / 1e6, 3)}
    if ref is not None:
        report["published_millions"] = ref
        report["ratio_to_published"] = round(total / (ref * 1e6), 3)
    print(json.dumps(report))
    return 0


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, choices=[26, 50, 101], default=26)
    p.add_argument("--cardinality", type=int, choices=[16, 32], default=32)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--rf", type=str.upper, choices=["O1", "O2"], default="O2")
    p.add_argument("--fuse", type=str.upper, choices=["TC", "C"], default="TC")
    p.add_argument("--tiny", action="store_true", help="tiny widths (8, 16, 32, 64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btsnet", description=__doc__)
    parser.add_argument("--backend", choices=sorted(kernels.BACKENDS), help="conv kernel backend")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate the synthetic moving-square dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--t", type=int, default=16)
    p.add_argument("--hw", type=int, default=32)
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--val-per-class", type=int, default=None)
    p.add_argument("--square", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a network and write a checkpoint")
    p.add_argument("--data", required=True)
    _add_arch_flags(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="val")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-attn", help="export TSP attention maps")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="val")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("rf", help="receptive-field table for one or two conv stacks")
    p.add_argument("--stack", required=True)
    p.add_argument("--compare", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rf)

    p = sub.add_parser("count-params", help="count trainable parameters")
    _add_arch_flags(p)
    p.add_argument("--per-layer", action="store_true")
    p.set_defaults(func=cmd_count)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.backend:
        kernels.set_backend(args.backend)
    try:
        return args.func(args)
    except (OSError, ValueError, FormatError, TrainingDiverged) as exc:
        print(f"btsnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
