"""Command-line entry point: ``duse {train,eval,ablate,gradcheck,dump}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import ensure_dir, load_checkpoint, save_checkpoint, write_csv, write_json
from .config import RunConfig, parse_config
from .diagnostics import fusion_rows, pipeline_gradcheck, power_iteration_pca, tiny_config
from .data import class_texts
from .errors import DuseError
from .model import DuseModel
from .training import GRIDS, ablation_run, evaluate, make_datasets, train

log = logging.getLogger("duse")

GRADCHECK_TOLERANCE = 1e-4


def _checkpoint_path(cfg: RunConfig, args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    if cfg.paths.checkpoint:
        return Path(cfg.paths.checkpoint)
    return Path(cfg.paths.out) / "checkpoint.bin"


def _load_model(cfg: RunConfig, args):
    tensors, manifest = load_checkpoint(_checkpoint_path(cfg, args))
    _, eval_set, texts = make_datasets(cfg)
    model = DuseModel(cfg, texts.descriptions)
    model.load_state_dict(tensors)
    return model, eval_set, manifest


def cmd_train(cfg: RunConfig, args) -> int:
    out = ensure_dir(cfg.paths.out)
    result = train(cfg)
    header = cfg.header()
    rows = [(r["epoch"], repr(r["loss"]), repr(r["uar"]), repr(r["war"])) for r in result.history]
    write_csv(out / "metrics.csv", header, ("epoch", "loss", "uar", "war"), rows)
    write_json(out / "metrics.json", header, {
        "history": result.history,
        "final": {"uar": result.metrics.uar, "war": result.metrics.war},
        "per_class_recall": [None if r != r else r for r in result.metrics.per_class_recall.tolist()],
        "classes": result.texts.labels,
    })
    write_csv(out / "confusion.csv", header, ["true"] + result.texts.labels,
              [[label, *row] for label, row in zip(result.texts.labels, result.metrics.confusion.tolist())])
    save_checkpoint(_checkpoint_path(cfg, args), result.model.state_dict(), header,
                    {"config": cfg.to_text(include_paths=False)})
    final = result.history[-1] if result.history else {"loss": float("nan")}
    print(f"trained {len(result.history)} epochs: loss={final['loss']:.6f} "
          f"uar={result.metrics.uar:.4f} war={result.metrics.war:.4f}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    model, eval_set, _ = _load_model(cfg, args)
    labels = class_texts(model.num_classes).labels
    m = evaluate(model, eval_set)
    print(f"uar={m.uar!r} war={m.war!r}")
    for label, recall in zip(labels, m.per_class_recall):
        print(f"  class {label}: recall={recall:.4f}")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    out = ensure_dir(cfg.paths.out)
    names = list(GRIDS) if args.grid == "all" else [args.grid]
    rows = []
    for name in names:
        for row in ablation_run(cfg, GRIDS[name]()):
            rows.append((row["variant"], repr(row["uar"]), repr(row["war"])))
            print(f"{row['variant']:<24} uar={row['uar']:.4f} war={row['war']:.4f}")
    write_csv(out / "ablation.csv", cfg.header(), ("variant", "uar", "war"), rows)
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    errors = pipeline_gradcheck(tiny_config(cfg))
    for name, err in errors.items():
        print(f"{name:<24} {err:.3e}")
    worst = max(errors.values())
    ok = worst < GRADCHECK_TOLERANCE
    print(f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} < {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def cmd_dump(cfg: RunConfig, args) -> int:
    out = ensure_dir(cfg.paths.out)
    model, eval_set, _ = _load_model(cfg, args)
    pool_rows, alpha_rows, fused, labels, ids = fusion_rows(model, eval_set)
    header = cfg.header()
    lines = [header, "clip_id,frame,w"]
    lines += [",".join(map(str, r)) for r in pool_rows]
    lines += ["clip_id,head,class,alpha"]
    lines += [",".join(map(str, r)) for r in alpha_rows]
    (out / "trace.csv").write_text("\n".join(lines) + "\n")
    xy = power_iteration_pca(fused, 2)
    write_csv(out / "embed.csv", header, ("clip_id", "label", "x", "y"),
              [(cid, int(lab), repr(float(x)), repr(float(y))) for cid, lab, (x, y) in zip(ids, labels, xy)])
    print(f"wrote {len(pool_rows)} pool weights, {len(alpha_rows)} attention weights, {len(ids)} embeddings")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "dump": cmd_dump,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", help="output directory (overrides paths.out)")
        p.add_argument("--checkpoint", help="checkpoint path (overrides paths.checkpoint)")
        p.add_argument("--force-deep", action="store_true",
                       help="allow Deep prompting with the large encoder profile")
        if name == "ablate":
            p.add_argument("--grid", choices=["all", *GRIDS], default="all")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.out:
            overrides.append(f"paths.out={args.out}")
        cfg = parse_config(args.config, overrides, force_deep=args.force_deep)
        return COMMANDS[args.command](cfg, args)
    except (DuseError, OSError) as exc:
        print(f"duse {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
