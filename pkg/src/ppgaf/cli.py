"""Command-line interface.

Subcommands: simulate, pretrain-cdae, train-deepbeat, train-baseline,
evaluate, saliency, embeddings, inspect. Every artifact-producing run
writes a run.json reproducibility record beside its output. Exit codes:
0 success, 1 data/model error (diagnostic on stderr), 2 usage error.

The PPGAF_OUT_DIR environment variable, when set, is the base directory
for relative output paths.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import cdae, interpret, metrics, multitask, pipeline, store
from .errors import PpgafError
from .labels import Quality, Rhythm


def _resolve_out(path: str) -> str:
    base = os.environ.get("PPGAF_OUT_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _format_shape(shape) -> str:
    return "(" + ", ".join("None" if d is None else str(d) for d in shape) + ")"


def _print_table(rows):
    total = 0
    for kind, shape, params in rows:
        print(f"{kind} {_format_shape(shape)} {params}")
        total += params
    print(f"Total params {total}")


def cmd_inspect(args) -> int:
    if args.model == "cdae":
        rows = cdae.describe_cdae(args.profile)
        _print_table(rows)
    else:
        rows = multitask.describe_deepbeat(args.profile)
        _print_table(rows)
        print(
            "note: the rhythm-branch Conv1D (None, 1, 25) row uses 1775 parameters; "
            "the published reference count of 525 is not achievable for any kernel "
            "size on a 35-channel input and is documented as the single deviation."
        )
    return 0


def cmd_simulate(args) -> int:
    recipe = pipeline.parse_recipe(args.recipe)
    bundle = pipeline.simulate_bundle(recipe)
    out = _resolve_out(args.out)
    store.save_dataset(bundle, out)
    config = {"recipe": os.path.abspath(args.recipe), "seed": recipe.seed}
    pipeline.write_run_record(out, "simulate", config)
    print(f"wrote {bundle.windows.shape[0]} windows to {out}")
    return 0


def cmd_pretrain_cdae(args) -> int:
    bundle = store.load_dataset(args.dataset)
    model = pipeline.run_pretrain(
        bundle,
        profile=args.profile,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
    )
    out = _resolve_out(args.out)
    config = {
        "profile": args.profile,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "seed": args.seed,
    }
    store.save_checkpoint(model, out, config=config)
    pipeline.write_run_record(out, "pretrain-cdae", config)
    last = model.history[-1]
    print(f"pretrained {args.profile} autoencoder: val MSE {last['val_mse']:.6f} -> {out}")
    return 0


def cmd_train_deepbeat(args) -> int:
    if (args.encoder is None) == (not args.no_pretrain):
        raise PpgafError("pass exactly one of --encoder <checkpoint> or --no-pretrain")
    bundle = store.load_dataset(args.dataset)
    encoder = None
    if args.encoder is not None:
        encoder = store.load_checkpoint(args.encoder)
        if not isinstance(encoder, cdae.Cdae):
            raise PpgafError(f"--encoder checkpoint {args.encoder} is not an autoencoder")
    model = pipeline.run_train_deepbeat(
        bundle,
        profile=args.profile,
        encoder=encoder,
        single_task=args.single_task,
        lambda_qa=args.lambda_qa,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
    )
    out = _resolve_out(args.out)
    config = {
        "profile": args.profile,
        "encoder": args.encoder,
        "single_task": args.single_task,
        "lambda_qa": args.lambda_qa,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "seed": args.seed,
    }
    store.save_checkpoint(model, out, config=config)
    pipeline.write_run_record(out, "train-deepbeat", config)
    last = model.history[-1]
    print(f"trained classifier: val total CE {last['val_total']:.4f} -> {out}")
    return 0


def cmd_train_baseline(args) -> int:
    bundle = store.load_dataset(args.dataset)
    forest = pipeline.run_train_baseline(bundle, n_estimators=args.trees, seed=args.seed)
    out = _resolve_out(args.out)
    config = {"trees": args.trees, "seed": args.seed}
    store.save_checkpoint(forest, out, config=config)
    pipeline.write_run_record(out, "train-baseline", config)
    print(f"trained {args.trees}-tree baseline -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = store.load_dataset(args.dataset)
    model = store.load_checkpoint(args.model)
    gate = Quality.EXCELLENT if args.qa_gate == "excellent" else None
    report, pr_points = pipeline.evaluate_model(
        bundle,
        model,
        partition=args.partition,
        qa_gate_level=gate,
        threshold=args.threshold,
        episodes=args.episodes,
    )
    out = _resolve_out(args.out)
    store.save_report(report.to_dict(), out, pr_points=pr_points)
    config = {
        "model": os.path.abspath(args.model),
        "partition": args.partition,
        "qa_gate": args.qa_gate,
        "threshold": args.threshold,
        "episodes": args.episodes,
    }
    pipeline.write_run_record(out, "evaluate", config)
    print(
        f"precision {report.precision:.4f} recall {report.recall:.4f} "
        f"f1 {report.f1:.4f} auprc {report.auprc:.4f} "
        f"({report.n_windows} windows, {report.n_gated_out} gated out) -> {out}"
    )
    return 0


def cmd_saliency(args) -> int:
    bundle = store.load_dataset(args.dataset)
    model = store.load_checkpoint(args.model)
    if not isinstance(model, multitask.MultiTaskModel):
        raise PpgafError("saliency needs a multi-task classifier checkpoint")
    target = Rhythm.from_str(args.rhythm_class)
    idx = bundle.select(args.partition)[: args.limit]
    out = _resolve_out(args.out)
    with open(out + ".tmp", "w", encoding="utf-8") as fh:
        fh.write("window_id\trhythm_class\t" + "\t".join(f"s{i}" for i in range(bundle.window_len)) + "\n")
        for i in idx:
            lbl = bundle.labels[i]
            smap = interpret.saliency(
                model, bundle.windows[i], target, source=args.layer, window_id=lbl.window_id
            )
            fh.write(lbl.window_id + "\t" + target.value + "\t")
            fh.write("\t".join(repr(float(v)) for v in smap.scores) + "\n")
    os.replace(out + ".tmp", out)
    print(f"wrote {len(idx)} saliency rows -> {out}")
    return 0


def cmd_embeddings(args) -> int:
    bundle = store.load_dataset(args.dataset)
    model = store.load_checkpoint(args.model)
    if not isinstance(model, multitask.MultiTaskModel):
        raise PpgafError("embeddings need a multi-task classifier checkpoint")
    idx = bundle.select(args.partition)
    emb = interpret.export_embeddings(model, bundle.windows[idx])
    out = _resolve_out(args.out)
    with open(out + ".tmp", "w", encoding="utf-8") as fh:
        fh.write("window_id\trhythm\t" + "\t".join(f"e{i}" for i in range(emb.shape[1])) + "\n")
        for row, i in enumerate(idx):
            lbl = bundle.labels[i]
            fh.write(lbl.window_id + "\t" + lbl.rhythm.value + "\t")
            fh.write("\t".join(repr(float(v)) for v in emb[row]) + "\n")
    os.replace(out + ".tmp", out)
    print(f"wrote {emb.shape[0]}x{emb.shape[1]} embeddings -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppgaf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a labeled dataset from a recipe file")
    p.add_argument("--recipe", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pretrain-cdae", help="pretrain the denoising autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=("paper", "mini"), default="paper")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain_cdae)

    p = sub.add_parser("train-deepbeat", help="train the multi-task classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default=None, help="autoencoder checkpoint to transfer from")
    p.add_argument("--no-pretrain", action="store_true", help="random-init the encoder")
    p.add_argument("--single-task", action="store_true", help="train the rhythm task only")
    p.add_argument("--lambda-qa", type=float, default=1.0, dest="lambda_qa")
    p.add_argument("--profile", choices=("paper", "mini"), default="paper")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_deepbeat)

    p = sub.add_parser("train-baseline", help="train the random-forest baseline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset partition")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.add_argument("--qa-gate", choices=("excellent", "none"), default="none")
    p.add_argument("--threshold", type=float, default=metrics.DEFAULT_THRESHOLD)
    p.add_argument("--episodes", action="store_true", help="add episode-level sensitivity")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("saliency", help="export per-window saliency maps")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.add_argument("--rhythm-class", choices=("sinus", "af"), default="af")
    p.add_argument("--layer", choices=("rhythm", "shared"), default="rhythm")
    p.add_argument("--limit", type=int, default=16)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("embeddings", help="export penultimate dense activations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_embeddings)

    p = sub.add_parser("inspect", help="print a model's layer table")
    p.add_argument("--model", choices=("cdae", "deepbeat"), required=True)
    p.add_argument("--profile", choices=("paper", "mini"), default="paper")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PpgafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
