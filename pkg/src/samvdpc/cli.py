"""Command-line interface.

Subcommands: train, bench, compare, pretrain, synth, gradcheck, eval.
Config file values (--config, JSON) are overridden by explicit flags.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dt
from . import experiment as xp
from . import model as mdl
from . import training as tr
from .numerics import Rng, finite_diff_check


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON config file (ExperimentConfig keys)")
    p.add_argument("--data", type=Path, help="dataset manifest path")
    p.add_argument("--preset", choices=sorted(xp.PRESETS), help="named hyperparameter preset")
    p.add_argument("--fusion", choices=mdl.FUSION_NAMES)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, default=Path("out"))


def build_parser():
    parser = argparse.ArgumentParser(prog="samvdpc",
                                     description="Multi-view representation learning "
                                                 "with diversity-promoting self-attention fusion")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [("train", "single training run"),
                       ("bench", "repeated-run benchmark"),
                       ("compare", "compare all four fusion strategies"),
                       ("pretrain", "autoencoder pretraining only"),
                       ("eval", "evaluate a saved model on a dataset")]:
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        if name == "eval":
            p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset in manifest format")
    p.add_argument("--scheme", choices=sorted(dt.SCHEMES), default="xor2")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("synth"))

    p = sub.add_parser("gradcheck", help="finite-difference check on a random model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    return parser


def _load_config(args):
    raw = json.loads(args.config.read_text()) if args.config else {}
    overrides = {k: getattr(args, k) for k in ("fusion", "runs", "seed", "epochs")
                 if getattr(args, k, None) is not None}
    raw.update(overrides)
    return xp.ExperimentConfig.from_dict(raw, preset=args.preset)


def _load_data(args):
    if not args.data:
        raise SystemExit("--data is required for this subcommand")
    return dt.load_dataset(args.data)


def cmd_train(args):
    cfg = _load_config(args)
    dataset = _load_data(args)
    model, stats, curves, acc = xp._fit_single_run(dataset, cfg, cfg.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    xp.save_model(model, stats, args.out / "model.npz")
    report = xp.RunReport(config=vars(args) and cfg.__dict__.copy(), accuracies=[acc],
                          mean=acc, std=0.0, single_run=True, seeds=[cfg.seed],
                          curves=[curves])
    xp.emit_curves(report, args.out)
    print(f"test accuracy: {acc:.4f}")
    print(f"model and curves written to {args.out}/")
    return 0


def cmd_bench(args):
    cfg = _load_config(args)
    dataset = _load_data(args)
    report = xp.run_experiment(dataset, cfg)
    xp.emit_curves(report, args.out)
    xp.write_report(report, args.out)
    print(f"{cfg.fusion}: {100 * report.mean:.1f} ± {100 * report.std:.1f} "
          f"over {len(report.accuracies)} runs")
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    dataset = _load_data(args)
    reports = xp.compare_fusions(dataset, cfg)
    print(xp.format_comparison(reports))
    args.out.mkdir(parents=True, exist_ok=True)
    for name, report in reports.items():
        sub = args.out / name.replace("-", "_")
        xp.emit_curves(report, sub)
        xp.write_report(report, sub)
    return 0


def cmd_pretrain(args):
    cfg = _load_config(args)
    dataset = _load_data(args)
    splits = dt.split(dataset, cfg.seed)
    normalized, _ = dt.normalize(dataset, splits.train)
    train_views = [x[splits.train] for x in normalized.views]
    pre_cfg = tr.PretrainConfig(epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr,
                                batch_size=cfg.batch_size)
    encoders = tr.pretrain_autoencoders(train_views, cfg.widths, pre_cfg, Rng(cfg.seed))
    for v, enc in enumerate(encoders):
        dims = " -> ".join(str(w.shape[0]) for w in enc.weights)
        print(f"view {v}: encoder {enc.in_dim} -> {dims} pretrained")
    return 0


def cmd_eval(args):
    model, stats = xp.load_model(args.model)
    dataset = _load_data(args)
    views = dt.apply_normalization(dataset.views, stats)
    acc = tr.evaluate(model, views, dataset.labels)
    print(f"accuracy: {acc:.4f}")
    return 0


def cmd_synth(args):
    spec = dt.SyntheticSpec(scheme=args.scheme, n_samples=args.samples, n_views=args.views,
                            n_classes=args.classes, view_dim=args.dim, noise=args.noise,
                            seed=args.seed)
    path = dt.write_dataset(dt.generate_synthetic(spec), args.out)
    print(f"wrote {path}")
    return 0


def cmd_gradcheck(args):
    rng = Rng(args.seed)
    view_dims = [5, 7, 9]
    model = mdl.init_model(view_dims, (8, 6, 4), 4, "self-attention", 5, 3,
                           rng, head_hidden=16)
    views = [rng.normal(1.0, (4, d)) for d in view_dims]
    labels = np.array([0, 1, 2, 3])

    def loss_fn():
        loss, _, _ = tr.total_loss(model, views, labels, 1e-4)
        return loss

    err = finite_diff_check(loss_fn, [p for _, p in model.parameters()], eps=args.eps)
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < 1e-4 else 1


COMMANDS = {"train": cmd_train, "bench": cmd_bench, "compare": cmd_compare,
            "pretrain": cmd_pretrain, "eval": cmd_eval, "synth": cmd_synth,
            "gradcheck": cmd_gradcheck}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (dt.DataError, xp.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
