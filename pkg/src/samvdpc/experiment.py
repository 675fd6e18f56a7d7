"""Experiment runner: repeated-run benchmarking, fusion comparison, persistence.

A benchmark repeats split -> normalize -> (optional pretrain) -> train ->
evaluate with seeds base_seed + r and reports mean and sample (n-1) standard
deviation of the per-run test accuracies. Fusion comparisons share seeds
across strategies so every strategy sees identical splits per run index.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import data as dt
from . import model as mdl
from . import training as tr
from .numerics import ConfigError, Rng


# Per-dataset presets: encoder widths l1/l2/l3, attention rows d_c, batch size.
PRESETS = {
    "leaves": dict(widths=(64, 32, 16), d_c=3, batch_size=4),
    "reuters": dict(widths=(2048, 1024, 512), d_c=2, batch_size=16),
    "yaleface": dict(widths=(1024, 512, 512), d_c=2, batch_size=32),
    "bbc": dict(widths=(1024, 512, 512), d_c=4, batch_size=32),
    "cornell": dict(widths=(1024, 512, 128), d_c=2, batch_size=16),
    "texas": dict(widths=(1024, 512, 128), d_c=2, batch_size=16),
    "washington": dict(widths=(1024, 512, 128), d_c=2, batch_size=16),
    "wisconsin": dict(widths=(1024, 512, 128), d_c=2, batch_size=16),
}


@dataclass
class ExperimentConfig:
    fusion: str = "self-attention"
    widths: tuple = (64, 32, 16)
    d_s: int = 300
    d_c: int = 2
    head_hidden: int = 512
    lam: float = 1e-4
    lr: float = 1e-3
    decay_factor: float = 0.5
    patience: int = 5
    batch_size: int = 32
    epochs: int = 200
    dropout: float = 0.5
    pretrain: bool = True
    pretrain_epochs: int = 100
    pretrain_lr: float = 1e-3
    runs: int = 10
    seed: int = 0

    def validate(self):
        if self.fusion not in mdl.FUSION_NAMES:
            raise ConfigError(f"unknown fusion {self.fusion!r}; choose one of {mdl.FUSION_NAMES}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        self.training_config(0).validate()
        return self

    def effective_lam(self):
        # baselines train without the diversity penalty
        return self.lam if self.fusion == "self-attention" else 0.0

    def training_config(self, run_seed):
        return tr.TrainingConfig(lam=self.effective_lam(), lr=self.lr,
                                 decay_factor=self.decay_factor, patience=self.patience,
                                 batch_size=self.batch_size, dropout=self.dropout,
                                 epochs=self.epochs, seed=run_seed)

    @classmethod
    def from_file(cls, path, preset=None):
        raw = json.loads(Path(path).read_text())
        return cls.from_dict(raw, preset=preset)

    @classmethod
    def from_dict(cls, raw, preset=None):
        values = dict(PRESETS[preset]) if preset else {}
        values.update(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "widths" in values:
            values["widths"] = tuple(values["widths"])
        return cls(**values).validate()


@dataclass
class RunReport:
    config: dict
    accuracies: list        # per-run final test accuracy
    mean: float
    std: float              # sample (n-1) std; 0.0 with flag when runs == 1
    single_run: bool
    seeds: list
    curves: list            # per run, list of EpochRecord


def _fit_single_run(dataset, cfg, seed):
    splits = dt.split(dataset, seed)
    normalized, stats = dt.normalize(dataset, splits.train)
    rng = Rng(seed)
    encoders = None
    if cfg.pretrain:
        train_views = [x[splits.train] for x in normalized.views]
        pre_cfg = tr.PretrainConfig(epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr,
                                    batch_size=cfg.batch_size)
        encoders = tr.pretrain_autoencoders(train_views, cfg.widths, pre_cfg, rng.spawn(7))
    model = mdl.init_model(normalized.view_dims, cfg.widths, dataset.n_classes,
                           cfg.fusion, cfg.d_s, cfg.d_c, rng.spawn(11),
                           head_hidden=cfg.head_hidden, encoders=encoders)
    model, curves = tr.train(model, normalized.views, normalized.labels, splits,
                             cfg.training_config(seed))
    test_acc = tr.evaluate(model, [x[splits.test] for x in normalized.views],
                           normalized.labels[splits.test])
    return model, stats, curves, test_acc


def run_experiment(dataset, cfg):
    cfg.validate()
    accs, all_curves, seeds = [], [], []
    for r in range(cfg.runs):
        seed = cfg.seed + r
        try:
            _, _, curves, acc = _fit_single_run(dataset, cfg, seed)
        except Exception as exc:
            raise RuntimeError(f"run {r} (seed {seed}) failed: {exc}") from exc
        accs.append(acc)
        all_curves.append(curves)
        seeds.append(seed)
    mean = float(np.mean(accs))
    std = 0.0 if cfg.runs == 1 else float(np.std(accs, ddof=1))
    return RunReport(config=asdict(cfg), accuracies=accs, mean=mean, std=std,
                     single_run=cfg.runs == 1, seeds=seeds, curves=all_curves)


def compare_fusions(dataset, cfg):
    """Run every fusion strategy with shared seeds; returns {strategy: RunReport}."""
    return {name: run_experiment(dataset, replace(cfg, fusion=name))
            for name in mdl.FUSION_NAMES}


def format_comparison(reports):
    lines = [f"{'strategy':<16} {'accuracy':>18}"]
    for name, report in reports.items():
        lines.append(f"{name:<16} {100 * report.mean:>9.1f} ± {100 * report.std:.1f}")
    return "\n".join(lines)


def emit_curves(report, out_dir):
    """One CSV per run plus an aggregate of per-epoch means; returns paths."""
    if not report.curves:
        raise ConfigError("report has no curves to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ",".join(tr.EpochRecord.COLUMNS)
    paths = []
    for r, curves in enumerate(report.curves):
        path = out_dir / f"run_{r:02d}.csv"
        rows = [",".join(repr(v) for v in rec.row()) for rec in curves]
        path.write_text("\n".join([header, *rows]) + "\n")
        paths.append(path)
    depth = min((len(c) for c in report.curves), default=0)
    agg_rows = []
    for e in range(depth):
        stacked = np.array([report.curves[r][e].row() for r in range(len(report.curves))])
        agg_rows.append(",".join(repr(v) for v in stacked.mean(axis=0).tolist()))
    agg = out_dir / "aggregate.csv"
    agg.write_text("\n".join([header, *agg_rows]) + "\n")
    paths.append(agg)
    return paths


def read_curves(path):
    """Parse a per-run curve file back into EpochRecord objects."""
    lines = Path(path).read_text().splitlines()
    records = []
    for line in lines[1:]:
        values = line.split(",")
        records.append(tr.EpochRecord(int(float(values[0])), *map(float, values[1:])))
    return records


def write_report(report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": report.config, "accuracies": report.accuracies,
               "mean": report.mean, "std": report.std,
               "single_run": report.single_run, "seeds": report.seeds}
    path = out_dir / "report.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


MODEL_FORMAT_VERSION = 1


def save_model(model, stats, path):
    """Serialize parameters, architecture, fusion strategy, and norm stats."""
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "fusion": model.fusion.name,
        "view_dims": [int(e.in_dim) for e in model.encoders],
        "widths": [int(w.shape[0]) for w in model.encoders[0].weights],
        "n_classes": int(model.head.n_classes),
        "head_hidden": int(model.head.w_hidden.shape[0]),
        "d_s": int(model.fusion.params.d_s) if isinstance(model.fusion, mdl.SelfAttention) else 1,
        "d_c": int(model.fusion.params.d_c) if isinstance(model.fusion, mdl.SelfAttention) else 1,
    }
    arrays = {name: p.value for name, p in model.parameters()}
    for v, (mu, sigma) in enumerate(zip(stats.means, stats.stds)):
        arrays[f"norm_mean{v}"] = mu
        arrays[f"norm_std{v}"] = sigma
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_model(path):
    """Rebuild a saved model; forward outputs are bit-identical to the original."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: model file not found")
    try:
        archive = np.load(path, allow_pickle=False)
        meta = json.loads(str(archive["meta"]))
    except Exception as exc:
        raise ConfigError(f"{path}: cannot read model file ({exc})") from None
    if meta.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported model format version {meta.get('version')}")
    model = mdl.init_model(meta["view_dims"], meta["widths"], meta["n_classes"],
                           meta["fusion"], meta["d_s"], meta["d_c"], Rng(0),
                           head_hidden=meta["head_hidden"])
    for name, p in model.parameters():
        if name not in archive:
            raise ConfigError(f"{path}: missing parameter {name}")
        stored = archive[name]
        if stored.shape != p.value.shape:
            raise ConfigError(f"{path}: parameter {name} has shape {stored.shape}, "
                              f"expected {p.value.shape}")
        p.value = stored.astype(np.float64)
    means = [archive[f"norm_mean{v}"] for v in range(len(meta["view_dims"]))]
    stds = [archive[f"norm_std{v}"] for v in range(len(meta["view_dims"]))]
    return model, dt.NormStats(means, stds)
