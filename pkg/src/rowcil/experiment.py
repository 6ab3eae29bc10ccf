"""
Experiment runner: ``key = value`` configs, multi-seed runs and CSV reports.

Each seed picks its own class order, network initialisation and sampling; the
dataset itself depends only on ``data_seed``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import Dataset, gen_gaussian_clusters, load_csv, split_tasks
from .errors import ConfigError
from .metrics import AccuracyLedger, aca, forgetting, forgetting_sum
from .row import RowHyper, RowModel, til_accuracy, train_task
from .scoring import COV_EPS, MD_DELTA, predict_cil

log = logging.getLogger(__name__)

RUN_MODES = {
    "row": "full",
    "row_no_wp": "no_wp",
    "row_no_wp_no_md": "no_wp_no_md",
    "hat_only": "concat_logits",
}


@dataclass
class ExperimentConfig:
    csv_path: str = ""  # empty: synthetic data
    num_classes: int = 8
    dim: int = 16
    n_per_class: int = 200
    spread: float = 0.1
    radius: float = 1.0
    data_seed: int = 0
    tasks: int = 4
    budget: int = 200
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 0.005
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 20
    head_lr: float = 0.0  # 0: same as lr
    head_batch_size: int = 32
    wp_epochs: int = 5
    tp_epochs: int = 10
    s_max: float = 400.0
    emb_grad_clip: float = 10.0
    cov_eps: float = COV_EPS
    md_delta: float = MD_DELTA
    seeds: tuple[int, ...] = (0,)
    mode: str = "row"
    output: str = "results.csv"

    def validate(self) -> "ExperimentConfig":
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        for key in ("lr", "radius", "s_max", "emb_grad_clip", "cov_eps", "md_delta"):
            if not getattr(self, key) > 0:
                bad(key, "must be positive")
        if self.spread <= 0 and not self.csv_path:
            bad("spread", "must be positive")
        for key in ("epochs", "batch_size", "head_batch_size", "wp_epochs", "tp_epochs",
                    "tasks", "n_per_class", "dim"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        if self.head_lr < 0:
            bad("head_lr", "must be >= 0")
        if not 0 <= self.momentum < 1:
            bad("momentum", "must lie in [0, 1)")
        if not self.seeds:
            bad("seeds", "must list at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            bad("seeds", "must be distinct")
        if not self.hidden or min(self.hidden) < 1:
            bad("hidden", "needs at least one positive layer width")
        if self.mode not in RUN_MODES:
            bad("mode", f"must be one of {sorted(RUN_MODES)}")
        if self.budget < 1:
            bad("budget", "must be positive")
        if not self.csv_path:
            if self.num_classes < 2:
                bad("num_classes", "must be >= 2")
            if self.num_classes % self.tasks:
                bad("tasks", f"must divide num_classes={self.num_classes}")
            if self.budget < self.num_classes:
                bad("budget", f"must be >= num_classes={self.num_classes}")
        if not self.output:
            bad("output", "must be a path")
        return self

    def hyper(self) -> RowHyper:
        return RowHyper(
            lr=self.lr, momentum=self.momentum, batch_size=self.batch_size, epochs=self.epochs,
            head_lr=self.head_lr or None, head_batch_size=self.head_batch_size,
            wp_epochs=self.wp_epochs, tp_epochs=self.tp_epochs, s_max=self.s_max,
            emb_grad_clip=self.emb_grad_clip, cov_eps=self.cov_eps,
            replay=self.mode != "hat_only",
        )


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    default = getattr(ExperimentConfig, key, None)
    if key in ("hidden", "seeds"):
        try:
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        except ValueError:
            raise ConfigError(f"{key}: expected a comma-separated list of integers, got {raw!r}") from None
    kind = type(default)
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) and validate."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown key")
        values[key] = _convert(key, raw)
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.csv_path:
        ds = load_csv(config.csv_path)
        if len(ds.x_test) == 0:
            raise ConfigError("csv_path: dataset has no test rows")
        if ds.num_classes % config.tasks:
            raise ConfigError(f"tasks: must divide num_classes={ds.num_classes}")
        if config.budget < ds.num_classes:
            raise ConfigError(f"budget: must be >= num_classes={ds.num_classes}")
        return ds
    return gen_gaussian_clusters(config.num_classes, config.dim, config.n_per_class,
                                 config.spread, config.data_seed, config.radius)


@dataclass
class SeedResult:
    seed: int
    ledger: AccuracyLedger
    til: list[float]
    model: RowModel | None = None


@dataclass
class RunReport:
    tasks: int
    results: list[SeedResult] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return (["seed", "task", "aca", "forgetting_sum", "forgetting_mean", "til"]
                + [f"acc_{i + 1}" for i in range(self.tasks)])

    def rows(self) -> list[dict]:
        out = []
        for res in self.results:
            for t in range(1, self.tasks + 1):
                row = {"seed": res.seed, "task": t, "aca": aca(res.ledger, t),
                       "forgetting_sum": forgetting_sum(res.ledger, t) if t > 1 else None,
                       "forgetting_mean": forgetting(res.ledger, t) if t > 1 else None,
                       "til": res.til[t - 1]}
                for i in range(self.tasks):
                    row[f"acc_{i + 1}"] = res.ledger.acc[i, t - 1] if i < t else None
                out.append(row)
        return out

    def final_aca(self) -> np.ndarray:
        return np.array([aca(r.ledger, self.tasks) for r in self.results])

    def summary(self) -> list[dict]:
        """Mean and population std across seeds for every task checkpoint."""
        rows = self.rows()
        out = []
        for t in range(1, self.tasks + 1):
            sel = [r for r in rows if r["task"] == t]
            entry = {"task": t}
            for col in self.columns[2:]:
                vals = [r[col] for r in sel if r[col] is not None]
                entry[f"{col}_mean"] = float(np.mean(vals)) if vals else None
                entry[f"{col}_std"] = float(np.std(vals)) if vals else None
            out.append(entry)
        return out

    def to_csv(self) -> str:
        return _csv_text(self.columns, self.rows())

    def summary_csv(self) -> str:
        summary = self.summary()
        return _csv_text(list(summary[0]), summary)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def run_seed(config: ExperimentConfig, dataset: Dataset, seed: int, keep_model: bool = False) -> SeedResult:
    seq = split_tasks(dataset, config.tasks, class_order_seed=seed)
    sizes = [dataset.feature_dim, *config.hidden]
    model = RowModel(sizes, config.budget, seed=seed)
    hyper = config.hyper()
    predict_mode = RUN_MODES[config.mode]
    ledger = AccuracyLedger(len(seq))
    til = []
    for t, task in enumerate(seq):
        train_task(model, task.x_train, task.y_train, hyper, classes=task.classes)
        tils = []
        for i in range(t + 1):
            old = seq[i]
            pred = predict_cil(model, old.x_test, predict_mode, config.md_delta)
            ledger.record(i, t, float(np.mean(pred.label == old.y_test)))
            tils.append(til_accuracy(model, old.x_test, old.y_test, i))
        til.append(float(np.mean(tils)))
        log.info("seed %d after task %d: ACA %.4f", seed, t + 1, aca(ledger, t + 1))
    return SeedResult(seed, ledger, til, model if keep_model else None)


def run(config: ExperimentConfig, write: bool = True, keep_models: bool = False) -> RunReport:
    """Train and evaluate every seed; writes ``output`` and ``<output stem>_summary.csv``."""
    config.validate()
    dataset = load_dataset(config)
    report = RunReport(config.tasks)
    for seed in config.seeds:
        report.results.append(run_seed(config, dataset, seed, keep_models))
    if write:
        out = Path(config.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_csv())
        out.with_name(out.stem + "_summary.csv").write_text(report.summary_csv())
    return report
