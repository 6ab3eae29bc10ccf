"""Class-incremental learning with masked per-task OOD heads, WP heads and replay."""

from .data import Dataset, Task, TaskSequence, gen_gaussian_clusters, load_csv, split_tasks, write_csv
from .experiment import ExperimentConfig, RunReport, parse_config, run
from .hat import AccumulatedMask, TaskMask
from .memory import ReplayBuffer
from .metrics import AccuracyLedger, aca, bound_multiplier_replay, bound_multiplier_seq, forgetting
from .row import RowHyper, RowModel, TaskHeads, train_task
from .scoring import CilPrediction, TaskStats, fit_task_stats, md_coefficient, predict_cil, tp_probability

__version__ = "0.1.0"
