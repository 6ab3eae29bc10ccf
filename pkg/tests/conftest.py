from pathlib import Path

import numpy as np
import pytest

from rowcil.data import gen_gaussian_clusters, split_tasks
from rowcil.row import RowHyper, RowModel, train_task

ROOT = Path(__file__).resolve().parents[1]
ACCEPTANCE_LINES: list[str] = []


def central_diff(f, param: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``param`` (perturbed in place)."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = param[i]
        param[i] = orig + step
        up = f()
        param[i] = orig - step
        down = f()
        param[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad


def rel_err(analytic, numeric, floor: float = 1e-7) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def norm_rel_err(analytic, numeric) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-300))


@pytest.fixture(scope="session")
def small_sequence():
    ds = gen_gaussian_clusters(6, 8, 60, 0.1, seed=5)
    return split_tasks(ds, 3, class_order_seed=1)


@pytest.fixture(scope="session")
def small_hyper():
    return RowHyper(lr=0.02, batch_size=16, epochs=10, wp_epochs=10, tp_epochs=5)


@pytest.fixture(scope="session")
def trained_small(small_sequence, small_hyper):
    model = RowModel([8, 24, 16], budget=60, seed=2)
    for task in small_sequence:
        train_task(model, task.x_train, task.y_train, small_hyper, classes=task.classes)
    return model


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
