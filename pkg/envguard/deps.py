# envguard/deps.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from envguard.config import settings
from envguard.fixedpoint.analysis import CostWeights
from envguard.fixedpoint.tuning import TuningOptions
from envguard.services.report_store import ReportStore
from envguard.services.solver import SolverOptions
from envguard.services.worker_pool import WorkerPool
from envguard.utils.logging import configure_logging
from envguard.utils.rationals import to_fraction

DATA_DIR = Path(__file__).resolve().parent / "data"


def _resolve_path(p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else (Path.cwd() / path).resolve()


@dataclass
class Toolchain:
    solver: SolverOptions
    tuner: TuningOptions
    pool: WorkerPool
    store: ReportStore
    logger: logging.Logger
    monitor_samples: int
    cross_check_samples: int
    seed: int

    def rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def close(self) -> None:
        self.pool.close()


def parse_cost_weights(text: str) -> CostWeights:
    """"mul=1,add=1/8,div=1" (any subset) on top of the configured weights."""
    values = {
        "mul": to_fraction(settings.COST_WEIGHT_MUL),
        "add": to_fraction(settings.COST_WEIGHT_ADD),
        "div": to_fraction(settings.COST_WEIGHT_DIV),
    }
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in values or not value:
            raise ValueError(f"bad cost weight {item!r} (expected mul=, add= or div=)")
        values[key] = to_fraction(value)
    return CostWeights(**values)


def build_toolchain(overrides: Optional[Dict[str, Any]] = None) -> Toolchain:
    """Settings plus per-invocation overrides (None means "not given")."""
    o = {k: v for k, v in (overrides or {}).items() if v is not None}
    logger = configure_logging(o.get("log_level", settings.LOG_LEVEL))

    solver = SolverOptions(
        engine=o.get("engine", settings.SOLVER_ENGINE),
        depth_cap=o.get("depth_cap", settings.SOLVER_DEPTH_CAP),
        split_width=to_fraction(settings.SOLVER_SPLIT_WIDTH),
        atoms_peak=settings.SOLVER_ATOMS_PEAK,
        timeout_seconds=o.get("timeout", settings.SOLVER_TIMEOUT_SECONDS),
        falsify_samples=o.get("samples", settings.FALSIFY_SAMPLES),
        seed=o.get("seed", settings.SEED),
    )
    tuner = TuningOptions(
        min_width=settings.TUNE_MIN_WIDTH,
        max_width=o.get("max_width", settings.TUNE_MAX_WIDTH),
        weights=parse_cost_weights(o.get("cost_weights", "")),
    )
    pool = WorkerPool(o.get("workers", settings.WORKERS), logger=logger)
    store = ReportStore(_resolve_path(o.get("report_dir", settings.REPORT_DIR)), logger=logger)
    logger.debug(
        "toolchain: engine=%s workers=%d timeout=%ss seed=%d",
        solver.engine, pool.workers, solver.timeout_seconds, solver.seed,
    )
    return Toolchain(
        solver=solver,
        tuner=tuner,
        pool=pool,
        store=store,
        logger=logger,
        monitor_samples=o.get("monitor_samples", settings.MONITOR_SAMPLES),
        cross_check_samples=o.get("cross_check_samples", settings.CROSS_CHECK_SAMPLES),
        seed=solver.seed,
    )


def parse_param(text: str) -> Dict[str, Optional[Fraction]]:
    """NAME=VALUE (exact rational) or NAME=? (leave symbolic)."""
    name, sep, value = text.partition("=")
    name, value = name.strip(), value.strip()
    if not sep or not name or not value:
        raise ValueError(f"bad parameter binding {text!r} (expected NAME=VALUE)")
    return {name: None if value == "?" else to_fraction(value)}

