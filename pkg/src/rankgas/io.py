"""CSV ingestion and output plus the run configuration.

Rankings are long-format CSV with columns ``time,item,rank``; covariates are
long-format CSV with columns ``time,item,covariate,value``. Items missing
from a period's rankings did not take part in it.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .gas_filter import (
    ABSENT_MODES,
    MEAN_REVERTING,
    PARTIAL_LIKELIHOOD,
    RANDOM_WALK,
    STATIC,
    VARIANTS,
    ModelSpec,
    PanelDataset,
)

__all__ = [
    "DataError",
    "ConfigError",
    "RunConfig",
    "load_dataset",
    "write_dataset",
    "write_rows",
    "write_worth_paths",
    "read_rows",
    "sorted_items",
    "fmt",
]


class DataError(ValueError):
    """Input data violates the file format or dataset invariants."""


class ConfigError(ValueError):
    """The run configuration is inconsistent or malformed."""


@dataclass
class RunConfig:
    """Flat key-value run configuration, usually read from a JSON file."""

    variant: str = MEAN_REVERTING
    P: int | None = None
    Q: int | None = None
    absent_mode: str = PARTIAL_LIKELIHOOD
    rw_init: str = "omega"
    covariate_names: list[str] = field(default_factory=list)
    sparse_covariates: list[str] = field(default_factory=list)
    rankings: str | None = None
    covariates: str | None = None
    out: str = "."
    seed: int = 0
    level: float = 0.95
    # optimizer
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-5
    relative_loglik_tolerance: float = 1e-9
    restart_count: int = 3
    finite_difference_step: float = 1e-6
    hessian_step: float = 1e-4
    # simulate
    n_items: int = 10
    n_periods: int = 20
    covariate_count: int = 1
    top: int | None = None
    beta: float = 1.0
    alpha: float = 0.4
    phi: float = 0.5
    # study
    item_counts: list[int] = field(default_factory=lambda: [20])
    horizons: list[int] = field(default_factory=lambda: [20])
    replications: int = 500
    n_jobs: int = 1
    # predict
    participants: list[str] | None = None
    events: list[str] = field(default_factory=list)
    next_covariates: str | None = None
    fit_file: str | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls().updated(raw)

    def updated(self, values: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        merged = {f.name: getattr(self, f.name) for f in fields(self)}
        merged.update({k: v for k, v in values.items() if v is not None})
        cfg = RunConfig(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.variant not in VARIANTS + ("all",):
            raise ConfigError(f"variant must be one of {VARIANTS + ('all',)}")
        if self.absent_mode not in ABSENT_MODES:
            raise ConfigError(f"absent_mode must be one of {ABSENT_MODES}")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        unknown_sparse = set(self.sparse_covariates) - set(self.covariate_names)
        if self.covariate_names and unknown_sparse:
            raise ConfigError(f"sparse covariates {sorted(unknown_sparse)} are not declared")
        for name in ("gradient_tolerance", "relative_loglik_tolerance",
                     "finite_difference_step", "hessian_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def spec(self, n_items: int, covariate_count: int, variant: str | None = None) -> ModelSpec:
        variant = variant or self.variant
        try:
            if variant == STATIC:
                return ModelSpec.static(n_items, covariate_count, absent_mode=self.absent_mode)
            if variant == RANDOM_WALK:
                return ModelSpec(n_items, covariate_count, self.P or 1, self.Q or 1,
                                 RANDOM_WALK, absent_mode=self.absent_mode,
                                 rw_init=self.rw_init)
            return ModelSpec.mean_reverting(n_items, covariate_count, self.P or 1, self.Q or 1,
                                            absent_mode=self.absent_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def optimizer(self):
        from .estimation import OptimizerConfig

        return OptimizerConfig(
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            relative_loglik_tolerance=self.relative_loglik_tolerance,
            restart_count=self.restart_count,
            finite_difference_step=self.finite_difference_step,
            hessian_step=self.hessian_step,
            random_seed=self.seed,
        )


def _time_key(labels: Iterable[str]):
    labels = list(labels)
    try:
        return {lab: (int(lab),) for lab in labels}
    except ValueError:
        pass
    try:
        return {lab: (dt.date.fromisoformat(lab).toordinal(),) for lab in labels}
    except ValueError as exc:
        raise DataError(f"time labels must be all integers or all ISO dates ({exc})") from exc


def read_rows(path, required: Sequence[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        reader.fieldnames = header
        for row in reader:
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items() if k}


def load_dataset(
    rankings_path,
    covariates_path=None,
    covariate_names: Sequence[str] = (),
    sparse_covariates: Sequence[str] = (),
    absent_mode: str = PARTIAL_LIKELIHOOD,
) -> PanelDataset:
    """Build a :class:`PanelDataset` from long-format CSV files.

    Items are numbered in order of first appearance in the rankings file and
    periods are sorted by time. Covariates not declared in
    ``covariate_names`` are rejected when names are given; otherwise they
    are taken in order of first appearance. Cells of sparse covariates
    default to 0; any other missing cell is an error, except for absent
    items in zero-score mode.

    Raises:
        DataError: on malformed rows, duplicates, ties or gaps in ranks.
    """
    items: dict[str, int] = {}
    by_time: dict[str, dict[int, str]] = {}
    for line, row in read_rows(rankings_path, ("time", "item", "rank")):
        time, item, rank_text = row["time"], row["item"], row["rank"]
        if not time or not item:
            raise DataError(f"{rankings_path}:{line}: empty time or item")
        try:
            rank = int(rank_text)
        except ValueError:
            raise DataError(f"{rankings_path}:{line}: rank {rank_text!r} is not an integer")
        if rank < 1:
            raise DataError(f"{rankings_path}:{line}: rank must be positive, got {rank}")
        items.setdefault(item, len(items))
        period = by_time.setdefault(time, {})
        if item in period.values():
            raise DataError(f"{rankings_path}:{line}: duplicate row for item {item!r} at {time}")
        if rank in period:
            raise DataError(
                f"{rankings_path}:{line}: tie at rank {rank} in period {time} "
                f"({period[rank]!r} and {item!r}); ties are not supported"
            )
        period[rank] = item
    if not by_time:
        raise DataError(f"{rankings_path}: no ranking rows")

    keys = _time_key(by_time)
    times = sorted(by_time, key=lambda lab: keys[lab])
    n, t_len = len(items), len(times)
    orders = np.full((t_len, n), -1, dtype=np.int64)
    n_ranked = np.empty(t_len, dtype=np.int64)
    participants = np.zeros((t_len, n), dtype=bool)
    for t, time in enumerate(times):
        period = by_time[time]
        if sorted(period) != list(range(1, len(period) + 1)):
            raise DataError(
                f"{rankings_path}: ranks at time {time} are {sorted(period)}, "
                f"expected 1..{len(period)}"
            )
        for rank, item in period.items():
            orders[t, rank - 1] = items[item]
            participants[t, items[item]] = True
        n_ranked[t] = len(period)

    names = list(covariate_names)
    sparse = set(sparse_covariates)
    values: dict[tuple[int, int, str], float] = {}
    if covariates_path is not None:
        t_index = {time: t for t, time in enumerate(times)}
        declared = bool(names)
        for line, row in read_rows(covariates_path, ("time", "item", "covariate", "value")):
            time, item, name = row["time"], row["item"], row["covariate"]
            where = f"{covariates_path}:{line}"
            if time not in t_index:
                raise DataError(f"{where}: time {time!r} has no rankings")
            if item not in items:
                raise DataError(f"{where}: unknown item {item!r}")
            if name not in names:
                if declared:
                    raise DataError(f"{where}: unknown covariate {name!r}")
                names.append(name)
            try:
                value = float(row["value"])
            except ValueError:
                raise DataError(f"{where}: value {row['value']!r} is not a number")
            if not math.isfinite(value):
                raise DataError(f"{where}: value must be finite")
            key = (t_index[time], items[item], name)
            if key in values:
                raise DataError(f"{where}: duplicate covariate cell")
            values[key] = value
    elif names and not set(names) <= sparse:
        raise DataError("covariates are declared but no covariate file was given")

    cov = np.zeros((t_len, n, len(names)))
    labels = list(items)
    for j, name in enumerate(names):
        for t in range(t_len):
            for i in range(n):
                key = (t, i, name)
                if key in values:
                    cov[t, i, j] = values[key]
                elif name in sparse:
                    continue
                elif absent_mode != PARTIAL_LIKELIHOOD and not participants[t, i]:
                    continue
                else:
                    raise DataError(
                        f"missing covariate {name!r} for item {labels[i]!r} at time {times[t]}"
                    )
    return PanelDataset(orders, n_ranked, cov, participants, tuple(labels),
                        tuple(names), tuple(times))


def fmt(x: float, digits: int = 10) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}g}"


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def sorted_items(data: PanelDataset) -> list[int]:
    return sorted(range(data.universe_size), key=lambda i: data.item_labels[i])


def write_dataset(data: PanelDataset, directory, latent=None) -> dict[str, Path]:
    """Write rankings (and covariates, latent worths if any) as CSV.

    Within a period, rows are sorted by item label.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    order = sorted_items(data)
    ranks = []
    for t, time in enumerate(data.time_labels):
        pos = {int(item): r + 1 for r, item in enumerate(data.orders[t, : data.n_ranked[t]])}
        ranks += [(time, data.item_labels[i], pos[i]) for i in order if i in pos]
    out = {"rankings": write_rows(directory / "rankings.csv", ("time", "item", "rank"), ranks)}
    if data.covariate_count:
        rows = [
            (time, data.item_labels[i], name, repr(float(data.covariates[t, i, j])))
            for t, time in enumerate(data.time_labels)
            for i in order
            for j, name in enumerate(data.covariate_names)
        ]
        out["covariates"] = write_rows(
            directory / "covariates.csv", ("time", "item", "covariate", "value"), rows
        )
    if latent is not None:
        out["latent"] = write_worth_paths(directory / "latent_worths.csv", data, latent)
    return out


def write_worth_paths(path, data: PanelDataset, worth) -> Path:
    order = sorted_items(data)
    header = ["time"] + [data.item_labels[i] for i in order]
    rows = [[time] + [repr(float(worth[t, i])) for i in order]
            for t, time in enumerate(data.time_labels)]
    return write_rows(path, header, rows)
