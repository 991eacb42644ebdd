"""Gravity-model traffic matrices at controlled total intensities."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .topology import Topology, total_capacity


@dataclass(frozen=True)
class TrafficMatrix:
    demand: np.ndarray  # n x n, row = source, column = destination

    def __post_init__(self):
        d = np.array(self.demand, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"demand must be square, got shape {d.shape}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("demand entries must be finite and non-negative")
        if np.any(np.diag(d) != 0):
            raise ValueError("diagonal demand must be zero")
        d.setflags(write=False)
        object.__setattr__(self, "demand", d)

    @property
    def n(self) -> int:
        return self.demand.shape[0]

    def total(self) -> float:
        return float(self.demand.sum())

    def scaled(self, factor: float) -> "TrafficMatrix":
        return TrafficMatrix(self.demand * factor)


@dataclass(frozen=True)
class IntensityLevel:
    fraction: float
    absolute: float


def intensity_levels(min_fraction: float, max_fraction: float, count: int, capacity: float = 1.0) -> list[IntensityLevel]:
    """``count`` equally spaced fractions of ``capacity``, both endpoints included."""
    if not (0 < min_fraction <= max_fraction) or count < 1:
        raise ValueError("need 0 < min_fraction <= max_fraction and count >= 1")
    if count == 1:
        fractions = [min_fraction]
    else:
        step = (max_fraction - min_fraction) / (count - 1)
        fractions = [min_fraction + i * step for i in range(count - 1)] + [max_fraction]
    return [IntensityLevel(float(f), float(f) * capacity) for f in fractions]


def sample_masses(n: int, rng: np.random.Generator, dist: str = "exponential") -> np.ndarray:
    if dist == "exponential":
        return rng.exponential(1.0, size=n)
    if dist == "uniform":
        return rng.uniform(0.0, 2.0, size=n)
    raise ValueError(f"unknown mass distribution {dist!r}")


def gravity_from_masses(masses, total: float) -> TrafficMatrix:
    """demand[i][j] = total * w_i w_j / sum_{k != l} w_k w_l, diagonal zero."""
    w = np.asarray(masses, dtype=float)
    outer = np.outer(w, w)
    np.fill_diagonal(outer, 0.0)
    norm = outer.sum()
    if norm <= 0:
        raise ValueError("masses must give a positive off-diagonal product sum")
    demand = total * outer / norm
    # renormalization pass so the total is exact up to one rounding
    demand *= total / demand.sum()
    return TrafficMatrix(demand)


def gravity_tm(t: Topology | int, total: float, seed, masses=None, mass_dist: str = "exponential") -> TrafficMatrix:
    if total <= 0:
        raise ValueError("total traffic must be positive")
    n = t if isinstance(t, int) else t.n
    if masses is None:
        masses = sample_masses(n, np.random.default_rng(seed), mass_dist)
    return gravity_from_masses(masses, total)


@dataclass(frozen=True)
class TrafficRecord:
    level_index: int
    level: float  # fraction of total capacity
    index: int
    tm: TrafficMatrix
    split: str = "test"

    @property
    def total(self) -> float:
        return self.tm.total()


@dataclass
class TrafficDataset:
    levels: list[float]
    records: list[TrafficRecord]

    def __len__(self):
        return len(self.records)

    def by_level(self) -> dict[float, list[TrafficRecord]]:
        out: dict[float, list[TrafficRecord]] = {lv: [] for lv in self.levels}
        for rec in self.records:
            out[rec.level].append(rec)
        return out


def generate_dataset(t: Topology, levels, tms_per_level: int, seed: int, mass_dist: str = "exponential") -> TrafficDataset:
    """``len(levels) * tms_per_level`` matrices, each from its own (seed, level, index) stream."""
    if tms_per_level < 1:
        raise ValueError("tms_per_level must be >= 1")
    cap = total_capacity(t)
    fractions = [lv.fraction if isinstance(lv, IntensityLevel) else float(lv) for lv in levels]
    records = []
    for li, frac in enumerate(fractions):
        for k in range(tms_per_level):
            tm = gravity_tm(t, frac * cap, [seed, li, k], mass_dist=mass_dist)
            records.append(TrafficRecord(li, frac, k, tm))
    return TrafficDataset(fractions, records)


def save_dataset(ds: TrafficDataset, path, header: str | None = None) -> None:
    lines = []
    if header:
        lines.append(f"# {header}")
    for rec in ds.records:
        lines.append(json.dumps({
            "level": rec.level,
            "index": rec.index,
            "total": rec.total,
            "demand": rec.tm.demand.tolist(),
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> TrafficDataset:
    levels: list[float] = []
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
            level = float(obj["level"])
            tm = TrafficMatrix(np.array(obj["demand"], dtype=float))
            index = int(obj["index"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad traffic record: {exc}") from exc
        if level not in levels:
            levels.append(level)
        records.append(TrafficRecord(levels.index(level), level, index, tm))
    return TrafficDataset(levels, records)
