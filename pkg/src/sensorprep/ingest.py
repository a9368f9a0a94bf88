"""Sensor dataset loading, synthesis, standardization, discretization, and error injection.

Every other module consumes the types defined here. Datasets are dense
real-valued matrices (m samples x n nodes); discrete state matrices use the
1-based alphabet {1..K}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "SensorDataset",
    "Standardization",
    "DiscretizationScheme",
    "StateMatrix",
    "load_csv",
    "write_csv",
    "standardize",
    "apply_standardization",
    "fit_discretization",
    "discretize",
    "discretize_row",
    "inject_errors",
    "synth_generate",
]


def _first_duplicate(items) -> str | None:
    seen: set[str] = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


@dataclass(frozen=True)
class SensorDataset:
    """Dense matrix of readings: m time-ordered samples by n sensor nodes.

    Values must be finite; node ids distinct; timestamps (epoch seconds),
    when present, strictly increasing. Instances are treated as immutable
    and safe to share between concurrent readers.
    """

    values: np.ndarray
    node_ids: tuple[str, ...]
    timestamps: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_ids", tuple(str(s) for s in self.node_ids))
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        m, n = values.shape
        if m < 2:
            raise ValueError(f"need at least 2 samples, got {m}")
        if n < 1:
            raise ValueError("need at least 1 node")
        if len(self.node_ids) != n:
            raise ValueError(f"{n} columns but {len(self.node_ids)} node ids")
        dup = _first_duplicate(self.node_ids)
        if dup is not None:
            raise ValueError(f"duplicate node id {dup!r}")
        if not np.isfinite(values).all():
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {i + 1}, column {self.node_ids[j]!r}")
        if self.timestamps is not None:
            stamps = tuple(int(t) for t in self.timestamps)
            object.__setattr__(self, "timestamps", stamps)
            if len(stamps) != m:
                raise ValueError(f"{m} rows but {len(stamps)} timestamps")
            if any(b <= a for a, b in zip(stamps, stamps[1:])):
                raise ValueError("timestamps must be strictly increasing")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Standardization:
    """Per-node training means and sample variances (1/(m-1) divisor)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "means", np.array(self.means, dtype=float))
        object.__setattr__(self, "variances", np.array(self.variances, dtype=float))
        if self.means.shape != self.variances.shape or self.means.ndim != 1:
            raise ValueError("means and variances must be equal-length vectors")
        if not (self.variances > 0).all():
            raise ValueError("variances must be strictly positive")

    @property
    def n(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class DiscretizationScheme:
    """Per-node interior bin edges mapping reals onto states {1..K}.

    Each node carries exactly K-1 strictly increasing edges; values below
    the first edge map to state 1, values at or above the last edge map to
    state K, and a value equal to an edge goes to the higher bin.
    """

    edges: tuple[np.ndarray, ...]
    state_count: int
    node_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.state_count < 2:
            raise ValueError(f"state_count must be >= 2, got {self.state_count}")
        edges = tuple(np.array(e, dtype=float) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.node_ids is not None:
            object.__setattr__(self, "node_ids", tuple(self.node_ids))
        for j, e in enumerate(edges):
            if e.shape != (self.state_count - 1,):
                raise ValueError(f"node {j}: expected {self.state_count - 1} edges, got {e.shape}")
            if not (np.diff(e) > 0).all():
                raise ValueError(f"node {j}: edges must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class StateMatrix:
    """Discrete m x n matrix over {1..K} plus the scheme that produced it."""

    states: np.ndarray
    scheme: DiscretizationScheme

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=np.int64)
        object.__setattr__(self, "states", states)
        if states.ndim != 2:
            raise ValueError("states must be a 2-D matrix")
        k = self.scheme.state_count
        if states.size and (states.min() < 1 or states.max() > k):
            raise ValueError(f"states must lie in 1..{k}")

    @property
    def m(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def state_count(self) -> int:
        return self.scheme.state_count


def load_csv(path: str | Path) -> SensorDataset:
    """Load a dataset from UTF-8 comma-separated text.

    First row is the header of node ids; an optional leading column named
    "timestamp" holds integer epoch seconds. Any cell that does not parse
    as a finite real is an error naming its (1-based) data row and column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_ts = bool(header) and header[0] == "timestamp"
        node_ids = header[1:] if has_ts else header
        if not node_ids:
            raise ValueError(f"{path}: header contains no node ids")
        dup = _first_duplicate(node_ids)
        if dup is not None:
            raise ValueError(f"{path}: duplicate node id {dup!r}")

        rows: list[list[float]] = []
        stamps: list[int] = []
        for r, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise ValueError(f"{path}: row {r} has {len(record)} cells, expected {len(header)}")
            if has_ts:
                try:
                    stamps.append(int(record[0]))
                except ValueError:
                    raise ValueError(f"{path}: row {r}, column 'timestamp': bad integer {record[0]!r}") from None
            cells = record[1:] if has_ts else record
            parsed = []
            for j, cell in enumerate(cells):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: row {r}, column {node_ids[j]!r}: not a number ({cell!r})") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: row {r}, column {node_ids[j]!r}: non-finite value ({cell!r})")
                parsed.append(v)
            rows.append(parsed)

    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return SensorDataset(np.array(rows), tuple(node_ids), tuple(stamps) if has_ts else None)


def write_csv(data: SensorDataset, path: str | Path) -> None:
    """Write a dataset in the format load_csv reads, with full float precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if data.timestamps is not None:
            writer.writerow(("timestamp",) + data.node_ids)
            for ts, row in zip(data.timestamps, data.values):
                writer.writerow([ts] + [repr(float(v)) for v in row])
        else:
            writer.writerow(data.node_ids)
            for row in data.values:
                writer.writerow([repr(float(v)) for v in row])


def standardize(data: SensorDataset) -> tuple[np.ndarray, Standardization]:
    """Center each column on its mean and scale to unit sample variance.

    Returns the standardized matrix and the fitted parameters. A column
    with zero sample variance is a hard error naming the node; callers may
    drop that node explicitly instead.
    """
    means = data.values.mean(axis=0)
    variances = data.values.var(axis=0, ddof=1)
    for j, v in enumerate(variances):
        if v <= 0.0:
            raise ValueError(f"node {data.node_ids[j]!r} has zero variance; drop it before standardizing")
    std = Standardization(means, variances)
    xbar = (data.values - means) / np.sqrt(variances)
    return xbar, std


def apply_standardization(row: np.ndarray, std: Standardization) -> np.ndarray:
    """Standardize one raw sample with training parameters (never refit)."""
    row = np.asarray(row, dtype=float)
    if row.shape != (std.n,):
        raise ValueError(f"row has shape {row.shape}, expected ({std.n},)")
    return (row - std.means) / np.sqrt(std.variances)


def fit_discretization(data: SensorDataset, state_count: int = 3) -> DiscretizationScheme:
    """Fit equal-width bins over each training column's [min, max] range."""
    if state_count < 2:
        raise ValueError(f"state_count must be >= 2, got {state_count}")
    edges = []
    for j in range(data.n):
        lo = data.values[:, j].min()
        hi = data.values[:, j].max()
        if lo >= hi:
            raise ValueError(f"node {data.node_ids[j]!r} has degenerate range [{lo}, {hi}]")
        edges.append(np.linspace(lo, hi, state_count + 1)[1:-1])
    return DiscretizationScheme(tuple(edges), state_count, data.node_ids)


def discretize_row(row: np.ndarray, scheme: DiscretizationScheme) -> np.ndarray:
    """Map one raw sample onto states {1..K}; out-of-range values clamp to edge bins."""
    row = np.asarray(row, dtype=float)
    if row.shape != (scheme.n,):
        raise ValueError(f"row has shape {row.shape}, expected ({scheme.n},)")
    out = np.empty(scheme.n, dtype=np.int64)
    for j in range(scheme.n):
        # side='right' sends a value equal to an edge into the higher bin
        out[j] = 1 + np.searchsorted(scheme.edges[j], row[j], side="right")
    return out


def discretize(data: SensorDataset, scheme: DiscretizationScheme) -> StateMatrix:
    """Map every sample onto the scheme's state alphabet."""
    if data.n != scheme.n:
        raise ValueError(f"dataset has {data.n} nodes but scheme covers {scheme.n}")
    states = np.empty(data.values.shape, dtype=np.int64)
    for j in range(data.n):
        states[:, j] = 1 + np.searchsorted(scheme.edges[j], data.values[:, j], side="right")
    return StateMatrix(states, scheme)


def inject_errors(
    data: SensorDataset,
    rows: Iterable[int],
    pct: float,
    training_means: np.ndarray,
) -> SensorDataset:
    """Add per-node offsets mean_j * pct to every node of the selected rows.

    The offsets use the training-set means, not the means of `data`, so the
    same corruption can be applied to held-out test rows.
    """
    rows = sorted(set(int(r) for r in rows))
    if not rows:
        raise ValueError("no rows selected for injection")
    if rows[0] < 0 or rows[-1] >= data.m:
        bad = rows[0] if rows[0] < 0 else rows[-1]
        raise ValueError(f"row index {bad} out of range 0..{data.m - 1}")
    if pct < 0:
        raise ValueError(f"error percentage must be >= 0, got {pct}")
    means = np.asarray(training_means, dtype=float)
    if means.shape != (data.n,):
        raise ValueError(f"training_means has shape {means.shape}, expected ({data.n},)")
    values = data.values.copy()
    values[rows, :] += means * pct
    return SensorDataset(values, data.node_ids, data.timestamps)


def _markov_levels(rng: np.random.Generator, m: int, levels: int, stay: float) -> np.ndarray:
    """Level-switching process: keep the current level w.p. `stay`, else jump uniformly."""
    out = np.empty(m, dtype=np.int64)
    out[0] = rng.integers(levels)
    for t in range(1, m):
        if rng.random() < stay:
            out[t] = out[t - 1]
        else:
            step = rng.integers(1, levels)
            out[t] = (out[t - 1] + step) % levels
    return out


def _gen_correlated_drift(
    rng: np.random.Generator,
    m: int,
    n: int,
    latents: int = 2,
    noise: float = 0.25,
    offset_low: float = 20.0,
    offset_high: float = 40.0,
) -> np.ndarray:
    """Smooth latent signals mixed linearly into n channels plus channel noise.

    Channels carry large baseline offsets so that mean-proportional error
    injection produces visible shifts, mimicking slowly drifting
    temperature/humidity readings.
    """
    t = np.arange(m, dtype=float)
    lat = np.empty((m, latents))
    for l in range(latents):
        cycles = rng.uniform(3.0, 8.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        lat[:, l] = np.sin(2.0 * np.pi * cycles * t / m + phase)
    weights = rng.uniform(0.5, 1.5, size=(latents, n)) * rng.choice([-1.0, 1.0], size=(latents, n))
    offsets = rng.uniform(offset_low, offset_high, size=n)
    return offsets + lat @ weights + noise * rng.standard_normal((m, n))


def _gen_copy_child(
    rng: np.random.Generator,
    m: int,
    n: int,
    copies: Mapping[int, int] | None = None,
    levels: int = 3,
    stay: float = 0.9,
    flip: float = 0.0,
    meas_noise: float = 0.05,
    child_noise: float | None = None,
) -> np.ndarray:
    """Copy children re-reading designated parent nodes at the same instant.

    Parents of copies are persistent level-switchers (their own past
    predicts them, which keeps them inferable); remaining nodes draw
    independent levels each step so they carry no structure at all. With
    flip == 0 and child_noise == 0 a child column equals its parent column
    exactly; otherwise the child re-reads the parent's level signal with a
    per-sample flip probability and its own measurement noise.
    """
    if copies is None:
        copies = {1: 0} if n >= 2 else {}
    copies = {int(c): int(p) for c, p in copies.items()}
    for c, p in copies.items():
        if not (0 <= c < n and 0 <= p < n) or c == p or p in copies:
            raise ValueError(f"bad copy assignment {c} <- {p}")
    if child_noise is None:
        child_noise = meas_noise
    parent_nodes = set(copies.values())

    signal = np.empty((m, n))
    for j in range(n):
        if j in copies:
            continue
        if j in parent_nodes:
            signal[:, j] = _markov_levels(rng, m, levels, stay).astype(float)
        else:
            signal[:, j] = rng.integers(0, levels, size=m).astype(float)
    values = np.empty((m, n))
    for j in range(n):
        if j not in copies:
            values[:, j] = signal[:, j] + meas_noise * rng.standard_normal(m)
    for c, p in sorted(copies.items()):
        if flip == 0.0 and child_noise == 0.0:
            values[:, c] = values[:, p]
            continue
        child_sig = signal[:, p].copy()
        flip_mask = rng.random(m) < flip
        for t in np.nonzero(flip_mask)[0]:
            step = rng.integers(1, levels)
            child_sig[t] = (child_sig[t] + step) % levels
        values[:, c] = child_sig + child_noise * rng.standard_normal(m)
    return values


def _gen_lagged_copy(
    rng: np.random.Generator,
    m: int,
    n: int,
    copies: Mapping[int, int] | None = None,
    levels: int = 3,
    noise_frac: float = 0.0,
) -> np.ndarray:
    """Children repeat their parent's reading one step late; drivers are i.i.d. levels.

    noise_frac scales additive child noise relative to the driver signal's
    standard deviation ("signal scale").
    """
    if copies is None:
        copies = {1: 0} if n >= 2 else {}
    copies = {int(c): int(p) for c, p in copies.items()}
    for c, p in copies.items():
        if not (0 <= c < n and 0 <= p < n) or c == p or p in copies:
            raise ValueError(f"bad copy assignment {c} <- {p}")

    # One extra leading step so the child has a parent value at t=0.
    steps = {p: rng.integers(0, levels, size=m + 1).astype(float) for p in set(copies.values())}
    values = np.empty((m, n))
    for j in range(n):
        if j in copies:
            continue
        if j in steps:
            values[:, j] = steps[j][1:]
        else:
            values[:, j] = rng.integers(0, levels, size=m).astype(float)
    for c, p in sorted(copies.items()):
        lagged = steps[p][:-1]
        if noise_frac == 0.0:
            values[:, c] = lagged
        else:
            sigma = noise_frac * float(np.std(steps[p][1:]))
            values[:, c] = lagged + sigma * rng.standard_normal(m)
    return values


_PROFILES = {
    "correlated-drift": _gen_correlated_drift,
    "copy-child": _gen_copy_child,
    "lagged-copy": _gen_lagged_copy,
}


def synth_generate(seed: int, m: int, n: int, profile: str, **params) -> SensorDataset:
    """Generate a deterministic synthetic dataset for the named profile.

    Profiles: "correlated-drift" (latent smooth signals mixed into
    channels), "copy-child" (same-time copy nodes for static redundancy
    ground truth), "lagged-copy" (one-step-late copies for real-time
    redundancy ground truth).
    """
    if m < 2 or n < 1:
        raise ValueError(f"need m >= 2 and n >= 1, got m={m}, n={n}")
    try:
        gen = _PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(_PROFILES)}") from None
    rng = np.random.default_rng(seed)
    values = gen(rng, m, n, **params)
    node_ids = tuple(f"node{j:02d}" for j in range(n))
    return SensorDataset(values, node_ids)
