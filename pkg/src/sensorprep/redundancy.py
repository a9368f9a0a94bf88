"""Redundant-node detection and recovery of redundant readings.

Static mode (SSDRDA) inspects the learned same-slice network: a node whose
state is near-determined by its parents across parent configurations is
redundant. Real-time mode (RSDRDA) re-learns a transition network per time
slice and puts a node to sleep whenever its state can be inferred
confidently from the previous step, propagating inferred posteriors as
soft evidence for parents that are themselves asleep. Sleeping readings
are reconstructed as a similarity-weighted mean of parent readings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bayesnet import Cpt, Dag, TransitionNetwork, learn_transition
from .ingest import DiscretizationScheme, SensorDataset, discretize

__all__ = [
    "StaticNodeResult",
    "StaticRedundancyReport",
    "ScheduleEntry",
    "RecoveryEntry",
    "RealtimeRedundancyReport",
    "ssdrda",
    "rsdrda_infer",
    "rsdrda_schedule",
    "recover",
    "static_recovery",
    "static_report_to_dict",
    "realtime_report_to_dict",
    "write_static_csv",
    "write_realtime_csv",
    "write_recovery_csv",
]


@dataclass(frozen=True)
class StaticNodeResult:
    node: int
    redundant: bool
    criterion: float
    witness: tuple[float, ...]  # per-parent-configuration row maxima


@dataclass(frozen=True)
class StaticRedundancyReport:
    tau: float
    nodes: tuple[StaticNodeResult, ...]
    recoveries: tuple["RecoveryEntry", ...] = ()

    def redundant_nodes(self) -> list[int]:
        return [r.node for r in self.nodes if r.redundant]


@dataclass(frozen=True)
class ScheduleEntry:
    t: int
    node: int
    sleeping: bool
    max_posterior: float | None  # None for parentless nodes, which never sleep


@dataclass(frozen=True)
class RecoveryEntry:
    t: int
    node: int
    estimate: float
    actual: float


@dataclass(frozen=True)
class RealtimeRedundancyReport:
    tau: float
    slice_len: int
    train_frac: float
    entries: tuple[ScheduleEntry, ...]
    recoveries: tuple[RecoveryEntry, ...]

    def sleeping_fraction(self, node: int) -> float:
        relevant = [e for e in self.entries if e.node == node]
        if not relevant:
            return 0.0
        return sum(e.sleeping for e in relevant) / len(relevant)


def ssdrda(dag: Dag, cpts: Sequence[Cpt], tau: float = 0.95) -> StaticRedundancyReport:
    """Static redundancy detection over a learned same-slice network.

    A node is redundant when the mean over parent configurations of the
    most likely state's conditional mass reaches tau; parentless nodes are
    never redundant.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    dag.check_acyclic()
    results = []
    for node in range(dag.n):
        if not dag.parents[node]:
            results.append(StaticNodeResult(node, False, 0.0, ()))
            continue
        maxima = cpts[node].table.max(axis=1)
        criterion = float(maxima.mean())
        results.append(StaticNodeResult(node, criterion >= tau, criterion, tuple(float(v) for v in maxima)))
    return StaticRedundancyReport(tau, tuple(results))


def rsdrda_infer(node: int, tn: TransitionNetwork, parent_evidence: Sequence[np.ndarray]) -> np.ndarray:
    """Posterior over a node's states given soft evidence on its parents.

    Sums the transition table over every joint parent configuration,
    weighting each configuration by the product of the per-parent evidence
    distributions, then normalizes.
    """
    parents = tn.dag.parents[node]
    if not parents:
        raise ValueError(f"node {node} has no transition parents")
    if len(parent_evidence) != len(parents):
        raise ValueError(f"expected {len(parents)} evidence vectors, got {len(parent_evidence)}")
    k = tn.cpts[node].state_count
    weights = np.ones(1)
    for ev in parent_evidence:
        ev = np.asarray(ev, dtype=float)
        if ev.shape != (k,):
            raise ValueError(f"evidence vector has shape {ev.shape}, expected ({k},)")
        weights = np.outer(weights, ev).ravel()
    posterior = weights @ tn.cpts[node].table
    total = posterior.sum()
    if total <= 0.0:
        raise ArithmeticError("evidence assigns zero mass to every configuration")
    return posterior / total


def recover(parent_values: Sequence[float], dissimilarities: Sequence[float]) -> float:
    """Weighted mean of parent readings, weights inverse to dissimilarity.

    A zero dissimilarity short-circuits to that parent's value (first such
    parent wins); a single parent is returned unchanged regardless of its
    weight.
    """
    values = [float(v) for v in parent_values]
    dists = [float(d) for d in dissimilarities]
    if not values:
        raise ValueError("need at least one parent value")
    if len(values) != len(dists):
        raise ValueError("values and dissimilarities must align")
    if any(d < 0 for d in dists):
        raise ValueError("dissimilarities must be nonnegative")
    if len(values) == 1:
        return values[0]
    for v, d in zip(values, dists):
        if d == 0.0:
            return v
    w = [1.0 / d for d in dists]
    return sum(wi * vi for wi, vi in zip(w, values)) / sum(w)


def static_recovery(data: SensorDataset, dag: Dag, redundant_nodes: Sequence[int]) -> tuple[RecoveryEntry, ...]:
    """Reconstruct every reading of each redundant node from its same-time parents.

    Weights follow the inverse of the RMS distance between standardized
    columns of the full dataset.
    """
    out: list[RecoveryEntry] = []
    for node in redundant_nodes:
        parents = dag.parents[node]
        if not parents:
            raise ValueError(f"node {node} has no parents to recover from")
        dists = _training_dissimilarities(data.values, node, parents)
        for t in range(data.m):
            estimate = recover([data.values[t, p] for p in parents], dists)
            out.append(RecoveryEntry(t, node, estimate, float(data.values[t, node])))
    return tuple(out)


def _point_mass(state: int, k: int) -> np.ndarray:
    out = np.zeros(k)
    out[state - 1] = 1.0
    return out


def _training_dissimilarities(window: np.ndarray, node: int, parents: Sequence[int]) -> list[float]:
    """RMS distance between standardized training columns of node and each parent.

    Columns that are constant within the window standardize to zeros.
    """
    cols = {}
    for j in set([node, *parents]):
        col = window[:, j]
        sd = col.std(ddof=1)
        cols[j] = (col - col.mean()) / sd if sd > 0 else np.zeros_like(col)
    return [float(np.sqrt(np.mean((cols[node] - cols[p]) ** 2))) for p in parents]


def rsdrda_schedule(
    data: SensorDataset,
    slice_len: int,
    train_frac: float = 0.6,
    tau: float = 0.95,
    scheme: DiscretizationScheme | None = None,
    max_parents: int = 3,
) -> RealtimeRedundancyReport:
    """Per-slice cycle of collecting, learning, and working-state inference.

    Each full slice spends its first train_frac portion with every node
    waking, learns a transition network from that window, then walks the
    remaining steps: a node sleeps at step t when the posterior inferred
    from its parents' evidence at t-1 concentrates at least tau on one
    state. Waking parents contribute point-mass evidence at their observed
    state; sleeping parents contribute the posterior inferred for them.
    Sleeping readings are recovered from parent readings at t-1 and never
    fed back into later training. Trailing rows that do not fill a slice
    are skipped.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    if slice_len > data.m:
        raise ValueError(f"data has {data.m} rows, shorter than one slice of {slice_len}")
    train_len = int(round(slice_len * train_frac))
    if train_len < 2:
        raise ValueError(f"training portion of {train_len} samples is too short")
    if train_len >= slice_len:
        raise ValueError("training portion leaves no inference steps")
    if scheme is None:
        from .ingest import fit_discretization

        scheme = fit_discretization(data)
    states_all = discretize(data, scheme).states
    k = scheme.state_count
    n = data.n

    entries: list[ScheduleEntry] = []
    recoveries: list[RecoveryEntry] = []
    for start in range(0, data.m - slice_len + 1, slice_len):
        window = data.values[start : start + train_len]
        train_states = discretize(
            SensorDataset(window, data.node_ids), scheme
        )
        tn = learn_transition(train_states, max_parents)
        dissim = {
            node: _training_dissimilarities(window, node, tn.dag.parents[node])
            for node in range(n)
            if tn.dag.parents[node]
        }

        # Evidence at the last training step: everything is awake.
        evidence = [_point_mass(int(states_all[start + train_len - 1, j]), k) for j in range(n)]
        for t in range(start + train_len, start + slice_len):
            next_evidence: list[np.ndarray] = [None] * n  # type: ignore[list-item]
            for node in range(n):
                parents = tn.dag.parents[node]
                if not parents:
                    entries.append(ScheduleEntry(t, node, False, None))
                    next_evidence[node] = _point_mass(int(states_all[t, node]), k)
                    continue
                posterior = rsdrda_infer(node, tn, [evidence[p] for p in parents])
                max_post = float(posterior.max())
                sleeping = max_post >= tau
                entries.append(ScheduleEntry(t, node, sleeping, max_post))
                if sleeping:
                    estimate = recover([data.values[t - 1, p] for p in parents], dissim[node])
                    recoveries.append(RecoveryEntry(t, node, estimate, float(data.values[t, node])))
                    next_evidence[node] = posterior
                else:
                    next_evidence[node] = _point_mass(int(states_all[t, node]), k)
            evidence = next_evidence
    return RealtimeRedundancyReport(tau, slice_len, train_frac, tuple(entries), tuple(recoveries))


def _recoveries_to_dicts(recoveries: Sequence[RecoveryEntry], node_ids: Sequence[str]) -> list[dict]:
    return [
        {
            "t": r.t,
            "node": r.node,
            "node_id": node_ids[r.node],
            "estimate": float(r.estimate),
            "actual": float(r.actual),
        }
        for r in recoveries
    ]


def static_report_to_dict(report: StaticRedundancyReport, node_ids: Sequence[str]) -> dict:
    return {
        "mode": "static",
        "tau": float(report.tau),
        "nodes": [
            {
                "node": r.node,
                "node_id": node_ids[r.node],
                "redundant": r.redundant,
                "criterion": float(r.criterion),
                "witness": [float(v) for v in r.witness],
            }
            for r in report.nodes
        ],
        "recoveries": _recoveries_to_dicts(report.recoveries, node_ids),
    }


def realtime_report_to_dict(report: RealtimeRedundancyReport, node_ids: Sequence[str]) -> dict:
    return {
        "mode": "realtime",
        "tau": float(report.tau),
        "slice_len": int(report.slice_len),
        "train_frac": float(report.train_frac),
        "entries": [
            {
                "t": e.t,
                "node": e.node,
                "node_id": node_ids[e.node],
                "state": "sleeping" if e.sleeping else "waking",
                "max_posterior": None if e.max_posterior is None else float(e.max_posterior),
            }
            for e in report.entries
        ],
        "recoveries": _recoveries_to_dicts(report.recoveries, node_ids),
    }


def write_static_csv(report: StaticRedundancyReport, node_ids: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "redundant", "criterion"])
        for r in report.nodes:
            writer.writerow([node_ids[r.node], int(r.redundant), repr(r.criterion)])


def write_realtime_csv(report: RealtimeRedundancyReport, node_ids: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node", "state", "max_posterior"])
        for e in report.entries:
            writer.writerow(
                [
                    e.t,
                    node_ids[e.node],
                    "sleeping" if e.sleeping else "waking",
                    "" if e.max_posterior is None else repr(e.max_posterior),
                ]
            )


def write_recovery_csv(recoveries: Sequence[RecoveryEntry], node_ids: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "node", "estimate", "actual", "abs_error"])
        for r in recoveries:
            writer.writerow(
                [r.t, node_ids[r.node], repr(r.estimate), repr(r.actual), repr(abs(r.estimate - r.actual))]
            )
