"""Bayesian-network learning over discretized sensor streams.

Covers same-slice (static) networks and two-slice transition networks:
state counting, conditional probability table estimation, log-likelihood
scoring, greedy per-node parent search, and cycle repair for the static
case. Parent configurations are enumerated in mixed-radix order with the
first listed parent most significant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import StateMatrix

__all__ = [
    "Dag",
    "Cpt",
    "StaticNetwork",
    "TransitionNetwork",
    "count_states",
    "estimate_cpt",
    "make_cpt",
    "score",
    "family_score",
    "penalized_family_score",
    "k2_search",
    "repair_cycles",
    "learn_static",
    "learn_transition",
    "parent_marginal",
    "network_to_dict",
    "static_from_dict",
    "transition_from_dict",
]


@dataclass(frozen=True)
class Dag:
    """Directed graph over n nodes stored as per-node ordered parent tuples.

    Static networks must be acyclic (check_acyclic). Transition networks
    reuse the same structure with edges meaning "parent at t-1 -> child at
    t"; the unrolled two-slice graph is bipartite and cannot cycle, so the
    intra-slice view is allowed to look cyclic there.
    """

    n: int
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.parents) != self.n:
            raise ValueError(f"expected {self.n} parent sets, got {len(self.parents)}")
        parents = tuple(tuple(int(p) for p in ps) for ps in self.parents)
        object.__setattr__(self, "parents", parents)
        for i, ps in enumerate(parents):
            if len(set(ps)) != len(ps):
                raise ValueError(f"node {i} has duplicate parents")
            for p in ps:
                if not 0 <= p < self.n:
                    raise ValueError(f"node {i}: parent index {p} out of range")
                if p == i:
                    raise ValueError(f"node {i} cannot be its own parent")

    def edges(self) -> list[tuple[int, int]]:
        """All (parent, child) pairs."""
        return [(p, c) for c in range(self.n) for p in self.parents[c]]

    def is_acyclic(self) -> bool:
        indeg = [len(ps) for ps in self.parents]
        children: list[list[int]] = [[] for _ in range(self.n)]
        for c in range(self.n):
            for p in self.parents[c]:
                children[p].append(c)
        queue = [i for i in range(self.n) if indeg[i] == 0]
        seen = 0
        while queue:
            node = queue.pop()
            seen += 1
            for c in children[node]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return seen == self.n

    def check_acyclic(self) -> None:
        if not self.is_acyclic():
            raise ValueError("graph contains a directed cycle")

    def find_cycle(self) -> list[tuple[int, int]] | None:
        """First directed cycle found by DFS in ascending node order.

        Returned as (parent, child) edges in traversal order, or None.
        """
        children: list[list[int]] = [[] for _ in range(self.n)]
        for c in range(self.n):
            for p in self.parents[c]:
                children[p].append(c)
        for ch in children:
            ch.sort()

        color = [0] * self.n  # 0 unvisited, 1 on stack, 2 done
        stack: list[int] = []

        def visit(node: int) -> list[tuple[int, int]] | None:
            color[node] = 1
            stack.append(node)
            for child in children[node]:
                if color[child] == 1:
                    start = stack.index(child)
                    cyc = stack[start:] + [child]
                    return list(zip(cyc, cyc[1:]))
                if color[child] == 0:
                    found = visit(child)
                    if found is not None:
                        return found
            stack.pop()
            color[node] = 2
            return None

        for i in range(self.n):
            if color[i] == 0:
                found = visit(i)
                if found is not None:
                    return found
        return None


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table of one node given its ordered parents.

    table is H x K where H = K^|parents| parent configurations in
    mixed-radix order; counts is the tally the table was estimated from.
    Rows sum to one (empty-count rows are smoothed to uniform).
    """

    node: int
    parents: tuple[int, ...]
    table: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        table = np.array(self.table, dtype=float)
        counts = np.array(self.counts, dtype=np.int64)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if table.shape != counts.shape or table.ndim != 2:
            raise ValueError("table and counts must be 2-D and congruent")
        k = table.shape[1]
        if table.shape[0] != k ** len(self.parents):
            raise ValueError(f"expected {k ** len(self.parents)} configuration rows, got {table.shape[0]}")
        if (table < 0).any() or (table > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if np.abs(table.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("every table row must sum to 1")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")

    @property
    def state_count(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True)
class StaticNetwork:
    """Acyclic same-slice network: structure plus one CPT per node."""

    dag: Dag
    cpts: tuple[Cpt, ...]

    def __post_init__(self) -> None:
        self.dag.check_acyclic()
        if len(self.cpts) != self.dag.n:
            raise ValueError("need one CPT per node")


@dataclass(frozen=True)
class TransitionNetwork:
    """Two-slice network: per-node parents at t-1, transition CPTs, and
    single-slice marginal state priors."""

    dag: Dag
    cpts: tuple[Cpt, ...]
    priors: np.ndarray

    def __post_init__(self) -> None:
        priors = np.array(self.priors, dtype=float)
        object.__setattr__(self, "priors", priors)
        if len(self.cpts) != self.dag.n:
            raise ValueError("need one CPT per node")
        if priors.shape != (self.dag.n, self.cpts[0].state_count):
            raise ValueError(f"priors must be {self.dag.n} x {self.cpts[0].state_count}")
        if np.abs(priors.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("every prior must sum to 1")


def _config_index(states_0based: np.ndarray, k: int) -> np.ndarray:
    """Mixed-radix parent-configuration index; first column most significant."""
    idx = np.zeros(states_0based.shape[0], dtype=np.int64)
    for col in range(states_0based.shape[1]):
        idx = idx * k + states_0based[:, col]
    return idx


def count_states(states: StateMatrix, node: int, parents: Sequence[int], lag: int = 0) -> np.ndarray:
    """Tally node-state occurrences per parent configuration.

    lag=0 counts same-row co-occurrences; lag=1 counts the node's state at
    row t against the parents' states at row t-1 (t = 2..m). Returns an
    H x K integer matrix, H = K^|parents|.
    """
    parents = [int(p) for p in parents]
    k = states.state_count
    n = states.n
    if not 0 <= node < n:
        raise ValueError(f"node index {node} out of range")
    for p in parents:
        if not 0 <= p < n:
            raise ValueError(f"parent index {p} out of range")
    if lag not in (0, 1):
        raise ValueError(f"lag must be 0 or 1, got {lag}")
    if lag == 0 and node in parents:
        raise ValueError(f"node {node} cannot be its own same-slice parent")
    if lag == 1 and states.m < 2:
        raise ValueError("need at least 2 rows for transition counts")

    grid = states.states - 1
    if lag == 0:
        child = grid[:, node]
        pa = grid[:, parents] if parents else np.zeros((states.m, 0), dtype=np.int64)
    else:
        child = grid[1:, node]
        pa = grid[:-1, parents] if parents else np.zeros((states.m - 1, 0), dtype=np.int64)
    h = k ** len(parents)
    flat = _config_index(pa, k) * k + child
    return np.bincount(flat, minlength=h * k).reshape(h, k)


def estimate_cpt(counts: np.ndarray) -> np.ndarray:
    """Row-normalize counts into conditional probabilities.

    Rows observed at least once use the raw maximum-likelihood ratios; rows
    with zero total become uniform so downstream inference stays total.
    """
    counts = np.asarray(counts)
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    totals = counts.sum(axis=1, keepdims=True).astype(float)
    k = counts.shape[1]
    return np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / k)


def make_cpt(states: StateMatrix, node: int, parents: Sequence[int], lag: int = 0) -> Cpt:
    """Count and estimate in one step."""
    counts = count_states(states, node, parents, lag)
    return Cpt(node, tuple(parents), estimate_cpt(counts), counts)


def family_score(states: StateMatrix, node: int, parents: Sequence[int], lag: int = 0) -> float:
    """Maximum-likelihood log score of one node given its parents.

    Sum of N log(theta) over all cells, with empty cells contributing zero.
    """
    counts = count_states(states, node, parents, lag)
    totals = counts.sum(axis=1, keepdims=True)
    mask = counts > 0
    ratio = np.where(mask, counts / np.where(totals > 0, totals, 1), 1.0)
    return float(np.sum(np.where(mask, counts * np.log(ratio), 0.0)))


def penalized_family_score(states: StateMatrix, node: int, parents: Sequence[int], lag: int = 0) -> float:
    """Family log-likelihood minus a BIC penalty of (free parameters / 2) log m.

    The raw likelihood never decreases when parents are added, so greedy
    search without a node ordering needs the penalty to stop.
    """
    k = states.state_count
    free = (k ** len(parents)) * (k - 1)
    return family_score(states, node, parents, lag) - 0.5 * free * math.log(states.m)


def score(states: StateMatrix, dag: Dag, lag: int = 0) -> float:
    """Network log-likelihood: the sum of per-family scores (decomposable)."""
    return sum(family_score(states, i, dag.parents[i], lag) for i in range(dag.n))


def k2_search(states: StateMatrix, max_parents: int = 3, lag: int = 0) -> Dag:
    """Greedy per-node parent selection maximizing the penalized score.

    Each node independently adds the single other node that most improves
    its penalized family score until no candidate improves it or
    max_parents is reached. Ties break toward the lowest node index. The
    unconstrained per-node search can create cycles in the same-slice case,
    so lag=0 results pass through repair_cycles.
    """
    if max_parents < 0:
        raise ValueError(f"max_parents must be >= 0, got {max_parents}")
    n = states.n
    parent_sets: list[tuple[int, ...]] = []
    for node in range(n):
        chosen: list[int] = []
        current = penalized_family_score(states, node, chosen, lag)
        while len(chosen) < max_parents:
            best_gain = 0.0
            best_candidate = -1
            # Ascending candidate order makes equal-gain ties land on the
            # lowest node index.
            for cand in range(n):
                if cand == node or cand in chosen:
                    continue
                trial = penalized_family_score(states, node, chosen + [cand], lag)
                gain = trial - current
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best_candidate = cand
            if best_candidate < 0:
                break
            chosen.append(best_candidate)
            current += best_gain
        parent_sets.append(tuple(chosen))
    dag = Dag(n, tuple(parent_sets))
    if lag == 0:
        dag = repair_cycles(dag, states)
    return dag


def repair_cycles(dag: Dag, states: StateMatrix) -> Dag:
    """Delete edges until the graph is acyclic, losing as little score as possible.

    While a cycle exists, the edge on it whose removal costs the least
    penalized score is dropped; exact ties remove the lexicographically
    smallest (child, parent) pair.
    """
    parents = [list(ps) for ps in dag.parents]
    while True:
        current = Dag(dag.n, tuple(tuple(ps) for ps in parents))
        cycle = current.find_cycle()
        if cycle is None:
            return current
        best: tuple[float, int, int] | None = None
        for parent, child in cycle:
            with_parent = penalized_family_score(states, child, parents[child], lag=0)
            reduced = [p for p in parents[child] if p != parent]
            without = penalized_family_score(states, child, reduced, lag=0)
            loss = with_parent - without
            key = (loss, child, parent)
            if best is None or key < best:
                best = key
        _, child, parent = best
        parents[child] = [p for p in parents[child] if p != parent]


def learn_static(states: StateMatrix, max_parents: int = 3) -> StaticNetwork:
    """Greedy structure search plus CPT estimation for the same-slice network."""
    dag = k2_search(states, max_parents, lag=0)
    cpts = tuple(make_cpt(states, i, dag.parents[i], lag=0) for i in range(dag.n))
    return StaticNetwork(dag, cpts)


def learn_transition(states: StateMatrix, max_parents: int = 3) -> TransitionNetwork:
    """Learn the two-slice network: cross-slice parents, transition CPTs, priors.

    Cross-slice edges cannot form cycles in the unrolled graph, so no
    repair pass is needed. Priors are single-slice marginal state
    frequencies.
    """
    if states.m < 2:
        raise ValueError("need at least 2 rows to learn transitions")
    dag = k2_search(states, max_parents, lag=1)
    cpts = tuple(make_cpt(states, i, dag.parents[i], lag=1) for i in range(dag.n))
    k = states.state_count
    priors = np.empty((states.n, k))
    for i in range(states.n):
        priors[i] = np.bincount(states.states[:, i] - 1, minlength=k) / states.m
    return TransitionNetwork(dag, cpts, priors)


def parent_marginal(cpt: Cpt, position: int, parent_state: int) -> np.ndarray:
    """Single-parent conditional P(node | one parent), marginalizing the others.

    Count-weighted: joint-configuration counts are summed over every
    configuration in which the parent at `position` sits in `parent_state`
    (1-based), then normalized (uniform if that slice was never observed).
    """
    p = len(cpt.parents)
    if not 0 <= position < p:
        raise ValueError(f"parent position {position} out of range")
    k = cpt.state_count
    if not 1 <= parent_state <= k:
        raise ValueError(f"parent state {parent_state} outside 1..{k}")
    digits = (np.arange(cpt.counts.shape[0]) // (k ** (p - 1 - position))) % k
    rows = cpt.counts[digits == parent_state - 1]
    sums = rows.sum(axis=0).astype(float)
    total = sums.sum()
    if total <= 0:
        return np.full(k, 1.0 / k)
    return sums / total


def _cpt_to_dict(cpt: Cpt) -> dict:
    return {
        "node": int(cpt.node),
        "parents": [int(p) for p in cpt.parents],
        "table": [[float(v) for v in row] for row in cpt.table],
        "counts": [[int(v) for v in row] for row in cpt.counts],
    }


def _cpt_from_dict(doc: dict) -> Cpt:
    return Cpt(int(doc["node"]), tuple(doc["parents"]), np.array(doc["table"]), np.array(doc["counts"]))


def network_to_dict(net: StaticNetwork | TransitionNetwork, node_ids: Sequence[str]) -> dict:
    """JSON-ready representation shared by both network kinds."""
    doc = {
        "node_ids": list(node_ids),
        "parents": [list(ps) for ps in net.dag.parents],
        "cpts": [_cpt_to_dict(c) for c in net.cpts],
    }
    if isinstance(net, TransitionNetwork):
        doc["priors"] = [[float(v) for v in row] for row in net.priors]
    return doc


def static_from_dict(doc: dict) -> StaticNetwork:
    dag = Dag(len(doc["parents"]), tuple(tuple(ps) for ps in doc["parents"]))
    return StaticNetwork(dag, tuple(_cpt_from_dict(c) for c in doc["cpts"]))


def transition_from_dict(doc: dict) -> TransitionNetwork:
    dag = Dag(len(doc["parents"]), tuple(tuple(ps) for ps in doc["parents"]))
    return TransitionNetwork(dag, tuple(_cpt_from_dict(c) for c in doc["cpts"]), np.array(doc["priors"]))
