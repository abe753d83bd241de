"""Space-time matching decoder with optional loss-aware reweighting.

Each check type gets its own detector graph.  Nodes are ``(check, layer)``
for layers ``0..cycles`` (the last layer is the ideal read-out) plus one
boundary sink.  Edges carry an integer weight ``round(SCALE * ln((1-p)/p))``
and the data-qubit Pauli mask they imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .blossom import max_weight_matching
from .frame_simulator import ShotBatch, SimulationContext
from .noise_channels import LOST

__all__ = [
    "DetectorGraph",
    "Decoder",
    "MatchingResult",
    "build_detector_graph",
    "mwpm",
    "substitute_losses",
    "detection_events",
    "edge_weight",
    "SCALE",
    "P_FLOOR",
]

SCALE = 10_000
P_FLOOR = 1e-12  # keeps every elementary fault location present in the graph


def edge_weight(p: float) -> int:
    if p > 0.5:
        raise ValueError(f"edge probability {p:.4g} > 1/2 is outside matching validity")
    return max(1, int(round(SCALE * math.log((1.0 - p) / p))))


def _xor_merge(p1: float, p2: float) -> float:
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


@dataclass
class DetectorGraph:
    """Detector graph for the checks of one Pauli type.

    ``kind`` is the type of the detecting checks; they see errors of the other
    Pauli type.  ``sink`` is the boundary node.
    """

    kind: str
    checks: list[int]  # global stabilizer indices
    cycles: int
    n_data: int
    edge_u: list[int] = field(default_factory=list)
    edge_v: list[int] = field(default_factory=list)
    edge_p: list[float] = field(default_factory=list)
    edge_mask: list[int] = field(default_factory=list)
    edge_best: list[float] = field(default_factory=list)
    index: dict = field(default_factory=dict)
    prefix_edges: dict = field(default_factory=dict)  # (check, cycle) -> set of edge ids
    time_edge: dict = field(default_factory=dict)  # (check, cycle) -> edge id

    def __post_init__(self):
        self.local = {s: i for i, s in enumerate(self.checks)}
        self.sink = (self.cycles + 1) * len(self.checks)

    @property
    def n_nodes(self) -> int:
        return self.sink + 1

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def node(self, check: int, layer: int) -> int:
        return layer * len(self.checks) + self.local[check]

    def describe(self, node: int) -> tuple[int, int] | str:
        if node == self.sink:
            return "boundary"
        layer, i = divmod(node, len(self.checks))
        return self.checks[i], layer

    def add(self, a: int, b: int, p: float, mask: int) -> int:
        if a == b:
            raise ValueError("self-loop in detector graph")
        key = (min(a, b), max(a, b))
        k = self.index.get(key)
        if k is None:
            k = len(self.edge_u)
            self.index[key] = k
            self.edge_u.append(key[0])
            self.edge_v.append(key[1])
            self.edge_p.append(p)
            self.edge_mask.append(mask)
            self.edge_best.append(p)
        else:
            self.edge_p[k] = _xor_merge(self.edge_p[k], p)
            if p > self.edge_best[k]:
                self.edge_best[k], self.edge_mask[k] = p, mask
        return k

    def finalize(self) -> None:
        self.weights = np.array([edge_weight(p) for p in self.edge_p], dtype=np.int64)
        u = np.array(self.edge_u)
        v = np.array(self.edge_v)
        # boundary edges only point into the sink so no path passes through it
        inner = v != self.sink
        rows = np.concatenate([u, v[inner]])
        cols = np.concatenate([v, u[inner]])
        eid = np.concatenate([np.arange(len(u)), np.nonzero(inner)[0]])
        order = np.lexsort((cols, rows))
        self._rows, self._cols, self._eid = rows[order], cols[order], eid[order]
        self._indptr = np.searchsorted(self._rows, np.arange(self.n_nodes + 1))
        self._positions = [[] for _ in range(len(u))]
        for pos, k in enumerate(self._eid):
            self._positions[k].append(pos)

    def csr(self, weights: np.ndarray | None = None) -> csr_matrix:
        w = self.weights if weights is None else weights
        return csr_matrix(
            (w[self._eid].astype(float), self._cols, self._indptr), shape=(self.n_nodes, self.n_nodes)
        )

    def all_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached shortest paths under the base weights."""
        if getattr(self, "_apsp", None) is None:
            dist, pred = dijkstra(self.csr(), directed=True, return_predecessors=True)
            self._apsp = (dist, pred.astype(np.int32))
        return self._apsp

    def path_mask(self, pred_row: np.ndarray, target: int) -> int:
        mask = 0
        cur = target
        while True:
            prev = pred_row[cur]
            if prev < 0:
                break
            mask ^= self.edge_mask[self.index[(min(prev, cur), max(prev, cur))]]
            cur = prev
        return mask

    def to_dot(self) -> str:
        lines = ["graph detectors {"]
        for u, v, w in zip(self.edge_u, self.edge_v, self.weights):
            lines.append(f'  "{self.describe(u)}" -- "{self.describe(v)}" [weight={w}];')
        lines.append("}")
        return "\n".join(lines)


def _mask_of(qubits) -> int:
    m = 0
    for q in qubits:
        m ^= 1 << int(q)
    return m


def build_detector_graph(ctx: SimulationContext, kind: str, loss_prior: bool = False) -> DetectorGraph:
    """Detector graph for checks of ``kind`` ("X" or "Z") under the context's noise.

    Space edges come from dephasing and the twirled mask marginals, time edges
    from the outcome-flip marginals.  Loss backaction is only given the floor
    probability unless ``loss_prior`` is set, in which case the prefix faults
    and the stale-value effect of substituting lost outcomes enter with their
    model probabilities.
    """
    layout, structure = ctx.layout, ctx.structure
    err = "Z" if kind == "X" else "X"
    checks = layout.indices(kind)
    sources = layout.indices(err)  # checks whose backaction lands in this graph
    graph = DetectorGraph(kind, checks, ctx.cycles, layout.n_data)
    rounds = structure.round_of()
    C = ctx.cycles

    touching = [[] for _ in range(layout.n_data)]
    for s in checks:
        for q in layout.stabilizers[s].support:
            touching[q].append(s)
    logical = set(layout.logical_x if err == "Z" else layout.logical_z)

    def detectors(qubits, cycle, round_index):
        hit: dict[int, int] = {}
        for q in qubits:
            for s in touching[q]:
                hit[s] = hit.get(s, 0) ^ 1
        return [graph.node(s, cycle if rounds[s] > round_index else cycle + 1) for s, h in hit.items() if h]

    def add_fault(qubits, cycle, round_index, p):
        """Insert a data fault; returns the edge ids it produced."""
        qubits = list(qubits)
        nodes = detectors(qubits, cycle, round_index)
        if len(nodes) > 2:
            out = []
            for q in qubits:
                out += add_fault([q], cycle, round_index, p)
            return out
        if not nodes:
            if len(logical.intersection(qubits)) % 2:
                raise ValueError(f"undetectable logical fault {qubits} in {kind} graph")
            return []
        b = nodes[1] if len(nodes) == 2 else graph.sink
        return [graph.add(nodes[0], b, p, _mask_of(qubits))]

    p_dephase = ctx.p_z if err == "Z" else 0.0
    for c in range(C):
        for q in range(layout.n_data):
            add_fault([q], c, -1, max(p_dephase, P_FLOOR))
        for s in sources:
            model = ctx.models[s]
            sup = model.support
            survive = model.stages[-1]
            marg: dict[int, float] = {}
            for m, f, pr in model.channel.events:
                if m:
                    marg[m] = marg.get(m, 0.0) + pr
            for m, pr in sorted(marg.items()):
                add_fault([sup[i] for i in range(len(sup)) if m >> i & 1], c, rounds[s], max(survive * pr, P_FLOOR))
            ids = set()
            for j in range(1, len(sup)):
                p = 0.5 * model.stages[j] if loss_prior else 0.0
                ids.update(add_fault(sup[:j], c, rounds[s], max(p, P_FLOOR)))
            graph.prefix_edges[(s, c)] = ids

    # probability that each node fires from data faults, for the loss-substitution term
    fire = np.zeros(graph.n_nodes)
    for u, v, p in zip(graph.edge_u, graph.edge_v, graph.edge_p):
        for x in (u, v):
            fire[x] = _xor_merge(fire[x], p)

    for c in range(C):
        for s in checks:
            model = ctx.models[s]
            survive = model.stages[-1]
            p_flip = survive * model.channel.flip_probability
            p_loss = 1.0 - survive if loss_prior else 0.0
            p = _xor_merge(p_flip, p_loss * fire[graph.node(s, c)])
            graph.time_edge[(s, c)] = graph.add(graph.node(s, c), graph.node(s, c + 1), max(p, P_FLOOR), 0)

    graph.finalize()
    return graph


# --------------------------------------------------------------------------
# Matching


@dataclass(frozen=True)
class MatchingResult:
    pairs: tuple[tuple[int, int], ...]  # node pairs; the sink stands for the boundary
    weight: int
    mask: int


def mwpm(graph: DetectorGraph, defects, weights: np.ndarray | None = None) -> MatchingResult:
    """Minimum-weight matching of ``defects`` with free access to the boundary.

    Pair costs are shortest-path distances.  Defects i, j are worth pairing
    only when ``b_i + b_j - c_ij > 0`` (b = distance to the boundary), which
    turns the problem into a maximum-weight matching on the defects alone.
    """
    defects = [int(x) for x in defects]
    if not defects:
        return MatchingResult((), 0, 0)
    if len(set(defects)) != len(defects) or graph.sink in defects:
        raise ValueError("defects must be distinct non-boundary nodes")
    if weights is None:
        dist, pred = graph.all_pairs()
        dist, pred = dist[defects], pred[defects]
    else:
        dist, pred = dijkstra(graph.csr(weights), directed=True, indices=defects, return_predecessors=True)
    k = len(defects)
    bnd = dist[:, graph.sink]
    if not np.all(np.isfinite(bnd)):
        raise ValueError("a defect cannot reach the boundary")
    cost = dist[:, defects]
    bnd_i = [int(x) for x in bnd]
    edges = []
    for i in range(k):
        for j in range(i + 1, k):
            if np.isfinite(cost[i, j]):
                gain = bnd_i[i] + bnd_i[j] - int(cost[i, j])
                if gain > 0:
                    edges.append((i, j, gain))
    mate = max_weight_matching(edges) if edges else []
    mate = mate + [-1] * (k - len(mate))

    pairs, total, mask = [], 0, 0
    for i in range(k):
        j = mate[i]
        if j == -1:
            pairs.append((defects[i], graph.sink))
            total += bnd_i[i]
            mask ^= graph.path_mask(pred[i], graph.sink)
        elif j > i:
            pairs.append((defects[i], defects[j]))
            total += int(cost[i, j])
            mask ^= graph.path_mask(pred[i], defects[j])
    return MatchingResult(tuple(pairs), total, mask)


# --------------------------------------------------------------------------
# Decoding


def substitute_losses(syndromes: np.ndarray) -> np.ndarray:
    """Replace lost values (2) by the previous cycle's value, 0 in the first cycle."""
    out = syndromes.copy()
    prev = np.zeros(out.shape[:-2] + out.shape[-1:], dtype=out.dtype)
    for c in range(out.shape[-2]):
        cur = out[..., c, :]
        lost = cur == LOST
        cur[lost] = prev[lost]
        prev = cur
    return out


def detection_events(syndromes: np.ndarray, final: np.ndarray) -> np.ndarray:
    """Layer-wise changes of the (substituted) syndrome, final read-out appended."""
    m = np.concatenate([syndromes, final[..., None, :]], axis=-2).astype(np.uint8)
    ev = m.copy()
    ev[..., 1:, :] ^= m[..., :-1, :]
    return ev.astype(bool)


def _mask_to_bits(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


class Decoder:
    """Uniform or loss-weighted matching decoder for a simulation context."""

    def __init__(
        self,
        ctx: SimulationContext,
        kind: str = "uniform",
        alpha: float = 10.0,
        erasure_time_edge: str = "free",
        loss_prior: bool = False,
    ):
        if kind not in ("uniform", "weighted"):
            raise ValueError(f"decoder kind must be 'uniform' or 'weighted', got {kind!r}")
        if kind == "weighted" and not alpha > 1:
            raise ValueError("alpha must exceed 1")
        if erasure_time_edge not in ("free", "keep"):
            raise ValueError("erasure_time_edge must be 'free' or 'keep'")
        self.ctx, self.kind, self.alpha = ctx, kind, float(alpha)
        self.erasure_time_edge = erasure_time_edge
        self.loss_prior = loss_prior
        self.graphs = {k: build_detector_graph(ctx, k, loss_prior) for k in ("X", "Z")}

    def _weights_for_losses(self, lost: np.ndarray) -> dict[str, np.ndarray] | None:
        """Per-shot weights given the (cycle, check) loss pattern of one shot."""
        cs = np.argwhere(lost)
        if len(cs) == 0:
            return None
        layout = self.ctx.layout
        out = {k: g.weights.copy() for k, g in self.graphs.items()}
        for c, s in cs:
            own = layout.stabilizers[s].kind
            other = "X" if own == "Z" else "Z"
            g = self.graphs[other]
            w = out[other]
            for k in g.prefix_edges.get((s, c), ()):
                w[k] = max(1, int(round(g.weights[k] / self.alpha)))
            if self.erasure_time_edge == "free":
                out[own][self.graphs[own].time_edge[(s, c)]] = 1
        return out

    def decode_shot(self, syndromes: np.ndarray, final: np.ndarray) -> tuple[int, int]:
        """Return (X correction mask, Z correction mask) as integers."""
        lost = syndromes == LOST
        events = detection_events(substitute_losses(syndromes), final)
        weights = self._weights_for_losses(lost) if self.kind == "weighted" else None
        corr = {}
        for k, g in self.graphs.items():
            cols = np.array(g.checks)
            sub = events[:, cols]
            layers, idx = np.nonzero(sub)
            defects = layers * len(cols) + idx
            w = None if weights is None else weights[k]
            corr[k] = mwpm(g, defects, w).mask if len(defects) else 0
        # Z checks detect X errors, X checks detect Z errors
        return corr["Z"], corr["X"]

    def decode_batch(self, batch: ShotBatch) -> tuple[np.ndarray, np.ndarray]:
        n = self.ctx.layout.n_data
        x_corr = np.zeros((batch.shots, n), dtype=bool)
        z_corr = np.zeros((batch.shots, n), dtype=bool)
        quiet = ~(batch.syndromes.any(axis=(1, 2)) | batch.final.any(axis=1))
        for b in np.nonzero(~quiet)[0]:
            xm, zm = self.decode_shot(batch.syndromes[b], batch.final[b])
            if xm:
                x_corr[b] = _mask_to_bits(xm, n)
            if zm:
                z_corr[b] = _mask_to_bits(zm, n)
        return x_corr, z_corr
