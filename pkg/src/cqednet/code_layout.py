"""Planar surface-code lattice, cavity assignment and measurement scheduling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .cavity_physics import PulseParams
from .noise_channels import NoiseBudget, PhotonPath

__all__ = [
    "Stabilizer",
    "CodeLayout",
    "StructureKind",
    "NetworkStructure",
    "ColoringError",
    "build_layout",
    "assign_cavities",
    "build_schedule",
    "estimate_accumulation",
    "cycle_time",
    "VISIT_ORDER",
]

# Neighbour offsets in photon visit order: north, west, east, south.
VISIT_ORDER = ((-1, 0), (0, -1), (0, 1), (1, 0))


class ColoringError(RuntimeError):
    """A cavity assignment violated the one-atom-per-cavity rule."""


@dataclass(frozen=True)
class Stabilizer:
    kind: str  # "X" or "Z"
    position: tuple[int, int]
    support: tuple[int, ...]  # data-qubit indices in visit order
    slots: tuple[int | None, ...]  # support index per visit direction, None if absent

    @property
    def weight(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class CodeLayout:
    """Unrotated planar code on a (2d-1) x (2d-1) grid.

    Data qubits sit where ``r + c`` is even, Z checks at (even, odd) and X
    checks at (odd, even).  Logical X runs along row 0, logical Z down
    column 0.
    """

    d: int
    coords: tuple[tuple[int, int], ...]
    stabilizers: tuple[Stabilizer, ...]
    logical_x: tuple[int, ...]
    logical_z: tuple[int, ...]

    @property
    def n_data(self) -> int:
        return len(self.coords)

    @property
    def n_stabilizers(self) -> int:
        return len(self.stabilizers)

    def indices(self, kind: str) -> list[int]:
        return [i for i, s in enumerate(self.stabilizers) if s.kind == kind]

    def qubit_index(self, r: int, c: int) -> int:
        return self._lookup()[(r, c)]

    def _lookup(self) -> dict[tuple[int, int], int]:
        table = self.__dict__.get("_lookup_cache")
        if table is None:
            table = {rc: i for i, rc in enumerate(self.coords)}
            object.__setattr__(self, "_lookup_cache", table)
        return table


def build_layout(d: int) -> CodeLayout:
    if d < 2:
        raise ValueError(f"code distance must be >= 2, got {d}")
    size = 2 * d - 1
    coords = tuple((r, c) for r in range(size) for c in range(size) if (r + c) % 2 == 0)
    index = {rc: i for i, rc in enumerate(coords)}

    stabilizers = []
    for r in range(size):
        for c in range(size):
            if (r + c) % 2 == 0:
                continue
            kind = "Z" if r % 2 == 0 else "X"
            support, slots = [], []
            for dr, dc in VISIT_ORDER:
                q = index.get((r + dr, c + dc))
                if q is None:
                    slots.append(None)
                else:
                    slots.append(len(support))
                    support.append(q)
            stabilizers.append(Stabilizer(kind, (r, c), tuple(support), tuple(slots)))

    logical_x = tuple(index[(0, c)] for c in range(0, size, 2))
    logical_z = tuple(index[(r, 0)] for r in range(0, size, 2))
    return CodeLayout(d, coords, tuple(stabilizers), logical_x, logical_z)


class StructureKind(str, Enum):
    FOUR = "four"
    D = "d"
    N = "n"

    @classmethod
    def parse(cls, value) -> StructureKind:
        if isinstance(value, cls):
            return value
        aliases = {
            "4": cls.FOUR, "four": cls.FOUR, "fourcavity": cls.FOUR,
            "d": cls.D, "dcavity": cls.D,
            "n": cls.N, "ncavity": cls.N,
        }
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        if key not in aliases:
            raise ValueError(f"unknown network structure {value!r}; use 4, d or n")
        return aliases[key]


@dataclass(frozen=True)
class NetworkStructure:
    kind: StructureKind
    layout: CodeLayout
    cavity_of: tuple[int, ...]
    schedule: tuple[tuple[int, ...], ...]
    paths: tuple[PhotonPath, ...]

    @property
    def n_cavities(self) -> int:
        return len(set(self.cavity_of))

    @property
    def depth(self) -> int:
        return len(self.schedule)

    def round_of(self) -> list[int]:
        """Schedule round index of every stabilizer."""
        out = [0] * self.layout.n_stabilizers
        for t, rnd in enumerate(self.schedule):
            for s in rnd:
                out[s] = t
        return out

    def path_totals(self) -> tuple[int, int, int]:
        return (
            sum(p.n_cav for p in self.paths),
            sum(p.n_sw for p in self.paths),
            sum(p.n_cir for p in self.paths),
        )

    def to_json(self) -> str:
        lay = self.layout
        doc = {
            "d": lay.d,
            "structure": self.kind.value,
            "qubits": [list(rc) for rc in lay.coords],
            "cavity_of": list(self.cavity_of),
            "stabilizers": [
                {"kind": s.kind, "position": list(s.position), "support": list(s.support)}
                for s in lay.stabilizers
            ],
            "logical_x": list(lay.logical_x),
            "logical_z": list(lay.logical_z),
            "schedule": [list(r) for r in self.schedule],
            "paths": [list(p.components) for p in self.paths],
        }
        return json.dumps(doc, indent=1)


def _coloring(layout: CodeLayout, kind: StructureKind) -> list[int]:
    if kind is StructureKind.N:
        return list(range(layout.n_data))
    if kind is StructureKind.FOUR:
        return [((r + c) // 2) % 2 + 2 * (r % 2) for r, c in layout.coords]
    # Diagonal stripes: the four neighbours of a check get offsets -2, -1, +1,
    # +2 modulo the stripe count, so at least five stripes are needed.
    stripes = max(5, 2 * layout.d)
    return [(c + 2 * r) % stripes for r, c in layout.coords]


def _paths(layout: CodeLayout, kind: StructureKind) -> list[PhotonPath]:
    paths = []
    for stab in layout.stabilizers:
        if kind is StructureKind.N:
            comps = ["cir"] + ["sw", "cav", "cir"] * stab.weight
        else:
            comps = []
            for slot in stab.slots:
                comps += ["sw"] if slot is None else ["sw", "cav", "cir"]
        paths.append(PhotonPath(tuple(comps)))
    return paths


def build_schedule(layout: CodeLayout, cavity_of) -> tuple[tuple[int, ...], ...]:
    """First-fit packing of checks into rounds with no cavity used twice per round.

    Weight-4 checks are placed first; ties keep lattice order.
    """
    rounds: list[list[int]] = []
    used: list[set[int]] = []
    order = sorted(range(layout.n_stabilizers), key=lambda s: -layout.stabilizers[s].weight)
    for s in order:
        stab = layout.stabilizers[s]
        cavs = {cavity_of[q] for q in stab.support}
        for rnd, busy in zip(rounds, used):
            if busy.isdisjoint(cavs):
                rnd.append(s)
                busy |= cavs
                break
        else:
            rounds.append([s])
            used.append(set(cavs))
    return tuple(tuple(sorted(r)) for r in rounds)


def assign_cavities(layout: CodeLayout, kind) -> NetworkStructure:
    kind = StructureKind.parse(kind)
    cavity_of = _coloring(layout, kind)
    for stab in layout.stabilizers:
        cavs = [cavity_of[q] for q in stab.support]
        if len(set(cavs)) != len(cavs):
            raise ColoringError(f"check at {stab.position} touches cavity twice: {cavs}")
    schedule = build_schedule(layout, cavity_of)
    return NetworkStructure(kind, layout, tuple(cavity_of), schedule, tuple(_paths(layout, kind)))


def estimate_accumulation(structure: NetworkStructure, budget: NoiseBudget, pulse: PulseParams) -> float:
    """Closed-form error accumulated per data qubit over one syndrome cycle.

    The dephasing term counts one pulse length for the fully parallel
    one-cavity-per-qubit network and one per schedule round otherwise.
    """
    n = structure.layout.n_data
    n_cav, n_sw, n_cir = structure.path_totals()
    rounds = 1 if structure.kind is StructureKind.N else structure.depth
    return (
        rounds * pulse.pulse_length * budget.p_dep
        + n_cav / n * (budget.p_cav + budget.p_del)
        + n_sw / n * budget.p_sw
        + n_cir / n * budget.p_cir
    )


def cycle_time(structure: NetworkStructure, pulse: PulseParams, latency: float = 0.0) -> float:
    """Wall-clock duration of one syndrome cycle."""
    if latency < 0:
        raise ValueError("latency must be non-negative")
    return structure.depth * (pulse.occupation_time + latency)
