"""Stochastic error channels for photon-mediated stabilizer measurements.

Three mechanisms are modelled:

* heralded photon loss, whose backaction is a random prefix Pauli string on
  the atoms the photon already touched;
* pulse-delay distortion of a successful (no-loss) parity measurement, built
  from the weight-class density-matrix factors and Pauli-twirled into a joint
  distribution over (data Pauli mask, outcome flip);
* idle dephasing from a finite T2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cavity_physics import DelayProfile

__all__ = [
    "LossEvent",
    "BackactionRule",
    "NoiseBudget",
    "TwirledChannel",
    "NonCPError",
    "NonCPWarning",
    "PhotonPath",
    "loss_backaction",
    "table2_factor",
    "build_twirled_channel",
    "dephasing_rule",
    "stage_distribution",
    "sample_loss_location",
    "LOST",
]

LOST = 2  # syndrome value recorded for a lost photon


class NonCPError(ValueError):
    """The twirled channel has a significantly negative probability."""


class NonCPWarning(UserWarning):
    """Tiny negative twirled probabilities were clamped to zero."""


@dataclass(frozen=True)
class LossEvent:
    """Photon lost after interacting with ``stage`` atoms of the stabilizer."""

    stage: int
    weight: int = 4

    def __post_init__(self):
        if not 0 <= self.stage <= self.weight:
            raise ValueError(f"stage must lie in [0, {self.weight}], got {self.stage}")


@dataclass(frozen=True)
class BackactionRule:
    prefix_mask: int  # bit i set: i-th atom in visit order is hit
    probability: float
    syndrome: int = LOST


def loss_backaction(event: LossEvent, weight: int | None = None) -> BackactionRule:
    """Backaction of a lost photon: the visited prefix Pauli with probability 1/2.

    No delay channel acts on a measurement whose photon was lost.
    """
    w = event.weight if weight is None else weight
    if not 0 <= event.stage <= w:
        raise ValueError(f"stage {event.stage} exceeds stabilizer weight {w}")
    mask = (1 << event.stage) - 1
    return BackactionRule(prefix_mask=mask, probability=0.5 if mask else 0.0)


@dataclass(frozen=True)
class NoiseBudget:
    """Per-component error probabilities plus the overlap profile.

    ``p_dep`` is a dephasing *rate* (probability per unit time to first
    order, ``1 / (2 T2)``).
    """

    p_cav: float
    p_del: float
    p_sw: float = 0.0
    p_cir: float = 0.0
    p_dep: float = 0.0
    profile: DelayProfile = field(default_factory=DelayProfile.ideal)

    def __post_init__(self):
        for name in ("p_cav", "p_del", "p_sw", "p_cir"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value!r}")
        if not self.p_dep >= 0.0:
            raise ValueError(f"p_dep must be >= 0, got {self.p_dep!r}")

    @classmethod
    def noiseless(cls) -> NoiseBudget:
        return cls(0.0, 0.0)


# --------------------------------------------------------------------------
# Outcome-resolved density-matrix factors for the no-loss measurement.
# Keys are (k, l) weight classes with k <= l; values give the L (even) and R
# (odd) outcome factors as functions of W = (W_0, ..., W_4).

_FACTORS = {
    (0, 0): (lambda W: (1 + W[2]) / 2, lambda W: (1 - W[2]) / 2),
    (4, 4): (lambda W: (1 + W[2]) / 2, lambda W: (1 - W[2]) / 2),
    (1, 1): (lambda W: (1 - W[1]) / 2, lambda W: (1 + W[1]) / 2),
    (3, 3): (lambda W: (1 - W[1]) / 2, lambda W: (1 + W[1]) / 2),
    (2, 2): (lambda W: 1.0, lambda W: 0.0),
    (0, 1): (lambda W: (1 - 2 * W[1] + W[2]) / 4, lambda W: (1 - W[2]) / 4),
    (3, 4): (lambda W: (1 - 2 * W[1] + W[2]) / 4, lambda W: (1 - W[2]) / 4),
    (1, 2): (lambda W: (1 - W[1]) / 2, lambda W: 0.0),
    (2, 3): (lambda W: (1 - W[1]) / 2, lambda W: 0.0),
    (0, 2): (lambda W: (1 + W[2]) / 2, lambda W: 0.0),
    (2, 4): (lambda W: (1 + W[2]) / 2, lambda W: 0.0),
    (1, 3): (lambda W: (1 - 2 * W[1] + W[2]) / 4, lambda W: (1 + 2 * W[1] + W[2]) / 4),
    (0, 3): (lambda W: (1 - W[1] + W[2] - W[3]) / 4, lambda W: (1 + W[1] - W[2] - W[3]) / 4),
    (1, 4): (lambda W: (1 - W[1] + W[2] - W[3]) / 4, lambda W: (1 + W[1] - W[2] - W[3]) / 4),
    (0, 4): (lambda W: (1 + 2 * W[2] + W[4]) / 4, lambda W: (1 - 2 * W[2] + W[4]) / 4),
}
# The published |A0><A4| L entry reads (1 + W2 + W4)/4, which is not trace
# consistent with its R partner; it is kept reachable for comparison only.
_PUBLISHED_04_L = lambda W: (1 + W[2] + W[4]) / 4  # noqa: E731

_OUTCOMES = {"L": 0, "R": 1, 0: 0, 1: 1}


def _w_tuple(w_profile) -> tuple[float, ...]:
    w = tuple(w_profile.w) if isinstance(w_profile, DelayProfile) else tuple(w_profile)
    if len(w) < 5:
        w = w + (0.0,) * (5 - len(w))
    return w


def table2_factor(k: int, l: int, w_profile, outcome, published: bool = False) -> float:
    """Factor multiplying |A_k><A_l| given the polarization outcome.

    ``outcome`` is ``"L"`` (even parity, 0) or ``"R"`` (odd parity, 1).  With
    ``published=True`` the |A0><A4| L entry takes its printed value instead of
    the trace-consistent one.
    """
    if not (0 <= k <= 4 and 0 <= l <= 4):
        raise ValueError(f"weight classes must lie in [0, 4], got ({k}, {l})")
    try:
        o = _OUTCOMES[outcome]
    except KeyError:
        raise ValueError(f"outcome must be 'L' or 'R', got {outcome!r}") from None
    W = _w_tuple(w_profile)
    key = (min(k, l), max(k, l))
    if published and key == (0, 4) and o == 0:
        return float(_PUBLISHED_04_L(W))
    return float(_FACTORS[key][o](W))


# --------------------------------------------------------------------------
# Twirled channel


@dataclass(frozen=True)
class TwirledChannel:
    """Distribution over (Pauli mask on the support, outcome flip).

    ``masks`` are bitmasks over the stabilizer support in visit order and act
    with the stabilizer's own Pauli type (Z-strings for Z checks).  A mask and
    its complement are equivalent on the code space; the lower-weight
    representative is stored.
    """

    weight: int
    masks: tuple[int, ...]
    flips: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"twirled probabilities sum to {total!r}")
        if any(p < 0 for p in self.probs):
            raise ValueError("twirled probabilities must be non-negative")

    @property
    def events(self) -> list[tuple[int, int, float]]:
        return list(zip(self.masks, self.flips, self.probs))

    @property
    def flip_probability(self) -> float:
        return math.fsum(p for f, p in zip(self.flips, self.probs) if f)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(m, f): p for m, f, p in self.events}

    def qubit_marginals(self) -> list[float]:
        """Probability that each support position carries the Pauli."""
        return [
            math.fsum(p for m, p in zip(self.masks, self.probs) if m >> i & 1)
            for i in range(self.weight)
        ]

    def to_json(self) -> dict:
        return {
            "weight": self.weight,
            "events": [{"mask": m, "flip": f, "prob": p} for m, f, p in self.events],
        }


def _popcount(x: int) -> int:
    return bin(x).count("1")


def canonical_mask(mask: int, weight: int) -> int:
    """Lower-weight representative of {mask, mask ^ full}; ties go to the smaller int."""
    full = (1 << weight) - 1
    alt = mask ^ full
    return min((mask, alt), key=lambda m: (_popcount(m), m))


@lru_cache(maxsize=256)
def _twirl(w: tuple[float, ...], weight: int, published: bool) -> TwirledChannel:
    n = 1 << weight
    pop = np.array([_popcount(x) for x in range(n)])
    parity = pop & 1
    # M[o][x, y] = factor(|x|, |y|, o)
    M = np.empty((2, n, n))
    for o in (0, 1):
        cls = np.array(
            [[table2_factor(k, l, w, o, published) for l in range(weight + 1)] for k in range(weight + 1)]
        )
        M[o] = cls[np.ix_(pop, pop)]
    # H[f, z] = mean_b M_{f ^ par(b)}(b, b ^ z): the X-twirled instrument
    # referenced to the ideal outcome.
    idx = np.arange(n)
    H = np.empty((2, n))
    for f in (0, 1):
        for z in range(n):
            H[f, z] = M[f ^ parity, idx, idx ^ z].mean()
    even = idx[parity == 0]
    # Walsh transform over the even subgroup; a and a ^ full coincide there.
    signs = (-1.0) ** (np.array([[_popcount(a & z) for z in even] for a in range(n)]) & 1)
    q = (signs @ H[:, even].T) / len(even)  # shape (n masks, 2 flips)

    probs: dict[tuple[int, int], float] = {}
    for a in range(n):
        rep = canonical_mask(a, weight)
        if rep != a:
            continue
        for f in (0, 1):
            probs[(a, f)] = float(q[a, f])

    lowest = min(probs.values())
    if lowest < -1e-10:
        raise NonCPError(f"twirled channel has probability {lowest:.3e} < -1e-10 for W={w[:weight + 1]}")
    if lowest < 0:
        warnings.warn(f"clamped twirled probability {lowest:.2e} to zero", NonCPWarning, stacklevel=3)
    items = [(m, f, max(p, 0.0)) for (m, f), p in sorted(probs.items())]
    items = [(m, f, p) for m, f, p in items if p > 0.0]
    total = math.fsum(p for _, _, p in items)
    masks, flips, ps = zip(*((m, f, p / total) for m, f, p in items))
    return TwirledChannel(weight, masks, flips, ps)


def build_twirled_channel(w_profile, weight: int, published: bool = False) -> TwirledChannel:
    """Pauli-twirl the no-loss measurement instrument of a weight-3 or -4 check.

    The instrument is conjugated by every X-string on the support (with the
    outcome relabelled by the string's parity) and expressed as a distribution
    over Z-masks and outcome flips.  Results are cached per profile.
    """
    if weight not in (3, 4):
        raise ValueError(f"stabilizer weight must be 3 or 4, got {weight}")
    w = tuple(round(x, 15) for x in _w_tuple(w_profile))
    return _twirl(w, weight, published)


# --------------------------------------------------------------------------
# Dephasing and loss sampling


def dephasing_rule(T2: float, cycle_time: float) -> float:
    """Per-qubit Z probability accumulated over ``cycle_time``."""
    if not T2 > 0:
        raise ValueError("T2 must be positive")
    if cycle_time < 0:
        raise ValueError("cycle_time must be non-negative")
    if math.isinf(T2):
        return 0.0
    return 0.5 * (1.0 - math.exp(-cycle_time / T2))


@dataclass(frozen=True)
class PhotonPath:
    """Ordered optical components a measurement photon passes.

    Each component is ``"cir"``, ``"sw"`` or ``"cav"``.  The loss stage of a
    component is the number of cavities reflected at or before it, so a loss
    inside the j-th cavity counts as having touched j atoms.
    """

    components: tuple[str, ...]

    def __post_init__(self):
        bad = set(self.components) - {"cir", "sw", "cav"}
        if bad:
            raise ValueError(f"unknown path components {sorted(bad)}")

    @property
    def n_cav(self) -> int:
        return self.components.count("cav")

    @property
    def n_sw(self) -> int:
        return self.components.count("sw")

    @property
    def n_cir(self) -> int:
        return self.components.count("cir")

    @property
    def stages(self) -> tuple[int, ...]:
        out, seen = [], 0
        for c in self.components:
            if c == "cav":
                seen += 1
            out.append(seen)
        return tuple(out)

    def loss_probabilities(self, budget: NoiseBudget) -> np.ndarray:
        table = {"cav": budget.p_cav, "sw": budget.p_sw, "cir": budget.p_cir}
        return np.array([table[c] for c in self.components], dtype=float)


def stage_distribution(path: PhotonPath, budget: NoiseBudget) -> np.ndarray:
    """Probabilities of losing the photon at stage 0..w; the last entry is survival."""
    p = path.loss_probabilities(budget)
    out = np.zeros(path.n_cav + 2)
    alive = 1.0
    for stage, pc in zip(path.stages, p):
        out[stage] += alive * pc
        alive *= 1.0 - pc
    out[-1] = alive
    return out


def sample_loss_location(path: PhotonPath, budget: NoiseBudget, rng: np.random.Generator, size=None):
    """Walk the path and return the first loss as a :class:`LossEvent`.

    Returns ``None`` if the photon survives.  With ``size`` given, returns an
    integer array of stages with -1 marking survival.
    """
    p = path.loss_probabilities(budget)
    stages = np.array(path.stages)
    n = 1 if size is None else int(size)
    hits = rng.random((n, len(p))) < p
    first = np.where(hits.any(axis=1), hits.argmax(axis=1), -1)
    out = np.where(first >= 0, stages[np.maximum(first, 0)], -1)
    if size is not None:
        return out
    return None if out[0] < 0 else LossEvent(int(out[0]), path.n_cav)
