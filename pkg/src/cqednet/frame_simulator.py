"""Pauli-frame Monte Carlo of repeated photon-mediated syndrome cycles.

Shots are simulated in batches: every frame is a boolean array of shape
``(shots, n_data)``.  Randomness enters only through a *sampler*, so the same
propagation code serves Monte Carlo runs and deterministic fault injection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import norm

from .code_layout import NetworkStructure, cycle_time
from .cavity_physics import PulseParams
from .noise_channels import (
    LOST,
    NoiseBudget,
    TwirledChannel,
    build_twirled_channel,
    dephasing_rule,
    stage_distribution,
)

__all__ = [
    "SimulationContext",
    "ShotBatch",
    "RandomSampler",
    "ScriptedSampler",
    "Fault",
    "simulate_batch",
    "simulate_shot",
    "batch_seed",
    "LogicalRate",
    "logical_error_rate",
    "rate_from_counts",
    "wilson_interval",
    "clopper_pearson_interval",
    "BATCH_SIZE",
]

BATCH_SIZE = 1024


@dataclass(frozen=True)
class StabilizerModel:
    """Precomputed sampling tables for one stabilizer."""

    kind: str
    support: np.ndarray  # data indices in visit order
    stage_cdf: np.ndarray  # P(stage <= j) for j = 0..w, then survival
    event_cdf: np.ndarray
    event_masks: np.ndarray  # (events, w) bool
    event_flips: np.ndarray  # (events,) bool
    prefixes: np.ndarray  # (w + 1, w) bool, row j = first j positions
    channel: TwirledChannel
    stages: np.ndarray  # stage_distribution, last entry survival

    @property
    def identity_event(self) -> int:
        for i, (m, f) in enumerate(zip(self.channel.masks, self.channel.flips)):
            if m == 0 and f == 0:
                return i
        raise ValueError("channel has no identity event")


@dataclass
class SimulationContext:
    structure: NetworkStructure
    budget: NoiseBudget
    p_z: float  # per-qubit dephasing probability per noisy cycle
    cycles: int
    published_table: bool = False
    models: list[StabilizerModel] = field(init=False, repr=False)

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not 0.0 <= self.p_z <= 0.5:
            raise ValueError(f"p_z must lie in [0, 0.5], got {self.p_z}")
        layout = self.structure.layout
        self.models = []
        for stab, path in zip(layout.stabilizers, self.structure.paths):
            w = stab.weight
            ch = build_twirled_channel(self.budget.profile, w, self.published_table)
            stages = stage_distribution(path, self.budget)
            masks = np.array([[m >> i & 1 for i in range(w)] for m in ch.masks], dtype=bool)
            prefixes = np.array([[i < j for i in range(w)] for j in range(w + 1)], dtype=bool)
            self.models.append(
                StabilizerModel(
                    kind=stab.kind,
                    support=np.array(stab.support, dtype=np.intp),
                    stage_cdf=np.cumsum(stages),
                    event_cdf=np.cumsum(ch.probs),
                    event_masks=masks,
                    event_flips=np.array(ch.flips, dtype=bool),
                    prefixes=prefixes,
                    channel=ch,
                    stages=stages,
                )
            )

    @classmethod
    def from_pulse(
        cls,
        structure: NetworkStructure,
        budget: NoiseBudget,
        pulse: PulseParams,
        T2: float,
        cycles: int | None = None,
        latency: float = 0.0,
        published_table: bool = False,
    ) -> SimulationContext:
        p_z = dephasing_rule(T2, cycle_time(structure, pulse, latency))
        return cls(structure, budget, p_z, cycles or structure.layout.d, published_table)

    @property
    def layout(self):
        return self.structure.layout

    def measurement_order(self) -> list[int]:
        return [s for rnd in self.structure.schedule for s in rnd]


@dataclass
class ShotBatch:
    """Syndrome records and residual frames for a batch of shots.

    ``syndromes[b, c, s]`` holds 0, 1 or 2 (lost) for the noisy cycles;
    ``final`` is the noiseless read-out cycle.
    """

    syndromes: np.ndarray  # (B, cycles, S) uint8
    final: np.ndarray  # (B, S) uint8
    x_frame: np.ndarray  # (B, n) bool
    z_frame: np.ndarray  # (B, n) bool

    @property
    def shots(self) -> int:
        return self.syndromes.shape[0]

    def logical_flips(self, layout, x_corr=None, z_corr=None) -> tuple[np.ndarray, np.ndarray]:
        """(X_L flipped, Z_L flipped) per shot after applying optional corrections.

        An X residual flips the outcome of logical Z (odd overlap with column 0);
        a Z residual flips logical X (odd overlap with row 0).
        """
        xr = self.x_frame if x_corr is None else self.x_frame ^ x_corr
        zr = self.z_frame if z_corr is None else self.z_frame ^ z_corr
        x_flip = xr[:, list(layout.logical_z)].sum(axis=1) % 2 == 1
        z_flip = zr[:, list(layout.logical_x)].sum(axis=1) % 2 == 1
        return x_flip, z_flip


class RandomSampler:
    def __init__(self, ctx: SimulationContext, shots: int, rng: np.random.Generator):
        self.ctx, self.shots, self.rng = ctx, shots, rng

    def dephase(self, cycle: int) -> np.ndarray | None:
        if self.ctx.p_z <= 0.0:
            return None
        return self.rng.random((self.shots, self.ctx.layout.n_data)) < self.ctx.p_z

    def measure(self, cycle: int, s: int):
        model = self.ctx.models[s]
        u = self.rng.random((3, self.shots))
        stage = np.searchsorted(model.stage_cdf, u[0], side="right")
        stage = np.where(stage >= len(model.stage_cdf) - 1, -1, stage)
        kick = u[1] < 0.5
        event = np.minimum(np.searchsorted(model.event_cdf, u[2], side="right"), len(model.event_cdf) - 1)
        return stage, kick, event


@dataclass(frozen=True)
class Fault:
    """One elementary fault for deterministic injection.

    ``kind`` is ``"dephase"`` (Z on ``qubit`` at the start of ``cycle``),
    ``"event"`` (twirled event index ``event`` on check ``stabilizer``) or
    ``"loss"`` (photon of ``stabilizer`` lost at ``stage`` with prefix
    backaction if ``kick``).
    """

    kind: str
    cycle: int
    qubit: int = -1
    stabilizer: int = -1
    event: int = -1
    stage: int = -1
    kick: bool = False


class ScriptedSampler:
    """Applies a prescribed list of faults per shot; everything else is ideal."""

    def __init__(self, ctx: SimulationContext, faults: list[list[Fault]]):
        self.ctx = ctx
        self.shots = len(faults)
        self._dephase: dict[int, list[tuple[int, int]]] = {}
        self._meas: dict[tuple[int, int], list[tuple[int, Fault]]] = {}
        for b, shot in enumerate(faults):
            for f in shot:
                if f.kind == "dephase":
                    self._dephase.setdefault(f.cycle, []).append((b, f.qubit))
                elif f.kind in ("event", "loss"):
                    self._meas.setdefault((f.cycle, f.stabilizer), []).append((b, f))
                else:
                    raise ValueError(f"unknown fault kind {f.kind!r}")

    def dephase(self, cycle: int) -> np.ndarray | None:
        hits = self._dephase.get(cycle)
        if not hits:
            return None
        out = np.zeros((self.shots, self.ctx.layout.n_data), dtype=bool)
        for b, q in hits:
            out[b, q] ^= True
        return out

    def measure(self, cycle: int, s: int):
        model = self.ctx.models[s]
        stage = np.full(self.shots, -1)
        kick = np.zeros(self.shots, dtype=bool)
        event = np.full(self.shots, model.identity_event)
        for b, f in self._meas.get((cycle, s), ()):
            if f.kind == "loss":
                stage[b], kick[b] = f.stage, f.kick
            else:
                event[b] = f.event
        return stage, kick, event


def simulate_batch(ctx: SimulationContext, sampler) -> ShotBatch:
    """Propagate ``sampler.shots`` frames through the noisy cycles and a final ideal one."""
    B, layout = sampler.shots, ctx.layout
    n, S = layout.n_data, layout.n_stabilizers
    xf = np.zeros((B, n), dtype=bool)
    zf = np.zeros((B, n), dtype=bool)
    syn = np.zeros((B, ctx.cycles, S), dtype=np.uint8)
    order = ctx.measurement_order()

    for c in range(ctx.cycles):
        dz = sampler.dephase(c)
        if dz is not None:
            zf ^= dz
        for s in order:
            m = ctx.models[s]
            # Z checks read the X frame and kick back Z strings; X checks the reverse.
            own, other = (zf, xf) if m.kind == "Z" else (xf, zf)
            stage, kick, event = sampler.measure(c, s)
            lost = stage >= 0
            sup = m.support
            kicks = m.event_masks[event] & ~lost[:, None]
            kicks |= m.prefixes[np.maximum(stage, 0)] & (lost & kick)[:, None]
            own[:, sup] ^= kicks
            parity = other[:, sup].sum(axis=1) & 1
            out = (parity.astype(bool) ^ m.event_flips[event]).astype(np.uint8)
            out[lost] = LOST
            syn[:, c, s] = out

    final = np.empty((B, S), dtype=np.uint8)
    for s, m in enumerate(ctx.models):
        other = xf if m.kind == "Z" else zf
        final[:, s] = other[:, m.support].sum(axis=1) & 1
    return ShotBatch(syn, final, xf, zf)


def batch_seed(master_seed: int, batch_index: int) -> np.random.Generator:
    """Independent stream per (master seed, batch index)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(batch_index)]))


def simulate_shot(ctx: SimulationContext, rng: np.random.Generator) -> ShotBatch:
    return simulate_batch(ctx, RandomSampler(ctx, 1, rng))


# --------------------------------------------------------------------------
# Logical error rate


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def clopper_pearson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    a = (1.0 - confidence) / 2.0
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class LogicalRate:
    failures: int
    shots: int
    cycles: int
    f_pro: float
    per_cycle: float
    ci: tuple[float, float]  # per-cycle rate interval

    def overlaps(self, other: LogicalRate) -> bool:
        return not (self.ci[1] < other.ci[0] or other.ci[1] < self.ci[0])


def _per_cycle(fail_fraction: float, cycles: int) -> float:
    return 1.0 - (1.0 - fail_fraction) ** (1.0 / cycles)


def rate_from_counts(failures: int, shots: int, cycles: int, interval=wilson_interval) -> LogicalRate:
    """Per-cycle logical error rate 1 - f_pro**(1/cycles) with a 95% interval."""
    if shots <= 0:
        raise ValueError("at least one shot is required")
    if not 0 <= failures <= shots:
        raise ValueError("failures must lie in [0, shots]")
    f_pro = 1.0 - failures / shots
    lo, hi = interval(failures, shots)
    return LogicalRate(
        failures, shots, cycles, f_pro, _per_cycle(failures / shots, cycles),
        (_per_cycle(lo, cycles), _per_cycle(hi, cycles)),
    )


def logical_error_rate(batch: ShotBatch, layout, corrections, cycles: int) -> LogicalRate:
    """Failure counts after applying ``corrections = (x_corr, z_corr)``."""
    x_flip, z_flip = batch.logical_flips(layout, *corrections)
    return rate_from_counts(int(np.count_nonzero(x_flip | z_flip)), batch.shots, cycles)
