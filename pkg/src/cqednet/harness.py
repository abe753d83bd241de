"""Monte Carlo campaigns: operating points, logical error rates, requirement boundaries."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .cavity_physics import CavityParams, DelayProfile, PulseParams
from .code_layout import NetworkStructure, assign_cavities, build_layout
from .config import ExperimentConfig
from .decoder import Decoder
from .frame_simulator import (
    BATCH_SIZE,
    LogicalRate,
    RandomSampler,
    SimulationContext,
    batch_seed,
    rate_from_counts,
    simulate_batch,
)
from .noise_channels import NoiseBudget
from .operating_point import BoundaryHitWarning, OperatingPoint, make_budget, optimize_operating_point

__all__ = [
    "PointSetup",
    "setup_point",
    "count_failures",
    "run_point",
    "boundary_search",
    "calibrate_alpha",
    "BoundaryResult",
    "write_csv",
    "build_manifest",
    "RESULT_COLUMNS",
    "BOUNDARY_COLUMNS",
    "TRACE_COLUMNS",
]


@dataclass
class PointSetup:
    d: int
    structure: NetworkStructure
    ctx: SimulationContext
    operating_point: OperatingPoint | None


def setup_point(cfg: ExperimentConfig, g: float, kappa_in: float, d: int) -> PointSetup:
    """Optimize the operating point (or apply synthetic noise) and build the context."""
    run, cav = cfg.run, cfg.cavity
    structure = assign_cavities(build_layout(d), run.structure)
    cycles = run.cycles or d
    if cfg.synthetic:
        # Uniform per-cavity loss and delay strength; no dephasing.
        w1 = 1.0 - 2.0 * run.synthetic_infidelity
        budget = NoiseBudget(
            p_cav=run.synthetic_loss,
            p_del=run.synthetic_infidelity,
            p_sw=run.p_sw,
            p_cir=run.p_cir,
            profile=DelayProfile.from_w1(w1),
        )
        ctx = SimulationContext(structure, budget, 0.0, cycles, run.published_table)
        return PointSetup(d, structure, ctx, None)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryHitWarning)
        op = optimize_operating_point(
            g, kappa_in, structure,
            T2=cav.T2, peripherals=(run.p_sw, run.p_cir), gamma=cav.gamma,
            loss_model=cav.loss_model, window_factor=cfg.pulse.window_factor,
        )
    ctx = SimulationContext.from_pulse(
        structure, op.budget, op.pulse, cav.T2, cycles, cfg.pulse.latency, run.published_table
    )
    return PointSetup(d, structure, ctx, op)


def _make_decoder(ctx: SimulationContext, cfg: ExperimentConfig, kind: str | None, alpha: float | None) -> Decoder:
    dec = cfg.decoder
    return Decoder(
        ctx,
        kind or dec.kind,
        alpha=dec.alpha if alpha is None else alpha,
        erasure_time_edge=dec.erasure_time_edge,
        loss_prior=dec.loss_prior,
    )


def _batch_failures(ctx: SimulationContext, decoder: Decoder, seed: int, index: int, size: int) -> int:
    batch = simulate_batch(ctx, RandomSampler(ctx, size, batch_seed(seed, index)))
    x_corr, z_corr = decoder.decode_batch(batch)
    x_flip, z_flip = batch.logical_flips(ctx.layout, x_corr, z_corr)
    return int((x_flip | z_flip).sum())


_WORKER: dict = {}


def _worker_init(ctx, decoder):
    _WORKER["ctx"], _WORKER["decoder"] = ctx, decoder


def _worker_run(args):
    seed, index, size = args
    return _batch_failures(_WORKER["ctx"], _WORKER["decoder"], seed, index, size)


def count_failures(ctx: SimulationContext, decoder: Decoder, shots: int, seed: int, threads: int = 1) -> int:
    """Logical failures over ``shots``; batch ``i`` always uses stream (seed, i)."""
    jobs = []
    for index, start in enumerate(range(0, shots, BATCH_SIZE)):
        jobs.append((seed, index, min(BATCH_SIZE, shots - start)))
    if threads <= 1 or len(jobs) == 1:
        return sum(_batch_failures(ctx, decoder, *job) for job in jobs)
    with ProcessPoolExecutor(threads, initializer=_worker_init, initargs=(ctx, decoder)) as pool:
        return sum(pool.map(_worker_run, jobs))


def _point_seed(seed: int, d: int) -> int:
    return int(seed) * 1000 + d


def evaluate(cfg: ExperimentConfig, g: float, kappa_in: float, d: int,
             decoder_kind: str | None = None, alpha: float | None = None,
             shots: int | None = None) -> tuple[LogicalRate, PointSetup]:
    setup = setup_point(cfg, g, kappa_in, d)
    decoder = _make_decoder(setup.ctx, cfg, decoder_kind, alpha)
    n = shots or cfg.run.shots
    fails = count_failures(setup.ctx, decoder, n, _point_seed(cfg.run.seed, d), cfg.run.threads)
    return rate_from_counts(fails, n, setup.ctx.cycles), setup


RESULT_COLUMNS = [
    "structure", "decoder", "alpha", "g", "kappa_in", "C_in", "T2", "p_sw", "p_cir",
    "d", "cycles", "shots", "failures", "p_L", "ci_low", "ci_high", "ratio_to_prev",
    "kappa_ex", "pulse_length", "P_tot", "p_cav", "p_del", "W1", "p_z", "depth", "n_cavities",
]


def run_point(cfg: ExperimentConfig, g: float | None = None, kappa_in: float | None = None,
              decoder_kind: str | None = None, alpha: float | None = None) -> list[dict]:
    """One result row per configured distance, with p_L(d) / p_L(previous d)."""
    g = cfg.cavity.g if g is None else g
    kappa_in = cfg.cavity.kappa_in if kappa_in is None else kappa_in
    kind = decoder_kind or cfg.decoder.kind
    a = cfg.decoder.alpha if alpha is None else alpha
    rows, prev = [], None
    for d in cfg.run.distances:
        try:
            rate, setup = evaluate(cfg, g, kappa_in, d, kind, a)
        except Exception as exc:
            raise RuntimeError(f"point g={g}, kappa_in={kappa_in}, d={d}: {exc}") from exc
        op, ctx = setup.operating_point, setup.ctx
        budget = ctx.budget
        rows.append({
            "structure": setup.structure.kind.value,
            "decoder": kind,
            "alpha": a if kind == "weighted" else "",
            "g": g,
            "kappa_in": kappa_in,
            "C_in": g * g / (2 * kappa_in * cfg.cavity.gamma) if kappa_in > 0 else math.inf,
            "T2": cfg.cavity.T2,
            "p_sw": cfg.run.p_sw,
            "p_cir": cfg.run.p_cir,
            "d": d,
            "cycles": ctx.cycles,
            "shots": rate.shots,
            "failures": rate.failures,
            "p_L": rate.per_cycle,
            "ci_low": rate.ci[0],
            "ci_high": rate.ci[1],
            "ratio_to_prev": (rate.per_cycle / prev if prev else "") if prev is not None else "",
            "kappa_ex": op.kappa_ex if op else "",
            "pulse_length": op.pulse_length if op else "",
            "P_tot": op.p_tot if op else "",
            "p_cav": budget.p_cav,
            "p_del": budget.p_del,
            "W1": budget.profile.w[1],
            "p_z": ctx.p_z,
            "depth": setup.structure.depth,
            "n_cavities": setup.structure.n_cavities,
        })
        prev = rate.per_cycle
    return rows


# --------------------------------------------------------------------------
# Requirement boundary


BOUNDARY_COLUMNS = [
    "structure", "decoder", "alpha", "kappa_in", "d_low", "d_high", "g_star", "g_lo", "g_hi",
    "C_in_star", "resolved", "evaluations",
]


@dataclass(frozen=True)
class BoundaryResult:
    kappa_in: float
    g_star: float
    g_lo: float
    g_hi: float
    resolved: bool
    trace: tuple[tuple[float, float, float, bool], ...]  # (g, pL_low, pL_high, decided)


# Above this failure fraction the logical outcome is close to a coin toss and
# the per-cycle rate 1 - f_pro**(1/d) shrinks with d for no physical reason.
SATURATION = 0.5


def _below_threshold(low: LogicalRate, high: LogicalRate) -> tuple[bool, bool]:
    """(p_L shrinks with distance, decided at 95% confidence)."""
    if 1.0 - high.f_pro >= SATURATION:
        return False, True
    decided = not low.overlaps(high)
    if low.failures == 0 and high.failures == 0:
        return True, False
    return high.per_cycle < low.per_cycle, decided


def boundary_search(cfg: ExperimentConfig, kappa_in: float, decoder_kind: str | None = None,
                    alpha: float | None = None) -> BoundaryResult:
    """Smallest g with p_L(d_high) < p_L(d_low), by log-scale bisection."""
    camp = cfg.campaign
    trace = []

    def probe(g):
        lo_rate, _ = evaluate(cfg, g, kappa_in, camp.d_low, decoder_kind, alpha)
        hi_rate, _ = evaluate(cfg, g, kappa_in, camp.d_high, decoder_kind, alpha)
        below, decided = _below_threshold(lo_rate, hi_rate)
        trace.append((g, lo_rate.per_cycle, hi_rate.per_cycle, decided))
        return below, decided

    lo, hi = camp.g_min, camp.g_max
    resolved = True
    below, decided = probe(lo)
    if below:
        return BoundaryResult(kappa_in, lo, lo, lo, decided, tuple(trace))
    resolved &= decided
    below, decided = probe(hi)
    resolved &= decided
    if not below:
        return BoundaryResult(kappa_in, math.inf, hi, math.inf, False, tuple(trace))
    for _ in range(camp.bisections):
        mid = math.sqrt(lo * hi)
        below, decided = probe(mid)
        resolved &= decided
        if below:
            hi = mid
        else:
            lo = mid
    return BoundaryResult(kappa_in, math.sqrt(lo * hi), lo, hi, resolved, tuple(trace))


def boundary_rows(cfg: ExperimentConfig, results: list[tuple[str, float | None, BoundaryResult]]) -> list[dict]:
    rows = []
    for kind, alpha, res in results:
        rows.append({
            "structure": cfg.run.structure,
            "decoder": kind,
            "alpha": alpha if kind == "weighted" else "",
            "kappa_in": res.kappa_in,
            "d_low": cfg.campaign.d_low,
            "d_high": cfg.campaign.d_high,
            "g_star": res.g_star,
            "g_lo": res.g_lo,
            "g_hi": res.g_hi,
            "C_in_star": res.g_star**2 / (2 * res.kappa_in * cfg.cavity.gamma),
            "resolved": int(res.resolved),
            "evaluations": len(res.trace),
        })
    return rows


TRACE_COLUMNS = ["decoder", "kappa_in", "g", "p_L_low", "p_L_high", "decided"]


def trace_rows(results: list[tuple[str, float | None, BoundaryResult]]) -> list[dict]:
    """Every (g, p_L(d_low), p_L(d_high)) probe made by the bisections, in order."""
    return [
        {"decoder": kind, "kappa_in": res.kappa_in, "g": g, "p_L_low": lo, "p_L_high": hi, "decided": int(dec)}
        for kind, _, res in results
        for g, lo, hi, dec in res.trace
    ]


def calibrate_alpha(cfg: ExperimentConfig, g: float | None = None, kappa_in: float | None = None,
                    d: int | None = None, alphas=None) -> list[dict]:
    """Weighted-decoder logical error rate for each alpha at one point."""
    g = cfg.cavity.g if g is None else g
    kappa_in = cfg.cavity.kappa_in if kappa_in is None else kappa_in
    d = d or max(cfg.run.distances)
    rows = []
    for a in alphas or cfg.campaign.alphas:
        rate, _ = evaluate(cfg, g, kappa_in, d, "weighted", a)
        rows.append({
            "alpha": a, "g": g, "kappa_in": kappa_in, "d": d, "shots": rate.shots,
            "failures": rate.failures, "p_L": rate.per_cycle, "ci_low": rate.ci[0], "ci_high": rate.ci[1],
        })
    return rows


# --------------------------------------------------------------------------
# Output


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _channel_hashes(cfg: ExperimentConfig) -> dict[str, str]:
    """Digest of every twirled channel used at the configured point."""
    out = {}
    for d in cfg.run.distances:
        setup = setup_point(cfg, cfg.cavity.g, cfg.cavity.kappa_in, d)
        for w in (3, 4):
            models = [m for m in setup.ctx.models if m.channel.weight == w]
            if models:
                blob = json.dumps(models[0].channel.to_json(), sort_keys=True).encode()
                out[f"d{d}_w{w}"] = hashlib.sha256(blob).hexdigest()
    return out


def build_manifest(cfg: ExperimentConfig, command: str, outputs: dict[str, str], extra: dict | None = None) -> dict:
    """Everything needed to regenerate the outputs; deliberately free of timestamps."""
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.run.seed,
        "batch_size": BATCH_SIZE,
        "config": cfg.to_dict(),
        "channel_hashes": _channel_hashes(cfg),
        "outputs": {name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for name, p in sorted(outputs.items())},
    }
    if extra:
        doc.update(extra)
    return doc


def write_manifest(path: Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def physics_point(cfg: ExperimentConfig, d: int) -> tuple[CavityParams, PulseParams, NoiseBudget]:
    setup = setup_point(cfg, cfg.cavity.g, cfg.cavity.kappa_in, d)
    op = setup.operating_point
    if op is None:
        raise ValueError("physics report is unavailable in synthetic mode")
    return op.params, op.pulse, make_budget(op.params, op.pulse, cfg.cavity.T2, (cfg.run.p_sw, cfg.run.p_cir))
