"""Choice of external coupling and pulse length for a given cavity and network."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cavity_physics import (
    CavityParams,
    DegenerateParameterError,
    PulseParams,
    ValidityWarning,
    delay_error_proxy,
    gate_loss_probability,
    overlap_factors,
)
from .code_layout import NetworkStructure, estimate_accumulation
from .noise_channels import NoiseBudget

__all__ = [
    "OperatingPoint",
    "BoundaryHitWarning",
    "make_budget",
    "dephasing_rate",
    "optimize_operating_point",
    "KAPPA_EX_RANGE",
    "PULSE_RANGE",
]

KAPPA_EX_RANGE = (1e-2, 1e4)
PULSE_RANGE = (1e-2, 1e6)
GRID_POINTS = 32


class BoundaryHitWarning(UserWarning):
    """The optimum sits on the edge of the search range."""


@dataclass(frozen=True)
class OperatingPoint:
    params: CavityParams
    pulse: PulseParams
    budget: NoiseBudget
    p_tot: float
    boundary_hit: bool = False

    @property
    def kappa_ex(self) -> float:
        return self.params.kappa_ex

    @property
    def pulse_length(self) -> float:
        return self.pulse.pulse_length


def dephasing_rate(T2: float) -> float:
    """First-order dephasing probability per unit time, 1 / (2 T2)."""
    if not T2 > 0:
        raise ValueError("T2 must be positive")
    return 0.0 if math.isinf(T2) else 0.5 / T2


def make_budget(
    params: CavityParams,
    pulse: PulseParams,
    T2: float = math.inf,
    peripherals: tuple[float, float] = (0.0, 0.0),
    loss_model: str = "average",
) -> NoiseBudget:
    profile = overlap_factors(params, pulse)
    p_sw, p_cir = peripherals
    return NoiseBudget(
        p_cav=gate_loss_probability(params, loss_model),
        p_del=delay_error_proxy(profile),
        p_sw=p_sw,
        p_cir=p_cir,
        p_dep=dephasing_rate(T2),
        profile=profile,
    )


Objective = Callable[[NetworkStructure, NoiseBudget, PulseParams], float]


def optimize_operating_point(
    g: float,
    kappa_in: float,
    structure: NetworkStructure,
    T2: float = math.inf,
    peripherals: tuple[float, float] = (0.0, 0.0),
    gamma: float = 1.0,
    loss_model: str = "average",
    window_factor: float = 6.0,
    objective: Objective = estimate_accumulation,
) -> OperatingPoint:
    """Minimize ``objective`` over (kappa_ex, pulse_length).

    Only couplings with ``kappa_in < kappa_ex < kappa_in + g**2/gamma`` are
    admissible, so that the two atomic states reflect with opposite sign.
    A 32 x 32 log grid is followed by two rounds of coordinate-wise
    golden-section refinement in log space; refinements are kept only when
    they improve on the best point so far.
    """
    if structure.layout.d < 2:
        raise ValueError("code distance must be >= 2")

    # The conditional phase needs L0(0) < 0 < L1(0); outside this window the
    # reflection no longer implements the controlled-phase gate.
    kex_lo = kappa_in
    kex_hi = kappa_in + g**2 / gamma

    def cost(log_k: float, log_l: float) -> float:
        if not kex_lo < 10.0**log_k < kex_hi:
            return math.inf
        try:
            params = CavityParams(g, 10.0**log_k, kappa_in, gamma)
            pulse = PulseParams(10.0**log_l, window_factor)
            return objective(structure, make_budget(params, pulse, T2, peripherals, loss_model), pulse)
        except DegenerateParameterError:
            return math.inf

    lk = np.linspace(*np.log10(KAPPA_EX_RANGE), GRID_POINTS)
    ll = np.linspace(*np.log10(PULSE_RANGE), GRID_POINTS)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        values = np.array([[cost(a, b) for b in ll] for a in lk])
        i, j = np.unravel_index(np.argmin(values), values.shape)
        best = [float(lk[i]), float(ll[j])]  # log10 coordinates
        best_cost = float(values[i, j])
        on_edge = i in (0, GRID_POINTS - 1) or j in (0, GRID_POINTS - 1)

        step = [lk[1] - lk[0], ll[1] - ll[0]]
        bounds = [(lk[0], lk[-1]), (ll[0], ll[-1])]
        for _ in range(2):
            for axis in (0, 1):
                lo = max(bounds[axis][0], best[axis] - step[axis])
                hi = min(bounds[axis][1], best[axis] + step[axis])

                def along(x, axis=axis):
                    p = list(best)
                    p[axis] = x
                    return cost(*p)

                x, fx = _golden(along, lo, hi)
                if fx < best_cost:
                    best[axis], best_cost = float(x), float(fx)
                step[axis] /= 4.0

        params = CavityParams(g, 10.0 ** best[0], kappa_in, gamma)
        pulse = PulseParams(10.0 ** best[1], window_factor)
        budget = make_budget(params, pulse, T2, peripherals, loss_model)

    if on_edge:
        warnings.warn(
            f"operating point on search edge (kappa_ex={params.kappa_ex:.3g}, L_p={pulse.pulse_length:.3g})",
            BoundaryHitWarning,
            stacklevel=2,
        )
    return OperatingPoint(params, pulse, budget, best_cost, on_edge)


def _golden(f, lo: float, hi: float, iters: int = 40) -> tuple[float, float]:
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - ratio * (b - a), a + ratio * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)
