"""Reflection response of an atom-cavity system and the derived pulse quantities.

All rates are in units of the atomic polarization decay rate (``gamma = 1``
unless set explicitly); times are in units of ``1/gamma``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CavityParams",
    "PulseParams",
    "DelayProfile",
    "DegenerateParameterError",
    "GridResolutionError",
    "ValidityWarning",
    "response_function",
    "reflection_delays",
    "overlap_factors",
    "numeric_overlap",
    "gate_loss_probability",
    "delay_error_proxy",
    "physics_report",
]

LOSS_MODELS = ("average", "worst_case")


class DegenerateParameterError(ValueError):
    """A delay formula hit a (numerically) vanishing denominator."""


class GridResolutionError(RuntimeError):
    """Quadrature did not converge when the grid step was halved."""


class ValidityWarning(UserWarning):
    """The first-order delay model is used outside its validity range."""


@dataclass(frozen=True)
class CavityParams:
    g: float
    kappa_ex: float
    kappa_in: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("g", "kappa_ex", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite rate, got {value!r}")
        if not (math.isfinite(self.kappa_in) and self.kappa_in >= 0):
            raise ValueError(f"kappa_in must be >= 0, got {self.kappa_in!r}")

    @property
    def kappa(self) -> float:
        return self.kappa_ex + self.kappa_in

    @property
    def internal_cooperativity(self) -> float:
        if self.kappa_in <= 0:
            raise ValueError("internal cooperativity is undefined for kappa_in = 0")
        return self.g**2 / (2.0 * self.kappa_in * self.gamma)

    def with_kappa_ex(self, kappa_ex: float) -> CavityParams:
        return CavityParams(self.g, kappa_ex, self.kappa_in, self.gamma)


@dataclass(frozen=True)
class PulseParams:
    """Gaussian pulse of amplitude width ``pulse_length``.

    ``window_factor * pulse_length`` is the time one reflection occupies a
    cavity (the pulse is truncated at +-3 widths by default).
    """

    pulse_length: float
    window_factor: float = 6.0

    def __post_init__(self):
        if not (math.isfinite(self.pulse_length) and self.pulse_length > 0):
            raise ValueError(f"pulse_length must be positive, got {self.pulse_length!r}")
        if not self.window_factor >= 1:
            raise ValueError(f"window_factor must be >= 1, got {self.window_factor!r}")

    @property
    def occupation_time(self) -> float:
        return self.window_factor * self.pulse_length


@dataclass(frozen=True)
class DelayProfile:
    tau0: float
    tau1: float
    w: tuple[float, ...] = field(default=(1.0,))

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        if not w or w[0] != 1.0:
            raise ValueError("W_0 must be exactly 1")
        if any(not (0.0 <= x <= 1.0) for x in w):
            raise ValueError(f"overlap factors must lie in [0, 1], got {w}")
        if any(b > a for a, b in zip(w, w[1:])):
            raise ValueError(f"overlap factors must be non-increasing, got {w}")

    @classmethod
    def ideal(cls, max_m: int = 4) -> DelayProfile:
        return cls(0.0, 0.0, (1.0,) * (max_m + 1))

    @classmethod
    def from_w1(cls, w1: float, max_m: int = 4) -> DelayProfile:
        """Gaussian family W_m = W_1 ** (m**2), with delays left unspecified."""
        return cls(math.nan, math.nan, tuple(w1 ** (m * m) for m in range(max_m + 1)))

    def __getitem__(self, m: int) -> float:
        return self.w[m]


def response_function(params: CavityParams, delta: float, atom_state: int) -> complex:
    """Amplitude reflection coefficient L_q(delta) of the single-sided cavity."""
    if atom_state not in (0, 1):
        raise ValueError("atom_state must be 0 or 1")
    s = -1j * delta
    num = -params.kappa_ex + params.kappa_in + s
    den = params.kappa_ex + params.kappa_in + s
    if atom_state == 1:
        coupling = params.g**2 / (params.gamma + s)
        num += coupling
        den += coupling
    return complex(num / den)


def reflection_delays(params: CavityParams) -> tuple[float, float]:
    """First-order reflection delays (tau0, tau1) for the atom in |0> and |1>."""
    g2 = params.g**2
    gam, kex, kin = params.gamma, params.kappa_ex, params.kappa_in

    den0 = kex**2 - kin**2
    if abs(den0) < 1e-12 * (kex**2 + kin**2):
        raise DegenerateParameterError("tau0 diverges for kappa_ex == kappa_in")
    tau0 = 2.0 * kex / den0

    den1 = g2**2 + gam**2 * (kin**2 - kex**2) + 2.0 * g2 * gam * kin
    scale1 = g2**2 + gam**2 * (kin**2 + kex**2) + 2.0 * g2 * gam * kin
    if abs(den1) < 1e-12 * scale1:
        raise DegenerateParameterError("tau1 diverges for these cavity parameters")
    tau1 = 2.0 * kex * (g2 - gam**2) / den1
    return tau0, tau1


def _check_validity(params: CavityParams, pulse: PulseParams) -> None:
    timescale = max(1.0 / params.kappa, params.kappa / params.g**2)
    if pulse.pulse_length < 10.0 * timescale:
        warnings.warn(
            f"pulse_length={pulse.pulse_length:.3g} is not >> max(1/kappa, kappa/g^2)"
            f"={timescale:.3g}; first-order delay model may be inaccurate",
            ValidityWarning,
            stacklevel=3,
        )


def overlap_factors(params: CavityParams, pulse: PulseParams, max_m: int = 4) -> DelayProfile:
    """Closed-form Gaussian overlaps W_m = exp(-m^2 (tau0 - tau1)^2 / (4 L_p^2))."""
    if max_m < 1:
        raise ValueError("max_m must be >= 1")
    _check_validity(params, pulse)
    tau0, tau1 = reflection_delays(params)
    x = (tau0 - tau1) ** 2 / (4.0 * pulse.pulse_length**2)
    w = tuple(math.exp(-(m * m) * x) for m in range(max_m + 1))
    return DelayProfile(tau0, tau1, w)


def _gaussian_overlap(shift: float, width: float, step: float) -> float:
    lo = min(0.0, shift) - 6.0 * width
    hi = max(0.0, shift) + 6.0 * width
    n = int(math.ceil((hi - lo) / step)) + 1
    t = np.linspace(lo, hi, n)
    norm = (math.pi * width**2) ** -0.25
    f = norm * np.exp(-(t**2) / (2.0 * width**2))
    g = norm * np.exp(-((t - shift) ** 2) / (2.0 * width**2))
    return float(np.trapezoid(f * g, t))


def numeric_overlap(params: CavityParams, pulse: PulseParams, m: int) -> float:
    """W_m by direct quadrature of two normalized Gaussian envelopes.

    The second envelope is delayed by ``m * |tau0 - tau1|``.  Raises
    :class:`GridResolutionError` if halving the step changes the result by
    more than 1e-8 even after refinement.
    """
    _check_validity(params, pulse)
    tau0, tau1 = reflection_delays(params)
    shift = m * abs(tau0 - tau1)
    width = pulse.pulse_length
    step = width / 8.0
    coarse = _gaussian_overlap(shift, width, step)
    for _ in range(6):
        step /= 2.0
        fine = _gaussian_overlap(shift, width, step)
        if abs(fine - coarse) <= 1e-8:
            return fine
        coarse = fine
    raise GridResolutionError(f"overlap for m={m} did not converge (last change {abs(fine - coarse):.2e})")


def gate_loss_probability(params: CavityParams, loss_model: str = "average") -> float:
    """Photon loss probability p_cav of one reflection at zero detuning.

    ``average`` takes the survival deficit averaged over the two atomic
    states; ``worst_case`` uses the lossier branch.
    """
    r0 = abs(response_function(params, 0.0, 0)) ** 2
    r1 = abs(response_function(params, 0.0, 1)) ** 2
    if loss_model == "average":
        p = 1.0 - 0.5 * (r0 + r1)
    elif loss_model == "worst_case":
        p = 1.0 - min(r0, r1)
    else:
        raise ValueError(f"unknown loss_model {loss_model!r}; expected one of {LOSS_MODELS}")
    return min(1.0, max(0.0, p))


def delay_error_proxy(profile: DelayProfile) -> float:
    """Scalar pulse-distortion error (1 - W_1) / 2, used by the optimizer only."""
    return 0.5 * (1.0 - profile.w[1])


def physics_report(params: CavityParams, pulse: PulseParams, loss_model: str = "average") -> str:
    """Flat ``name = value`` block for golden-file comparisons."""
    profile = overlap_factors(params, pulse)
    rows = [
        ("g", params.g),
        ("gamma", params.gamma),
        ("kappa_ex", params.kappa_ex),
        ("kappa_in", params.kappa_in),
        ("pulse_length", pulse.pulse_length),
        ("window_factor", pulse.window_factor),
        ("tau0", profile.tau0),
        ("tau1", profile.tau1),
    ]
    rows += [(f"W{m}", w) for m, w in enumerate(profile.w)]
    rows += [
        ("p_cav", gate_loss_probability(params, loss_model)),
        ("p_del", delay_error_proxy(profile)),
    ]
    if params.kappa_in > 0:
        rows.append(("C_in", params.internal_cooperativity))
    return "".join(f"{name} = {float(value)!r}\n" for name, value in rows)
