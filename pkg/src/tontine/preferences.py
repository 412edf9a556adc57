"""Bequest-weight schedules b_t and the scale calibration that zeroes the
initial tontine allocation.

Variants
--------
none           b_t = 0
power          b_t = lambda_t^gamma
scaled_power   b_t = kappa * lambda_t^gamma
trimmed        b_t = (1/(1/lambda_t - 1/lambda_H))^gamma on [0, H), 0 for t >= H
scaled_trimmed b_t = kappa * trimmed base
table          piecewise-linear interpolation of user (t, b) pairs, 0 outside

The quantity that actually enters the control formulas is the transformed
weight b_t^{1/(1-gamma)}, exposed here in log space so downstream quadrature
never underflows.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .mortality import GompertzMakehamParams, cumulative_hazard, force_of_mortality

VARIANTS = ("none", "power", "scaled_power", "trimmed", "scaled_trimmed", "table")
SCALED_VARIANTS = ("scaled_power", "scaled_trimmed")
TRIMMED_VARIANTS = ("trimmed", "scaled_trimmed")

DEFAULT_BEQUEST_HORIZON_YEARS = 20.0

__all__ = [
    "VARIANTS",
    "SCALED_VARIANTS",
    "TRIMMED_VARIANTS",
    "DEFAULT_BEQUEST_HORIZON_YEARS",
    "PreferenceSchedule",
    "KappaCalibration",
    "CalibrationRequired",
    "auto_rho",
    "bequest_weight",
    "log_transformed_weight",
    "calibrate_kappa",
]


class CalibrationRequired(ValueError):
    """A scaled variant was evaluated before its kappa was set."""


def _check_gamma(gamma: float) -> None:
    if not (gamma < 1.0 and gamma != 0.0):
        raise ValueError("gamma must satisfy gamma < 1 and gamma != 0")


def auto_rho(gamma: float, r: float) -> float:
    """Subjective discount rate that makes the planner market-consistent."""
    _check_gamma(gamma)
    return r * gamma


@dataclass(frozen=True)
class PreferenceSchedule:
    """Risk aversion, discounting, and the bequest-weight variant.

    ``kappa`` applies to scaled variants only; leaving it ``None`` marks the
    schedule as uncalibrated until :func:`calibrate_kappa` supplies a value.
    ``horizon_years`` is the bequest cutoff H used by trimmed variants.
    ``table`` holds (t, b) pairs for the custom variant.
    """

    gamma: float
    rho: float
    variant: str
    kappa: float | None = None
    horizon_years: float = DEFAULT_BEQUEST_HORIZON_YEARS
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        _check_gamma(self.gamma)
        if not math.isfinite(self.rho):
            raise ValueError("rho must be finite")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")
        if self.kappa is not None:
            if self.variant not in SCALED_VARIANTS:
                raise ValueError("kappa is only meaningful for scaled variants")
            if not (math.isfinite(self.kappa) and self.kappa > 0):
                raise ValueError("kappa must be positive and finite")
        if not self.horizon_years > 0:
            raise ValueError("horizon_years must be positive")
        if self.variant == "table":
            if self.table is None:
                raise ValueError("table variant requires (t, b) pairs")
            pairs = tuple((float(t), float(b)) for t, b in self.table)
            if len(pairs) < 2:
                raise ValueError("table variant needs at least 2 rows")
            ts = np.array([p[0] for p in pairs])
            bs = np.array([p[1] for p in pairs])
            if np.any(~np.isfinite(ts)) or np.any(~np.isfinite(bs)):
                raise ValueError("table entries must be finite")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("table times must be strictly increasing")
            if np.any(ts < 0) or np.any(bs < 0):
                raise ValueError("table times and weights must be nonnegative")
            object.__setattr__(self, "table", pairs)
        elif self.table is not None:
            raise ValueError("table pairs are only meaningful for the table variant")

    @property
    def is_scaled(self) -> bool:
        return self.variant in SCALED_VARIANTS

    @property
    def is_trimmed(self) -> bool:
        return self.variant in TRIMMED_VARIANTS

    def with_kappa(self, kappa: float) -> "PreferenceSchedule":
        return replace(self, kappa=float(kappa))

    def base_schedule(self) -> "PreferenceSchedule":
        """The kappa = 1 companion of a scaled variant (weight g_t)."""
        if self.variant == "scaled_power":
            return replace(self, variant="power", kappa=None)
        if self.variant == "scaled_trimmed":
            return replace(self, variant="trimmed", kappa=None)
        raise ValueError("base_schedule is defined for scaled variants only")


def _require_kappa(schedule: PreferenceSchedule) -> float:
    if schedule.kappa is None:
        raise CalibrationRequired(
            f"{schedule.variant} schedule has no kappa; run calibrate_kappa first"
        )
    return schedule.kappa


def _check_trimmed_hazard(mortality: GompertzMakehamParams) -> None:
    if not (mortality.a1 > 0 and mortality.a2 > 0):
        raise ValueError(
            "trimmed variants require a strictly increasing hazard (a1 > 0 and a2 > 0)"
        )


def _trimmed_gap(t: np.ndarray, schedule: PreferenceSchedule,
                 mortality: GompertzMakehamParams) -> tuple[np.ndarray, np.ndarray]:
    """1/lambda_t - 1/lambda_H wherever t < H, with its validity mask."""
    _check_trimmed_hazard(mortality)
    h = schedule.horizon_years
    lam_h = force_of_mortality(h, mortality)
    inside = t < h
    lam = force_of_mortality(np.where(inside, t, 0.0), mortality)
    gap = np.where(inside, 1.0 / lam - 1.0 / lam_h, 0.0)
    return gap, inside


def bequest_weight(t, schedule: PreferenceSchedule, mortality: GompertzMakehamParams):
    """The weight b_t of the bequest term at time t (years past base age)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    gamma = schedule.gamma
    variant = schedule.variant

    if variant == "none":
        out = np.zeros_like(t)
    elif variant in ("power", "scaled_power"):
        out = np.asarray(force_of_mortality(t, mortality)) ** gamma
        if variant == "scaled_power":
            out = _require_kappa(schedule) * out
    elif variant in TRIMMED_VARIANTS:
        gap, inside = _trimmed_gap(t, schedule, mortality)
        with np.errstate(divide="ignore"):
            out = np.where(inside, np.where(inside, gap, 1.0) ** (-gamma), 0.0)
        if variant == "scaled_trimmed":
            out = _require_kappa(schedule) * out
    else:  # table
        ts = np.array([p[0] for p in schedule.table])
        bs = np.array([p[1] for p in schedule.table])
        out = np.interp(t, ts, bs, left=0.0, right=0.0)
        # np.interp clamps outside the knots; the contract is zero there.
        out = np.where((t < ts[0]) | (t > ts[-1]), 0.0, out)
    return out if out.ndim else float(out)


def log_transformed_weight(t, schedule: PreferenceSchedule,
                           mortality: GompertzMakehamParams):
    """log of b_t^{1/(1-gamma)}, with -inf wherever b_t = 0.

    This is the numerically safe form consumed by the control quadrature;
    exponent identities are applied analytically so extreme gamma never
    overflows an intermediate power.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    gamma = schedule.gamma
    one_minus = 1.0 - gamma
    variant = schedule.variant

    if variant == "none":
        out = np.full_like(t, -np.inf)
    elif variant in ("power", "scaled_power"):
        out = (gamma / one_minus) * np.log(force_of_mortality(t, mortality))
        if variant == "scaled_power":
            out = out + math.log(_require_kappa(schedule)) / one_minus
    elif variant in TRIMMED_VARIANTS:
        gap, inside = _trimmed_gap(t, schedule, mortality)
        with np.errstate(divide="ignore"):
            out = np.where(
                inside, (-gamma / one_minus) * np.log(np.where(inside, gap, 1.0)), -np.inf
            )
        if variant == "scaled_trimmed":
            out = out + math.log(_require_kappa(schedule)) / one_minus
    else:  # table
        b = np.asarray(bequest_weight(t, schedule, mortality))
        with np.errstate(divide="ignore"):
            out = np.log(b) / one_minus
    return out if out.ndim else float(out)


# ============================================================================
# Kappa calibration: pick the scale so the optimal initial tontine
# allocation is exactly zero.
# ============================================================================

@dataclass(frozen=True)
class KappaCalibration:
    """Result of the zero-initial-allocation calibration.

    ``residual`` is the |alpha*_0| achieved when the controls are rebuilt
    with the returned kappa.  Infeasible cases (possible only for gamma > 0)
    carry kappa = nan and residual = inf.
    """

    kappa: float
    residual: float
    feasible: bool


def calibrate_kappa(
    schedule: PreferenceSchedule,
    market,
    mortality: GompertzMakehamParams,
) -> KappaCalibration:
    """Solve for the kappa of a scaled variant that makes alpha*_0 = 0.

    Writing m = kappa^{1/(1-gamma)} and g_t for the kappa = 1 transformed
    weight, the condition alpha*_0 = 0 reads m*g_0 = A + m*B with
    A = integral of e^{-beta*u} S_u and B = integral of e^{-beta*u} S_u
    g_u lambda_u over [0, T_max].  The equation is linear in m and feasible
    exactly when g_0 - B > 0; kappa = m^{1-gamma}.  A warning is issued when
    rho deviates from r*gamma, for which the feasibility characterisation
    was derived.
    """
    from .controls import log_denominator_integral  # deferred: avoids an import cycle

    if schedule.variant not in SCALED_VARIANTS:
        raise ValueError("calibrate_kappa applies to scaled variants only")
    if abs(schedule.rho - auto_rho(schedule.gamma, market.r)) > 1e-12:
        warnings.warn(
            "calibrating with rho != r*gamma; feasibility may not follow the "
            "sign of gamma",
            stacklevel=2,
        )

    base = schedule.base_schedule()
    none = replace(base, variant="none", table=None, kappa=None)
    log_a = log_denominator_integral(0.0, none, mortality, market)
    log_d_base = log_denominator_integral(0.0, base, mortality, market)
    a_val = math.exp(log_a)
    b_val = math.exp(log_d_base) - a_val
    g0 = math.exp(log_transformed_weight(0.0, base, mortality))

    denom = g0 - b_val
    if not denom > 0:
        return KappaCalibration(kappa=float("nan"), residual=float("inf"), feasible=False)

    m = a_val / denom
    kappa = m ** (1.0 - schedule.gamma)
    calibrated = schedule.with_kappa(kappa)
    log_d0 = log_denominator_integral(0.0, calibrated, mortality, market)
    alpha0 = 1.0 - math.exp(log_transformed_weight(0.0, calibrated, mortality) - log_d0)
    return KappaCalibration(kappa=float(kappa), residual=abs(alpha0), feasible=True)
