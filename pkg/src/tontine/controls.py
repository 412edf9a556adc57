"""Closed-form optimal controls: the drift constant beta, the constant
equity fraction, the denominator integral D(t), and the consumption and
tontine-allocation rates tabulated on a uniform grid.

All integrals are computed in log space with composite 16-point
Gauss-Legendre panels (one per year, split at the bequest horizon and, for
trimmed weights with gamma < 0, geometrically refined toward the horizon
where the integrand's derivative is singular).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mortality import GompertzMakehamParams, cumulative_hazard, force_of_mortality
from .preferences import (
    TRIMMED_VARIANTS,
    PreferenceSchedule,
    log_transformed_weight,
)

__all__ = [
    "MarketParams",
    "ControlSchedule",
    "beta",
    "merton_fraction",
    "denominator_integral",
    "log_denominator_integral",
    "build_control_schedule",
    "schedule_csv",
    "truncation_sensitivity",
]

DEFAULT_GRID_STEP_YEARS = 1.0 / 52.0

# Log-space D values below this are treated as underflowed grid points and
# truncated off the schedule (exp would round them to subnormal/zero).
_LOG_UNDERFLOW = -700.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_LOG_GL_WEIGHTS = np.log(_GL_WEIGHTS)

# Geometric refinement toward a singular endpoint: panel widths shrink by
# _GRADE_RATIO per level, deep enough that the leftover sliver contributes
# below double-precision resolution.
_GRADE_RATIO = 0.5
_GRADE_LEVELS = 48


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market constants (annual drift, volatility, risk-free rate)."""

    mu: float
    sigma: float
    r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma) and math.isfinite(self.r)):
            raise ValueError("market parameters must be finite")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.mu <= self.r:
            warnings.warn("mu <= r: the equity premium is nonpositive", stacklevel=2)

    @property
    def sharpe(self) -> float:
        return (self.mu - self.r) / self.sigma


def beta(market: MarketParams, gamma: float, rho: float) -> float:
    """Drift constant r + (rho-r)/(1-gamma) - gamma/(2(1-gamma)^2) * sharpe^2."""
    one_minus = 1.0 - gamma
    return (
        market.r
        + (rho - market.r) / one_minus
        - 0.5 * gamma / one_minus**2 * market.sharpe**2
    )


def merton_fraction(market: MarketParams, gamma: float) -> float:
    """Constant optimal equity fraction (mu - r) / ((1 - gamma) sigma^2)."""
    return (market.mu - market.r) / ((1.0 - gamma) * market.sigma**2)


def has_integrability_warning(schedule: PreferenceSchedule) -> bool:
    """True when the denominator integrand diverges at the bequest horizon.

    Trimmed weights with gamma > 0 blow up like 1/(H - t) after the
    1/(1-gamma) transformation, so D is an improper divergent integral; it
    is still computed (panel values stay finite) but is mesh-dependent.
    """
    return schedule.variant in TRIMMED_VARIANTS and schedule.gamma > 0


# ============================================================================
# Quadrature
# ============================================================================

def _graded_edges(a: float, b: float) -> np.ndarray:
    """Panel edges on [a, b] refining geometrically toward b."""
    return np.concatenate([b - (b - a) * _GRADE_RATIO ** np.arange(_GRADE_LEVELS + 1), [b]])


def _interior_kinks(schedule: PreferenceSchedule, t_max: float) -> list[float]:
    kinks: list[float] = []
    if schedule.is_trimmed and schedule.horizon_years < t_max:
        kinks.append(schedule.horizon_years)
    if schedule.variant == "table":
        kinks.extend(p[0] for p in schedule.table)
    return kinks


def _panel_edges(lo: float, hi: float, schedule: PreferenceSchedule,
                 yearly: bool = True) -> np.ndarray:
    """Integration panel edges on [lo, hi]: yearly splits, weight kinks, and
    geometric refinement into the trimmed horizon for gamma < 0."""
    pts = {lo, hi}
    if yearly:
        pts.update(float(k) for k in range(math.ceil(lo), math.floor(hi) + 1))
    pts.update(k for k in _interior_kinks(schedule, hi) if lo < k < hi)
    edges = np.array(sorted(pts))

    h = schedule.horizon_years
    if schedule.is_trimmed and schedule.gamma < 0 and lo < h <= hi:
        at_h = np.searchsorted(edges, h)  # edges[at_h] == h by construction
        graded = _graded_edges(edges[at_h - 1], h)
        edges = np.unique(np.concatenate([edges, graded]))
    return edges


def _log_integrand(u: np.ndarray, schedule: PreferenceSchedule,
                   mortality: GompertzMakehamParams, beta_value: float) -> np.ndarray:
    """log of e^{-beta*u} S_u (1 + b_u^{1/(1-gamma)} lambda_u)."""
    with np.errstate(divide="ignore"):
        log_glam = log_transformed_weight(u, schedule, mortality) + np.log(
            force_of_mortality(u, mortality)
        )
    return (
        -beta_value * u
        - cumulative_hazard(u, mortality)
        + np.logaddexp(0.0, log_glam)
    )


def _log_panel_integrals(edges: np.ndarray, schedule: PreferenceSchedule,
                         mortality: GompertzMakehamParams,
                         beta_value: float) -> np.ndarray:
    """log of the Gauss-Legendre integral over each consecutive panel."""
    a = edges[:-1]
    b = edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    u = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = _log_integrand(u.ravel(), schedule, mortality, beta_value).reshape(u.shape)
    with np.errstate(divide="ignore"):
        log_jacobian = np.log(half)[:, None] + _LOG_GL_WEIGHTS[None, :]
    return logsumexp(vals + log_jacobian, axis=1)


def log_denominator_integral(
    t: float,
    schedule: PreferenceSchedule,
    mortality: GompertzMakehamParams,
    market: MarketParams,
) -> float:
    """log D(t) where D(t) = int_t^{T_max} e^{-beta*u} S_u (1 + b^{1/(1-gamma)} lambda) du."""
    t_max = mortality.limiting_age_years
    if not 0.0 <= t <= t_max:
        raise ValueError(f"t must lie in [0, {t_max}]")
    if t == t_max:
        return -np.inf
    beta_value = beta(market, schedule.gamma, schedule.rho)
    edges = _panel_edges(float(t), float(t_max), schedule)
    return float(logsumexp(_log_panel_integrals(edges, schedule, mortality, beta_value)))


def denominator_integral(
    t: float,
    schedule: PreferenceSchedule,
    mortality: GompertzMakehamParams,
    market: MarketParams,
) -> float:
    """D(t), the survival- and preference-weighted discount integral."""
    return math.exp(log_denominator_integral(t, schedule, mortality, market))


def truncation_sensitivity(
    schedule: PreferenceSchedule,
    mortality: GompertzMakehamParams,
    market: MarketParams,
    extra_years: float = 10.0,
) -> float:
    """Relative change |D(0; T_max + extra) - D(0; T_max)| / D(0; T_max).

    Diagnostic for the truncation of the upper integration limit at the
    limiting age; the integrand decays faster than any exponential, so this
    is typically far below double precision for the default horizon.
    """
    log_d = log_denominator_integral(0.0, schedule, mortality, market)
    extended = mortality.with_limiting_age_years(mortality.limiting_age_years + extra_years)
    log_d_ext = log_denominator_integral(0.0, schedule, extended, market)
    return abs(math.expm1(log_d_ext - log_d))


# ============================================================================
# Tabulated schedule
# ============================================================================

@dataclass(frozen=True)
class ControlSchedule:
    """Optimal controls tabulated on a uniform grid.

    ``grid`` runs from 0 to the last point where D stays above underflow
    (one step short of the limiting age, where D vanishes identically; any
    further truncation is recorded in ``warnings``).  Off-grid queries
    interpolate log-linearly, matching the near-exponential decay of D.
    """

    grid: np.ndarray
    pi_star: float
    c_star: np.ndarray
    alpha_star: np.ndarray
    denominator: np.ndarray
    beta: float
    gamma: float
    rho: float
    grid_step: float
    log_denominator: np.ndarray = field(repr=False)
    log_c_star: np.ndarray = field(repr=False)
    log_bequest_fraction: np.ndarray = field(repr=False)
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("grid", "c_star", "alpha_star", "denominator",
                     "log_denominator", "log_c_star", "log_bequest_fraction"):
            arr = getattr(self, name)
            arr = np.asarray(arr, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    def log_denominator_at(self, t) -> np.ndarray:
        return np.interp(t, self.grid, self.log_denominator)

    def denominator_at(self, t) -> np.ndarray:
        return np.exp(self.log_denominator_at(t))

    def consumption_at(self, t) -> np.ndarray:
        return np.exp(np.interp(t, self.grid, self.log_c_star))

    def bequest_fraction_at(self, t) -> np.ndarray:
        """1 - alpha*_t, interpolated in log space (linearly across a zero)."""
        t = np.asarray(t, dtype=float)
        out = np.exp(np.interp(t, self.grid, self.log_bequest_fraction))
        bad = ~np.isfinite(out) & np.isfinite(t)
        if np.any(bad):
            linear = np.interp(t, self.grid, 1.0 - self.alpha_star)
            out = np.where(bad, linear, out)
        return out if out.ndim else float(out)

    def tontine_fraction_at(self, t) -> np.ndarray:
        out = 1.0 - self.bequest_fraction_at(t)
        return out if np.ndim(out) else float(out)


def build_control_schedule(
    schedule: PreferenceSchedule,
    mortality: GompertzMakehamParams,
    market: MarketParams,
    grid_step: float = DEFAULT_GRID_STEP_YEARS,
) -> ControlSchedule:
    """Tabulate pi*, c*_t, alpha*_t, and D(t) on a uniform grid.

    The grid nominally spans [0, T_max] in steps of ``grid_step`` (which must
    divide T_max); the final point, where D vanishes, is dropped, and any
    additional points where D underflows are truncated with a warning note.
    The per-grid-segment integrals are accumulated once, so the whole
    schedule costs a single pass of quadrature.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    t_max = mortality.limiting_age_years
    n = round(t_max / grid_step)
    if n < 2 or abs(n * grid_step - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("grid_step must divide the limiting age horizon")
    grid_full = np.arange(n + 1) * t_max / n

    notes: list[str] = []
    if has_integrability_warning(schedule):
        notes.append(
            "integrability: transformed bequest weight diverges at the horizon "
            "for gamma > 0; D is mesh-dependent there"
        )
    if market.mu <= market.r:
        notes.append("market: mu <= r, equity premium nonpositive")

    beta_value = beta(market, schedule.gamma, schedule.rho)

    # Panel edges for the whole axis, aligned to grid points, then one
    # quadrature sweep; per-segment log integrals are grouped afterwards.
    edges = grid_full
    for k in _interior_kinks(schedule, t_max):
        if not np.any(np.abs(edges - k) < 1e-12):
            edges = np.sort(np.append(edges, k))
    h = schedule.horizon_years
    if schedule.is_trimmed and schedule.gamma < 0 and h <= t_max:
        at_h = int(np.argmin(np.abs(edges - h)))
        graded = _graded_edges(edges[at_h - 1], edges[at_h])
        edges = np.unique(np.concatenate([edges, graded]))

    log_panels = _log_panel_integrals(edges, schedule, mortality, beta_value)
    seg_of_panel = np.minimum(np.searchsorted(grid_full, edges[:-1], side="right") - 1, n - 1)
    log_segments = np.full(n, -np.inf)
    for seg in range(n):
        mask = seg_of_panel == seg
        if np.any(mask):
            log_segments[seg] = logsumexp(log_panels[mask])

    # Suffix accumulation: log D(t_i) = logsumexp of segment integrals i..n-1.
    log_d = np.logaddexp.accumulate(log_segments[::-1])[::-1]

    last = int(np.searchsorted(-log_d, -_LOG_UNDERFLOW))
    if last < 1:
        raise ValueError("denominator underflows over the whole grid; check parameters")
    if last < n:
        notes.append(
            f"truncation: dropped {n + 1 - last} trailing grid points where D(t) "
            "underflows (D vanishes at the limiting age)"
        )
    grid = grid_full[:last]
    log_d = log_d[:last]

    log_c = -beta_value * grid - cumulative_hazard(grid, mortality) - log_d
    log_bequest = log_c + log_transformed_weight(grid, schedule, mortality)
    alpha = 1.0 - np.exp(log_bequest)

    return ControlSchedule(
        grid=grid,
        pi_star=merton_fraction(market, schedule.gamma),
        c_star=np.exp(log_c),
        alpha_star=alpha,
        denominator=np.exp(log_d),
        beta=beta_value,
        gamma=schedule.gamma,
        rho=schedule.rho,
        grid_step=float(grid_step),
        warnings=tuple(notes),
        log_denominator=log_d,
        log_c_star=log_c,
        log_bequest_fraction=log_bequest,
    )


def schedule_csv(controls: ControlSchedule, base_age: float = 65.0) -> str:
    """Render a tabulated schedule as `t,age,pi_star,c_star,alpha_star,D` CSV."""
    lines = ["t,age,pi_star,c_star,alpha_star,D"]
    for i, t in enumerate(controls.grid):
        lines.append(
            ",".join(
                format(v, ".12g")
                for v in (
                    t,
                    base_age + t,
                    controls.pi_star,
                    controls.c_star[i],
                    controls.alpha_star[i],
                    controls.denominator[i],
                )
            )
        )
    return "\n".join(lines) + "\n"
