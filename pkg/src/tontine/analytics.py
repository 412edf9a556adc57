"""Closed-form expected income and bequest trajectories, the objective value,
and the figure-level aggregate tables (CSV-ready, one column per gamma).

Expected discounted income at rate r is X0 * e^{((mu-r)pi* - beta) t} / D(0);
it is constant exactly when (mu-r)pi* = beta, monotone increasing when the
equity premium pushes (mu-r)pi* above beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controls import (
    MarketParams,
    beta,
    log_denominator_integral,
    merton_fraction,
)
from .mortality import GompertzMakehamParams, cumulative_hazard
from .preferences import PreferenceSchedule, log_transformed_weight

__all__ = [
    "ANNUITY_INCOME_BAND",
    "BENCHMARK_GAMMAS",
    "FEASIBLE_GAMMAS",
    "IncomeCurve",
    "income_log_slope",
    "expected_discounted_income",
    "expected_discounted_bequest_value",
    "expected_wealth",
    "income_curve",
    "income_csv",
    "objective_value_closed_form",
    "alpha_curve",
    "figure_table_csv",
]

# Reference band of quoted annuity incomes per 100k at the base age; used in
# reporting and acceptance comparisons only, never inside any computation.
ANNUITY_INCOME_BAND = (4540.0, 4756.0)

# Risk-aversion sweep used by the figure tables.
BENCHMARK_GAMMAS = (0.5, -1.0, -3.0, -5.0, -8.0, -11.0)
FEASIBLE_GAMMAS = (-1.0, -3.0, -5.0, -8.0, -11.0)


def income_log_slope(market: MarketParams, gamma: float, rho: float) -> float:
    """Growth rate (mu-r)pi* - beta of the expected discounted income curve."""
    return (market.mu - market.r) * merton_fraction(market, gamma) - beta(market, gamma, rho)


def expected_discounted_income(
    t,
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    x0: float = 100_000.0,
):
    """E[e^{-rt} c*_t X*_t] = X0 e^{((mu-r)pi* - beta) t} / D(0)."""
    log_d0 = log_denominator_integral(0.0, schedule, mortality, market)
    slope = income_log_slope(market, schedule.gamma, schedule.rho)
    out = x0 * np.exp(slope * np.asarray(t, dtype=float) - log_d0)
    return out if np.ndim(out) else float(out)


def expected_discounted_bequest_value(
    t,
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    x0: float = 100_000.0,
):
    """E[e^{-rt} (1-alpha*_t) X*_t]: the income curve reweighted by b_t^{1/(1-gamma)}."""
    t = np.asarray(t, dtype=float)
    log_g = log_transformed_weight(t, schedule, mortality)
    out = expected_discounted_income(t, schedule, market, mortality, x0) * np.exp(log_g)
    return out if np.ndim(out) else float(out)


def expected_wealth(
    t,
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    x0: float = 100_000.0,
):
    """E[X*_t] = X0 e^{(r + (mu-r)pi*) t} D(t) / (D(0) S_t) under the optimal controls."""
    t = np.asarray(t, dtype=float)
    log_d0 = log_denominator_integral(0.0, schedule, mortality, market)
    log_d = np.array(
        [log_denominator_integral(float(u), schedule, mortality, market) for u in np.atleast_1d(t)]
    ).reshape(t.shape)
    growth = market.r + (market.mu - market.r) * merton_fraction(market, schedule.gamma)
    out = x0 * np.exp(growth * t + log_d - log_d0 + cumulative_hazard(t, mortality))
    return out if out.ndim else float(out)


def objective_value_closed_form(
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    x0: float = 100_000.0,
) -> float:
    """Optimal value (X0^gamma / gamma) * D(0)^{1-gamma} of the utility objective."""
    log_d0 = log_denominator_integral(0.0, schedule, mortality, market)
    gamma = schedule.gamma
    return x0**gamma / gamma * math.exp((1.0 - gamma) * log_d0)


def alpha_curve(
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    grid,
) -> np.ndarray:
    """Optimal tontine allocation alpha*_t evaluated directly on an arbitrary grid."""
    grid = np.asarray(grid, dtype=float)
    beta_value = beta(market, schedule.gamma, schedule.rho)
    log_d = np.array(
        [log_denominator_integral(float(t), schedule, mortality, market) for t in grid]
    )
    log_c = -beta_value * grid - cumulative_hazard(grid, mortality) - log_d
    return 1.0 - np.exp(log_c + log_transformed_weight(grid, schedule, mortality))


@dataclass(frozen=True)
class IncomeCurve:
    """Expected discounted income rate and bequest fraction on a grid."""

    times: np.ndarray
    expected_income: np.ndarray
    expected_bequest_fraction: np.ndarray
    note: str = "income is the instantaneous annual rate E[e^{-rt} c*_t X*_t]"


def income_curve(
    schedule: PreferenceSchedule,
    market: MarketParams,
    mortality: GompertzMakehamParams,
    x0: float = 100_000.0,
    grid=None,
) -> IncomeCurve:
    """Tabulate expected discounted income and 1 - alpha*_t on a grid."""
    if grid is None:
        grid = np.arange(0.0, mortality.limiting_age_years, 0.25)
    grid = np.asarray(grid, dtype=float)
    income = np.asarray(expected_discounted_income(grid, schedule, market, mortality, x0))
    bequest_fraction = 1.0 - alpha_curve(schedule, market, mortality, grid)
    return IncomeCurve(times=grid, expected_income=income,
                       expected_bequest_fraction=bequest_fraction)


def income_csv(curve: IncomeCurve, base_age: float = 65.0) -> str:
    """Render an income curve as `t,age,expected_income,expected_bequest_fraction`."""
    lines = ["t,age,expected_income,expected_bequest_fraction"]
    for i, t in enumerate(curve.times):
        lines.append(
            ",".join(
                format(v, ".12g")
                for v in (t, base_age + t, curve.expected_income[i],
                          curve.expected_bequest_fraction[i])
            )
        )
    return "\n".join(lines) + "\n"


def figure_table_csv(
    columns: dict[str, np.ndarray],
    grid: np.ndarray,
    base_age: float = 65.0,
) -> str:
    """Assemble a `t,age,<label>...` CSV from per-gamma columns on a shared grid."""
    labels = list(columns)
    lines = ["t,age," + ",".join(labels)]
    for i, t in enumerate(grid):
        vals = [t, base_age + t] + [columns[lab][i] for lab in labels]
        lines.append(",".join(format(v, ".12g") for v in vals))
    return "\n".join(lines) + "\n"
