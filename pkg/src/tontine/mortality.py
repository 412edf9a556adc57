"""Gompertz-Makeham hazard model, survival function, and life-table fitting.

The hazard is lambda_t = a1*exp(a2*t) + a3 with t measured in years past a
base age (retirement age 65 by default).  Integrals elsewhere in the package
are truncated at a limiting age carried on the parameter object.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

DEFAULT_BASE_AGE = 65
DEFAULT_LIMITING_AGE = 115

__all__ = [
    "DEFAULT_BASE_AGE",
    "DEFAULT_LIMITING_AGE",
    "GompertzMakehamParams",
    "GompertzMakehamFit",
    "LifeTable",
    "LifeTableError",
    "force_of_mortality",
    "cumulative_hazard",
    "survival",
    "fit_gompertz_makeham",
    "fit_to_csv",
]


class LifeTableError(ValueError):
    """Raised for malformed life-table input."""


@dataclass(frozen=True)
class GompertzMakehamParams:
    """Hazard constants, all nonnegative, rates per year.

    a1 is the level of the exponential term, a2 its growth rate and a3 a
    constant hazard floor.  ``limiting_age_years`` is the truncation horizon
    T_max in years past the base age (50 by default, i.e. age 115 from 65).
    """

    a1: float
    a2: float
    a3: float
    limiting_age_years: float = float(DEFAULT_LIMITING_AGE - DEFAULT_BASE_AGE)

    def __post_init__(self) -> None:
        if self.a1 < 0 or self.a2 < 0 or self.a3 < 0:
            raise ValueError("hazard constants a1, a2, a3 must be nonnegative")
        if not self.limiting_age_years > 0:
            raise ValueError("limiting_age_years must be positive")

    def with_limiting_age_years(self, t_max: float) -> "GompertzMakehamParams":
        return replace(self, limiting_age_years=t_max)


def _check_times(t: np.ndarray) -> None:
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")


def force_of_mortality(t, params: GompertzMakehamParams):
    """Hazard rate a1*exp(a2*t) + a3 at time t (years past base age)."""
    t = np.asarray(t, dtype=float)
    _check_times(t)
    out = params.a1 * np.exp(params.a2 * t) + params.a3
    return out if out.ndim else float(out)


def cumulative_hazard(t, params: GompertzMakehamParams):
    """Integral of the hazard over [0, t]; exact closed form.

    Computed with expm1 so small a2*t loses no precision; the a2 = 0 limit
    (a1+a3)*t is the continuous extension of the same expression.
    """
    t = np.asarray(t, dtype=float)
    _check_times(t)
    # a1/a2 * expm1(a2*t) rewritten as a1*t * expm1(x)/x with x = a2*t, so a
    # tiny a2 cannot overflow the ratio; the x -> 0 limit of expm1(x)/x is 1.
    x = params.a2 * t
    ratio = np.ones_like(x)
    np.divide(np.expm1(x), x, out=ratio, where=x > 0)
    out = params.a1 * t * ratio + params.a3 * t
    return out if out.ndim else float(out)


def survival(t, params: GompertzMakehamParams):
    """Probability of surviving t years past the base age, in (0, 1]."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-cumulative_hazard(t, params))
    return out if out.ndim else float(out)


# ============================================================================
# Life tables
# ============================================================================

@dataclass(frozen=True)
class LifeTable:
    """Survival probabilities relative to the base age at integer ages."""

    base_age: int
    ages: np.ndarray
    survival: np.ndarray

    def __post_init__(self) -> None:
        ages = np.asarray(self.ages, dtype=int)
        surv = np.asarray(self.survival, dtype=float)
        if ages.shape != surv.shape or ages.ndim != 1:
            raise LifeTableError("ages and survival must be 1-d arrays of equal length")
        if ages.size < 2:
            raise LifeTableError("life table needs at least 2 rows")
        if np.any(np.diff(ages) <= 0):
            raise LifeTableError("ages must be strictly increasing")
        if ages[0] != self.base_age:
            raise LifeTableError("first row must be the base age")
        if abs(surv[0] - 1.0) > 1e-9:
            raise LifeTableError("survival at the base age must equal 1")
        if np.any(surv < 0) or np.any(surv > 1):
            raise LifeTableError("survival values must lie in [0, 1]")
        if np.any(np.diff(surv) > 1e-12):
            raise LifeTableError(
                "survival must be nonincreasing in age; "
                f"first violation after age {int(ages[np.argmax(np.diff(surv) > 1e-12)])}"
            )
        ages.setflags(write=False)
        surv.setflags(write=False)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "survival", surv)

    @property
    def rows(self) -> list[tuple[int, float]]:
        return list(zip(self.ages.tolist(), self.survival.tolist()))

    @property
    def years_past_base(self) -> np.ndarray:
        return (self.ages - self.base_age).astype(float)

    @classmethod
    def from_death_probabilities(cls, ages, qx) -> "LifeTable":
        """Build a table from one-year death probabilities q_x.

        Each q applies between its age and the next year, so the resulting
        table extends one row past the last input age, with survival given by
        the running product of (1 - q).
        """
        ages = np.asarray(ages, dtype=int)
        qx = np.asarray(qx, dtype=float)
        if ages.shape != qx.shape or ages.ndim != 1 or ages.size < 1:
            raise LifeTableError("ages and qx must be 1-d arrays of equal length")
        if np.any(np.diff(ages) != 1):
            raise LifeTableError("qx rows must be at consecutive integer ages")
        if np.any(qx < 0) or np.any(qx > 1):
            raise LifeTableError("death probabilities must lie in [0, 1]")
        out_ages = np.concatenate([ages, [ages[-1] + 1]])
        surv = np.concatenate([[1.0], np.cumprod(1.0 - qx)])
        return cls(base_age=int(ages[0]), ages=out_ages, survival=surv)

    @classmethod
    def from_csv(cls, path_or_buf) -> "LifeTable":
        """Read `age,survival` or `age,qx` CSV (blank lines ignored)."""
        if hasattr(path_or_buf, "read"):
            text = path_or_buf.read()
        else:
            with open(path_or_buf, "r", encoding="utf-8") as fh:
                text = fh.read()
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if not rows:
            raise LifeTableError("empty life-table CSV")
        header = [c.strip().lower() for c in rows[0]]
        if header[:2] not in (["age", "survival"], ["age", "qx"]):
            raise LifeTableError("life-table CSV header must be 'age,survival' or 'age,qx'")
        try:
            ages = np.array([int(r[0]) for r in rows[1:]])
            vals = np.array([float(r[1]) for r in rows[1:]])
        except (ValueError, IndexError) as exc:
            raise LifeTableError(f"malformed life-table row: {exc}") from exc
        if header[1] == "qx":
            return cls.from_death_probabilities(ages, vals)
        return cls(base_age=int(ages[0]), ages=ages, survival=vals)


# ============================================================================
# Least-squares fit
# ============================================================================

@dataclass(frozen=True)
class GompertzMakehamFit:
    params: GompertzMakehamParams
    objective: float


# Deterministic multi-start grid: 16 log-spaced starting triples.
_START_A1 = np.geomspace(1e-4, 5e-2, 4)
_START_A2 = np.geomspace(5e-2, 2e-1, 2)
_START_A3 = np.geomspace(1e-4, 1e-2, 2)

# Optimization runs in (log a1, log a2, a3) with a3 clamped at 0; the clamp
# rather than a transform keeps a3 = 0 exactly reachable.
_NM_OPTIONS = {"xatol": 1e-13, "fatol": 1e-16, "maxiter": 6000, "maxfev": 9000}


def _fit_objective(x: np.ndarray, t: np.ndarray, s: np.ndarray, t_max: float) -> float:
    params = GompertzMakehamParams(
        a1=float(np.exp(x[0])),
        a2=float(np.exp(x[1])),
        a3=float(max(x[2], 0.0)),
        limiting_age_years=t_max,
    )
    resid = s - survival(t, params)
    return float(np.dot(resid, resid))


def fit_gompertz_makeham(
    table: LifeTable, limiting_age_years: float | None = None
) -> GompertzMakehamFit:
    """Least-squares fit of (a1, a2, a3) to a life table's survival column.

    Minimizes the sum of squared differences between the table's survival
    probabilities and the model survival at the same ages, via Nelder-Mead
    from 16 deterministic log-spaced starts (best kept, then re-polished).
    """
    if len(table.ages) < 4:
        raise LifeTableError("life table too short: need at least 4 rows to fit 3 parameters")
    t = table.years_past_base
    s = table.survival
    t_max = (
        float(limiting_age_years)
        if limiting_age_years is not None
        else float(DEFAULT_LIMITING_AGE - table.base_age)
    )

    best_x, best_f = None, np.inf
    for a1, a2, a3 in itertools.product(_START_A1, _START_A2, _START_A3):
        x0 = np.array([np.log(a1), np.log(a2), a3])
        res = minimize(_fit_objective, x0, args=(t, s, t_max), method="Nelder-Mead",
                       options=_NM_OPTIONS)
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    # Polish: restart the simplex at the winner to escape a collapsed simplex.
    res = minimize(_fit_objective, best_x, args=(t, s, t_max), method="Nelder-Mead",
                   options=_NM_OPTIONS)
    if res.fun < best_f:
        best_x, best_f = res.x, res.fun

    params = GompertzMakehamParams(
        a1=float(np.exp(best_x[0])),
        a2=float(np.exp(best_x[1])),
        a3=float(max(best_x[2], 0.0)),
        limiting_age_years=t_max,
    )
    return GompertzMakehamFit(params=params, objective=float(best_f))


def fit_to_csv(fit: GompertzMakehamFit) -> str:
    """Render a fit as a CSV with header `a1,a2,a3,objective`."""
    p = fit.params
    return "a1,a2,a3,objective\n" + ",".join(
        format(v, ".12g") for v in (p.a1, p.a2, p.a3, fit.objective)
    ) + "\n"
