"""Optimal equity, consumption, and tontine-allocation controls for a modern
tontine with time-dependent bequest preferences: closed forms, calibration,
Monte Carlo verification, and figure-level CSV reproduction.
"""

from .analytics import (
    ANNUITY_INCOME_BAND,
    FEASIBLE_GAMMAS,
    BENCHMARK_GAMMAS,
    IncomeCurve,
    alpha_curve,
    expected_discounted_bequest_value,
    expected_discounted_income,
    expected_wealth,
    income_csv,
    income_curve,
    income_log_slope,
    objective_value_closed_form,
)
from .controls import (
    ControlSchedule,
    MarketParams,
    beta,
    build_control_schedule,
    denominator_integral,
    log_denominator_integral,
    merton_fraction,
    schedule_csv,
    truncation_sensitivity,
)
from .mortality import (
    GompertzMakehamFit,
    GompertzMakehamParams,
    LifeTable,
    LifeTableError,
    cumulative_hazard,
    fit_gompertz_makeham,
    fit_to_csv,
    force_of_mortality,
    survival,
)
from .preferences import (
    CalibrationRequired,
    KappaCalibration,
    PreferenceSchedule,
    auto_rho,
    bequest_weight,
    calibrate_kappa,
    log_transformed_weight,
)
from .simulate import (
    REPORT_TIMES,
    DeterministicControls,
    SimulationConfig,
    SimulationError,
    SimulationResult,
    check_supermartingale,
    first_moment_spd_wealth,
    objective_estimate,
    scaled_controls,
    second_moment_spd_wealth_bound,
    simulate_wealth,
    summary_csv,
)

__version__ = "0.1.0"
