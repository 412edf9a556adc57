"""Command-line front end: life-table fitting, kappa calibration, control
schedules, income curves, Monte Carlo summaries, and the four figure CSVs.

Every command is deterministic given its configuration (including the seed);
failures exit nonzero after printing a single machine-parseable line
``error: <CODE>: <message>`` to stderr and removing any partial outputs.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .analytics import (
    FEASIBLE_GAMMAS,
    BENCHMARK_GAMMAS,
    alpha_curve,
    figure_table_csv,
    income_csv,
    income_curve,
)
from .controls import (
    MarketParams,
    build_control_schedule,
    schedule_csv,
)
from .mortality import (
    GompertzMakehamParams,
    LifeTable,
    LifeTableError,
    fit_gompertz_makeham,
    fit_to_csv,
)
from .preferences import (
    SCALED_VARIANTS,
    VARIANTS,
    CalibrationRequired,
    PreferenceSchedule,
    auto_rho,
    calibrate_kappa,
)
from .simulate import (
    SimulationConfig,
    SimulationError,
    simulate_wealth,
    summary_csv,
)

COMMANDS = ("fit", "calibrate", "schedule", "income", "simulate", "figures")

# Default parameter set (calibrated market and mortality constants, base age
# 65, limiting age 115, bequest horizon 20); `figures` always uses these.
DEFAULTS: dict[str, object] = {
    "gamma": -3.0,
    "mu": 0.10,
    "sigma": 0.20,
    "r": 0.03,
    "rho": "auto",
    "variant": "scaled_trimmed",
    "kappa": "auto",
    "horizon_years": 20.0,
    "base_age": 65.0,
    "limiting_age": 115.0,
    "a1": 0.00584,
    "a2": 0.12150,
    "a3": 0.0024117,
    "grid_step": "1/52",
    "paths": 10_000,
    "seed": 53_424,
    "x0": 100_000.0,
    "sim_horizon": 20.0,
    "sim_step": "1/52",
    "table_path": "",
    "out": "",
}
VALID_KEYS = tuple(sorted(DEFAULTS))

_FIGURE_GRID_STEP = 0.25

_DEFAULT_OUT = {
    "fit": "fit.csv",
    "calibrate": "calibration.csv",
    "schedule": "schedule.csv",
    "income": "income.csv",
    "simulate": "simulation.csv",
    "figures": ".",
}


class CliError(Exception):
    """Structured failure: a short machine code plus a human message."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: A003 - argparse hook
        raise CliError("USAGE", message)


@dataclass
class RunConfig:
    """A resolved command invocation: command name, merged key=value
    overrides (defaults < config file < flags), and output location."""

    command: str
    overrides: dict[str, object]
    out: str
    seed: int
    paths: dict[str, str] = field(default_factory=dict)


class _OutputSet:
    """Atomic CSV writes with rollback of everything written on failure."""

    def __init__(self) -> None:
        self._written: list[str] = []

    def write(self, path: str, text: str) -> None:
        tmp = path + ".part"
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except OSError as exc:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise CliError("IO", f"cannot write {path}: {exc}") from exc
        self._written.append(path)

    def rollback(self) -> None:
        for path in self._written:
            try:
                os.unlink(path)
            except OSError:
                pass


# ----------------------------------------------------------------------------
# Configuration plumbing
# ----------------------------------------------------------------------------

def _parse_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError("IO", f"cannot read config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError("CONFIG", f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise CliError(
                "CONFIG",
                f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(VALID_KEYS)}",
            )
        out[key] = value
    return out


def _as_float(merged: dict, key: str) -> float:
    value = merged[key]
    if isinstance(value, str):
        value = value.strip()
        if "/" in value:
            try:
                return float(Fraction(value))
            except (ValueError, ZeroDivisionError) as exc:
                raise CliError("CONFIG", f"{key}: cannot parse {value!r}") from exc
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise CliError("CONFIG", f"{key}: cannot parse {value!r} as a number") from exc


def _as_int(merged: dict, key: str) -> int:
    try:
        return int(str(merged[key]).strip())
    except (TypeError, ValueError) as exc:
        raise CliError("CONFIG", f"{key}: cannot parse {merged[key]!r} as an integer") from exc


def _resolved_market(merged: dict) -> MarketParams:
    try:
        return MarketParams(
            mu=_as_float(merged, "mu"), sigma=_as_float(merged, "sigma"), r=_as_float(merged, "r")
        )
    except ValueError as exc:
        raise CliError("CONFIG", str(exc)) from exc


def _resolved_mortality(merged: dict) -> GompertzMakehamParams:
    limiting = _as_float(merged, "limiting_age") - _as_float(merged, "base_age")
    if not limiting > 0:
        raise CliError("CONFIG", "limiting_age must exceed base_age")
    try:
        return GompertzMakehamParams(
            a1=_as_float(merged, "a1"),
            a2=_as_float(merged, "a2"),
            a3=_as_float(merged, "a3"),
            limiting_age_years=limiting,
        )
    except ValueError as exc:
        raise CliError("CONFIG", str(exc)) from exc


def _resolved_schedule(
    merged: dict, market: MarketParams, mortality: GompertzMakehamParams
) -> PreferenceSchedule:
    """Build the preference schedule, running kappa calibration if requested."""
    variant = str(merged["variant"]).strip()
    if variant not in VARIANTS:
        raise CliError(
            "CONFIG", f"unknown variant {variant!r}; valid variants: {', '.join(VARIANTS)}"
        )
    gamma = _as_float(merged, "gamma")
    rho_raw = merged["rho"]
    try:
        rho = (
            auto_rho(gamma, market.r)
            if isinstance(rho_raw, str) and rho_raw.strip() == "auto"
            else _as_float(merged, "rho")
        )
        kappa_raw = merged["kappa"]
        kappa_auto = isinstance(kappa_raw, str) and kappa_raw.strip() == "auto"
        schedule = PreferenceSchedule(
            gamma=gamma,
            rho=rho,
            variant=variant,
            kappa=None if (variant not in SCALED_VARIANTS or kappa_auto)
            else _as_float(merged, "kappa"),
            horizon_years=_as_float(merged, "horizon_years"),
        )
    except ValueError as exc:
        raise CliError("CONFIG", str(exc)) from exc
    if variant in SCALED_VARIANTS and schedule.kappa is None:
        calibration = calibrate_kappa(schedule, market, mortality)
        if not calibration.feasible:
            raise CliError(
                "CALIBRATION",
                f"kappa calibration infeasible for gamma={gamma:g} (requires gamma < 0)",
            )
        schedule = schedule.with_kappa(calibration.kappa)
    return schedule


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def _cmd_fit(config: RunConfig, out: _OutputSet) -> None:
    table_path = str(config.overrides["table_path"]).strip()
    if not table_path:
        raise CliError("CONFIG", "fit requires a life-table CSV (--table or table_path=)")
    try:
        table = LifeTable.from_csv(table_path)
    except OSError as exc:
        raise CliError("IO", f"cannot read life table {table_path}: {exc}") from exc
    except LifeTableError as exc:
        raise CliError("DATA", str(exc)) from exc
    limiting = (
        _as_float(config.overrides, "limiting_age") - _as_float(config.overrides, "base_age")
    )
    fit = fit_gompertz_makeham(table, limiting_age_years=limiting)
    out.write(config.out, fit_to_csv(fit))


def _cmd_calibrate(config: RunConfig, out: _OutputSet) -> None:
    merged = config.overrides
    market = _resolved_market(merged)
    mortality = _resolved_mortality(merged)
    variant = str(merged["variant"]).strip()
    if variant not in SCALED_VARIANTS:
        raise CliError(
            "CONFIG",
            f"calibrate requires a scaled variant ({', '.join(SCALED_VARIANTS)}), got {variant!r}",
        )
    gamma = _as_float(merged, "gamma")
    rho_raw = merged["rho"]
    rho = (
        auto_rho(gamma, market.r)
        if isinstance(rho_raw, str) and rho_raw.strip() == "auto"
        else _as_float(merged, "rho")
    )
    try:
        schedule = PreferenceSchedule(
            gamma=gamma, rho=rho, variant=variant,
            horizon_years=_as_float(merged, "horizon_years"),
        )
    except ValueError as exc:
        raise CliError("CONFIG", str(exc)) from exc
    calibration = calibrate_kappa(schedule, market, mortality)
    text = "kappa,residual,feasible\n" + ",".join(
        (
            format(calibration.kappa, ".12g"),
            format(calibration.residual, ".12g"),
            "true" if calibration.feasible else "false",
        )
    ) + "\n"
    out.write(config.out, text)


def _build_controls(merged: dict):
    market = _resolved_market(merged)
    mortality = _resolved_mortality(merged)
    schedule = _resolved_schedule(merged, market, mortality)
    controls = build_control_schedule(
        schedule, mortality, market, grid_step=_as_float(merged, "grid_step")
    )
    return market, mortality, schedule, controls


def _cmd_schedule(config: RunConfig, out: _OutputSet) -> None:
    _, _, _, controls = _build_controls(config.overrides)
    out.write(config.out, schedule_csv(controls, base_age=_as_float(config.overrides, "base_age")))


def _cmd_income(config: RunConfig, out: _OutputSet) -> None:
    merged = config.overrides
    market = _resolved_market(merged)
    mortality = _resolved_mortality(merged)
    schedule = _resolved_schedule(merged, market, mortality)
    curve = income_curve(schedule, market, mortality, x0=_as_float(merged, "x0"))
    out.write(config.out, income_csv(curve, base_age=_as_float(merged, "base_age")))


def _cmd_simulate(config: RunConfig, out: _OutputSet) -> None:
    merged = config.overrides
    market, mortality, schedule, controls = _build_controls(merged)
    sim_config = SimulationConfig(
        n_paths=_as_int(merged, "paths"),
        horizon=_as_float(merged, "sim_horizon"),
        step=_as_float(merged, "sim_step"),
        seed=config.seed,
        initial_wealth=_as_float(merged, "x0"),
    )
    result = simulate_wealth(sim_config, controls, market, mortality, schedule=schedule)
    out.write(config.out, summary_csv(result))


def _figure_defaults() -> tuple[MarketParams, GompertzMakehamParams, np.ndarray]:
    market = MarketParams(
        mu=float(DEFAULTS["mu"]), sigma=float(DEFAULTS["sigma"]), r=float(DEFAULTS["r"])
    )
    mortality = GompertzMakehamParams(
        a1=float(DEFAULTS["a1"]), a2=float(DEFAULTS["a2"]), a3=float(DEFAULTS["a3"]),
        limiting_age_years=float(DEFAULTS["limiting_age"]) - float(DEFAULTS["base_age"]),
    )
    grid = np.arange(0.0, mortality.limiting_age_years, _FIGURE_GRID_STEP)
    return market, mortality, grid


def _cmd_figures(config: RunConfig, out: _OutputSet) -> None:
    market, mortality, grid = _figure_defaults()
    base_age = float(DEFAULTS["base_age"])
    horizon = float(DEFAULTS["horizon_years"])
    x0 = float(DEFAULTS["x0"])
    outdir = config.out or "."
    if not os.path.isdir(outdir):
        raise CliError("IO", f"output directory {outdir!r} does not exist")

    def schedule_for(gamma: float, variant: str) -> PreferenceSchedule:
        sched = PreferenceSchedule(
            gamma=gamma, rho=auto_rho(gamma, market.r), variant=variant, horizon_years=horizon
        )
        if variant in SCALED_VARIANTS:
            calibration = calibrate_kappa(sched, market, mortality)
            if not calibration.feasible:
                raise CliError("CALIBRATION", f"infeasible kappa for gamma={gamma:g}")
            sched = sched.with_kappa(calibration.kappa)
        return sched

    fig1 = {
        f"alpha_{g:g}": alpha_curve(schedule_for(g, "power"), market, mortality, grid)
        for g in BENCHMARK_GAMMAS
    }
    out.write(os.path.join(outdir, "fig1.csv"), figure_table_csv(fig1, grid, base_age))

    fig2 = {
        f"scaled_alpha_{g:g}": alpha_curve(schedule_for(g, "scaled_power"), market, mortality, grid)
        for g in FEASIBLE_GAMMAS
    }
    fig2.update(
        {
            f"trimmed_alpha_{g:g}": alpha_curve(schedule_for(g, "trimmed"), market, mortality, grid)
            for g in BENCHMARK_GAMMAS
        }
    )
    out.write(os.path.join(outdir, "fig2.csv"), figure_table_csv(fig2, grid, base_age))

    fig3 = {
        f"alpha_{g:g}": alpha_curve(schedule_for(g, "scaled_trimmed"), market, mortality, grid)
        for g in FEASIBLE_GAMMAS
    }
    out.write(os.path.join(outdir, "fig3.csv"), figure_table_csv(fig3, grid, base_age))

    fig4 = {}
    for g in FEASIBLE_GAMMAS:
        curve = income_curve(schedule_for(g, "scaled_trimmed"), market, mortality, x0, grid)
        fig4[f"income_{g:g}"] = curve.expected_income
    out.write(os.path.join(outdir, "fig4.csv"), figure_table_csv(fig4, grid, base_age))


_DISPATCH = {
    "fit": _cmd_fit,
    "calibrate": _cmd_calibrate,
    "schedule": _cmd_schedule,
    "income": _cmd_income,
    "simulate": _cmd_simulate,
    "figures": _cmd_figures,
}


# ----------------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------------

_FLAG_TO_KEY = {
    "gamma": "gamma",
    "mu": "mu",
    "sigma": "sigma",
    "r": "r",
    "rho": "rho",
    "variant": "variant",
    "kappa": "kappa",
    "horizon": "horizon_years",
    "base_age": "base_age",
    "limiting_age": "limiting_age",
    "grid_step": "grid_step",
    "paths": "paths",
    "seed": "seed",
    "x0": "x0",
    "table": "table_path",
    "sim_horizon": "sim_horizon",
    "sim_step": "sim_step",
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="tontine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", help="flat key=value config file (flags win)")
        p.add_argument("--gamma", help="risk aversion (< 1, nonzero)")
        p.add_argument("--mu", help="stock drift per year")
        p.add_argument("--sigma", help="stock volatility per sqrt(year)")
        p.add_argument("--r", help="risk-free rate per year")
        p.add_argument("--rho", help="subjective discount rate, or 'auto' for r*gamma")
        p.add_argument("--variant", help=f"bequest variant: {', '.join(VARIANTS)}")
        p.add_argument("--kappa", help="scale for scaled variants, or 'auto' to calibrate")
        p.add_argument("--horizon", help="bequest horizon H in years")
        p.add_argument("--base-age", dest="base_age", help="base age in years")
        p.add_argument("--limiting-age", dest="limiting_age", help="limiting age in years")
        p.add_argument("--grid-step", dest="grid_step", help="schedule grid step (e.g. 1/52)")
        p.add_argument("--paths", help="Monte Carlo path count")
        p.add_argument("--seed", help="simulation seed")
        p.add_argument("--x0", help="initial wealth")
        p.add_argument("--sim-horizon", dest="sim_horizon", help="simulation horizon in years")
        p.add_argument("--sim-step", dest="sim_step", help="simulation step in years")
        p.add_argument("--table", help="life-table CSV path (fit command)")
        p.add_argument("--out", help="output file (or directory for figures)")
    return parser


def build_run_config(argv: list[str]) -> RunConfig:
    args = _build_parser().parse_args(argv)
    merged: dict[str, object] = dict(DEFAULTS)
    if args.config:
        merged.update(_parse_config_file(args.config))
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag)
        if value is not None:
            merged[key] = value
    if args.out is not None:
        merged["out"] = args.out
    out = str(merged["out"]).strip() or _DEFAULT_OUT[args.command]
    seed = _as_int(merged, "seed")
    return RunConfig(
        command=args.command,
        overrides=merged,
        out=out,
        seed=seed,
        paths={"config": args.config or "", "out": out,
               "table": str(merged["table_path"])},
    )


def run(config: RunConfig) -> int:
    """Execute a resolved command; outputs are atomic and rolled back on failure."""
    outputs = _OutputSet()
    try:
        _DISPATCH[config.command](config, outputs)
    except CliError:
        outputs.rollback()
        raise
    except (LifeTableError,) as exc:
        outputs.rollback()
        raise CliError("DATA", str(exc)) from exc
    except (CalibrationRequired,) as exc:
        outputs.rollback()
        raise CliError("CALIBRATION", str(exc)) from exc
    except SimulationError as exc:
        outputs.rollback()
        raise CliError("RUNTIME", str(exc)) from exc
    except ValueError as exc:
        outputs.rollback()
        raise CliError("CONFIG", str(exc)) from exc
    except OSError as exc:
        outputs.rollback()
        raise CliError("IO", str(exc)) from exc
    except Exception as exc:  # unexpected: still leave no partial outputs behind
        outputs.rollback()
        raise CliError("INTERNAL", f"{type(exc).__name__}: {exc}") from exc
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = build_run_config(argv)
        return run(config)
    except CliError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
