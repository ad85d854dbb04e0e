"""Command-line entry point: config parsing and subcommand dispatch.

Configuration is a JSON file with blocks ``model``, ``initial``, ``time``,
``numeric``, ``ensemble`` plus ``output_dir``; bare model fields at the top
level are accepted as shorthand. Flags override individual fields. All
randomness flows from the single config seed. Exit codes: 0 pass, 1
contract failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import SCHEMA_VERSION, __version__
from .engine import build_state, run_trajectory, write_trajectory_csv
from .exact import (
    detailed_balance_violation,
    generator_matrix,
    num_states,
    stationary_distribution,
)
from .harness import (
    ExperimentPlan,
    HarnessReport,
    boundary_condition_discrimination,
    emit_report,
    hydrodynamic_convergence,
    martingale_suite,
    replacement_diagnostics,
)
from .model import ModelParams, Profile
from .pde import bc_from_theta, solve_heat_equation, steady_state, trapezoid_mass, write_solution_csv

OUTPUT_DIR_ENV = "SEPSIM_OUTPUT_DIR"
RNG_NAME = "xoshiro256++"

TEST_FUNCTIONS = {
    "sine": lambda u: np.sin(np.pi * u),
    "bump": lambda u: 16.0 * u**2 * (1.0 - u) ** 2,
}

_MODEL_FIELDS = ("alpha", "n", "theta", "epsilon", "gamma", "delta", "beta")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration shared by every subcommand."""

    model: ModelParams
    n_values: tuple[int, ...]
    initial: Profile
    t_end: float
    checkpoints: tuple[float, ...]
    m_bins: int
    grid_size: int
    dt: float | None
    ensemble_size: int
    seed: int
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "model": {
                "alpha": self.model.alpha,
                "n": self.model.n,
                "theta": self.model.theta,
                "epsilon": self.model.epsilon,
                "gamma": self.model.gamma,
                "delta": self.model.delta,
                "beta": self.model.beta,
                "n_values": list(self.n_values),
            },
            "initial": {"kind": self.initial.kind, "values": list(self.initial.values)},
            "time": {"T": self.t_end, "checkpoints": list(self.checkpoints)},
            "numeric": {"m_bins": self.m_bins, "grid_size": self.grid_size, "dt": self.dt},
            "ensemble": {"r": self.ensemble_size, "seed": self.seed},
            "output_dir": self.output_dir,
        }

    def plan(self, tolerance: float | None = None) -> ExperimentPlan:
        return ExperimentPlan(
            alpha=self.model.alpha,
            theta=self.model.theta,
            epsilon=self.model.epsilon,
            gamma=self.model.gamma,
            delta=self.model.delta,
            beta=self.model.beta,
            n_values=self.n_values,
            checkpoints=self.checkpoints,
            ensemble_size=self.ensemble_size,
            m_bins=self.m_bins,
            seed=self.seed,
            initial=self.initial,
            grid_size=self.grid_size,
            l1_tolerance=tolerance,
        )


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(float(value)):
        raise ConfigError(f"{path}: must be finite, got {value!r}")
    return float(value)


def _block(data: dict, name: str) -> dict:
    block = data.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: expected an object, got {block!r}")
    return dict(block)


def parse_config(source: str | Path | dict, overrides: dict | None = None) -> RunConfig:
    """Load, merge, and validate a run configuration.

    ``source`` is a JSON file path or an already-parsed dict. ``overrides``
    maps dotted field paths (``"model.theta"``) to replacement values.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")

    model = _block(data, "model")
    # bare model fields at the top level are shorthand for the model block
    for key in _MODEL_FIELDS + ("n_values",):
        if key in data:
            model.setdefault(key, data[key])
    initial = _block(data, "initial")
    time_block = _block(data, "time")
    numeric = _block(data, "numeric")
    ensemble = _block(data, "ensemble")
    output_dir = data.get("output_dir", "runs")

    for dotted, value in (overrides or {}).items():
        block_name, _, field_name = dotted.partition(".")
        if not field_name:
            if block_name != "output_dir":
                raise ConfigError(f"{dotted}: unknown config field")
            output_dir = value
            continue
        target = {
            "model": model,
            "initial": initial,
            "time": time_block,
            "numeric": numeric,
            "ensemble": ensemble,
        }.get(block_name)
        if target is None:
            raise ConfigError(f"{dotted}: unknown config block")
        target[field_name] = value

    known_top = {"model", "initial", "time", "numeric", "ensemble", "output_dir",
                 "n_values", *_MODEL_FIELDS}
    for key in sorted(set(data) - known_top):
        raise ConfigError(f"{key}: unknown config field")
    for name, block, allowed in (
        ("initial", initial, {"kind", "values"}),
        ("time", time_block, {"T", "checkpoints"}),
        ("numeric", numeric, {"m_bins", "grid_size", "dt"}),
        ("ensemble", ensemble, {"r", "seed"}),
    ):
        for key in sorted(set(block) - allowed):
            raise ConfigError(f"{name}.{key}: unknown field")

    for key in _MODEL_FIELDS:
        if key not in model:
            raise ConfigError(f"model.{key}: required field is missing")
    try:
        params = ModelParams(
            alpha=_as_int(model["alpha"], "model.alpha"),
            n=_as_int(model["n"], "model.n"),
            theta=_as_number(model["theta"], "model.theta"),
            epsilon=_as_number(model["epsilon"], "model.epsilon"),
            gamma=_as_number(model["gamma"], "model.gamma"),
            delta=_as_number(model["delta"], "model.delta"),
            beta=_as_number(model["beta"], "model.beta"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    raw_n_values = model.get("n_values", [params.n])
    if not isinstance(raw_n_values, (list, tuple)):
        raise ConfigError(f"model.n_values: expected a list, got {raw_n_values!r}")
    n_values = tuple(_as_int(v, "model.n_values") for v in raw_n_values)
    unknown = set(model) - set(_MODEL_FIELDS) - {"n_values"}
    if unknown:
        raise ConfigError(f"model.{sorted(unknown)[0]}: unknown field")

    kind = initial.get("kind", "constant")
    values = initial.get("values", [params.alpha / 2.0])
    if not isinstance(values, (list, tuple)):
        raise ConfigError(f"initial.values: expected a list, got {values!r}")
    try:
        profile = Profile(str(kind), tuple(_as_number(v, "initial.values") for v in values))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from exc

    t_end = _as_number(time_block.get("T", 0.2), "time.T")
    if t_end <= 0:
        raise ConfigError(f"time.T: must be positive, got {t_end!r}")
    raw_cps = time_block.get("checkpoints", [t_end / 4, t_end / 2, t_end])
    if not isinstance(raw_cps, (list, tuple)) or not raw_cps:
        raise ConfigError(f"time.checkpoints: expected a non-empty list, got {raw_cps!r}")
    checkpoints = tuple(_as_number(t, "time.checkpoints") for t in raw_cps)
    if any(not 0.0 < t <= t_end for t in checkpoints):
        raise ConfigError("time.checkpoints: values must lie in (0, T]")
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ConfigError("time.checkpoints: values must be strictly increasing")

    # the default bin count shrinks with the lattice so no bin is empty;
    # compatibility of an explicit value is checked by the op that bins
    smallest = min(min(n_values), params.n)
    if "m_bins" in numeric:
        m_bins = _as_int(numeric["m_bins"], "numeric.m_bins")
        if m_bins < 1:
            raise ConfigError(f"numeric.m_bins: must be >= 1, got {m_bins}")
    else:
        m_bins = max(1, min(20, smallest - 1))
    grid_size = _as_int(numeric.get("grid_size", 512), "numeric.grid_size")
    dt = numeric.get("dt")
    if dt is not None:
        dt = _as_number(dt, "numeric.dt")
        if dt <= 0:
            raise ConfigError(f"numeric.dt: must be positive, got {dt!r}")
    ensemble_size = _as_int(ensemble.get("r", 50), "ensemble.r")
    if ensemble_size < 1:
        raise ConfigError(f"ensemble.r: must be >= 1, got {ensemble_size}")
    seed = _as_int(ensemble.get("seed", 0), "ensemble.seed")
    if seed < 0:
        raise ConfigError(f"ensemble.seed: must be >= 0, got {seed}")
    if not isinstance(output_dir, str):
        raise ConfigError(f"output_dir: expected a string, got {output_dir!r}")
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        output_dir = env_dir

    return RunConfig(
        model=params,
        n_values=n_values,
        initial=profile,
        t_end=t_end,
        checkpoints=checkpoints,
        m_bins=m_bins,
        grid_size=grid_size,
        dt=dt,
        ensemble_size=ensemble_size,
        seed=seed,
        output_dir=output_dir,
    )


def version_info(as_json: bool = False) -> str:
    info = {
        "artifact_version": __version__,
        "spec_version": SCHEMA_VERSION,
        "rng": RNG_NAME,
    }
    if as_json:
        return json.dumps(info)
    return "\n".join(f"{key}: {value}" for key, value in info.items())


def _out_dir(config: RunConfig) -> Path:
    directory = Path(config.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _print_checks(report: HarnessReport) -> None:
    for check in report.checks:
        status = "pass" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}: {check['detail']}")


def _cmd_simulate(config: RunConfig, figures: bool) -> int:
    state = build_state(config.model, config.initial, seed=np.random.SeedSequence((config.seed,)))
    record = run_trajectory(state, config.checkpoints, m_bins=config.m_bins)
    out = _out_dir(config)
    csv_path = out / "simulate.csv"
    write_trajectory_csv(record, str(csv_path))
    print(f"simulated n={config.model.n} to t={config.checkpoints[-1]:g}: "
          f"{record.event_count} events")
    print(f"wrote {csv_path}")
    if figures:
        from .figures import plot_trajectory

        print(f"wrote {plot_trajectory(record, out / 'simulate_profiles.png')}")
    return 0


def _cmd_pde(config: RunConfig, figures: bool) -> int:
    bc = bc_from_theta(config.model)
    sol = solve_heat_equation(
        bc, config.initial, config.model.alpha, config.checkpoints,
        m=config.grid_size, dt=config.dt,
    )
    out = _out_dir(config)
    csv_path = out / "pde.csv"
    write_solution_csv(sol, str(csv_path))
    print(f"boundary condition: {bc.kind} (theta={config.model.theta:g})")
    code = 0
    masses = [trapezoid_mass(sol, i) for i in range(sol.times.size)]
    drift = max(abs(m - masses[0]) for m in masses)
    if bc.kind == "neumann":
        tol = 1e-10 * max(1.0, config.checkpoints[-1])
        ok = drift <= tol
        print(f"[{'pass' if ok else 'FAIL'}] mass conservation: drift {drift:.3e} "
              f"(tolerance {tol:.1e})")
        if not ok:
            code = 1
    else:
        print(f"total mass drift over the run: {drift:.6g}")
    print(f"wrote {csv_path}")
    if figures:
        from .figures import plot_solution

        print(f"wrote {plot_solution(sol, out / 'pde_solution.png')}")
    return code


def _cmd_steady(config: RunConfig, figures: bool) -> int:
    bc = bc_from_theta(config.model)
    mass = None
    if bc.kind == "neumann" or (bc.kind == "robin" and bc.kappa == 0.0):
        u = np.linspace(0.0, 1.0, 2049)
        mass = float(np.trapezoid(np.asarray(config.initial(u), dtype=float), u))
    profile = steady_state(bc, config.model.alpha, mass=mass)
    grid = np.arange(config.grid_size + 1) / config.grid_size
    values = np.asarray(profile(grid), dtype=float)
    out = _out_dir(config)
    csv_path = out / "steady.csv"
    lines = ["u,rho"] + [f"{repr(float(u))},{repr(float(v))}" for u, v in zip(grid, values)]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"steady state for {bc.kind}: rho(0)={values[0]:.6g}, rho(1)={values[-1]:.6g}")
    print(f"wrote {csv_path}")
    if figures:
        from .figures import plot_profile_curve

        label = f"{bc.kind} steady state"
        print(f"wrote {plot_profile_curve(grid, values, label, out / 'steady_profile.png')}")
    return 0


def _cmd_exact(config: RunConfig) -> int:
    params = config.model
    states = num_states(params)
    if states > 20000:
        print(f"error: exact analysis needs a desk-scale system, "
              f"got {states} states (limit 20000)", file=sys.stderr)
        return 2
    gen = generator_matrix(params)
    dense = gen.toarray() if hasattr(gen, "toarray") else np.asarray(gen)
    row_sum = float(np.max(np.abs(dense.sum(axis=1))))
    pi = stationary_distribution(gen)
    stat_res = float(np.max(np.abs(pi @ dense)))
    code = 0
    for name, value in (("generator row sums", row_sum), ("stationarity residual", stat_res)):
        ok = value <= 1e-12
        print(f"[{'pass' if ok else 'FAIL'}] {name}: {value:.3e} (tolerance 1e-12)")
        if not ok:
            code = 1
    if math.isclose(params.rho_minus, params.rho_plus, rel_tol=0.0, abs_tol=1e-12):
        varrho = Profile.constant(params.rho_minus)
        violation = detailed_balance_violation(params, varrho)
        ok = violation <= 1e-12
        print(f"[{'pass' if ok else 'FAIL'}] detailed balance at rho={params.rho_minus:g}: "
              f"{violation:.3e} (tolerance 1e-12)")
        if not ok:
            code = 1
    else:
        print("detailed balance: skipped (reservoir densities differ, chain is not reversible)")
    return code


def _cmd_converge(config: RunConfig, figures: bool, tolerance: float | None) -> int:
    report = hydrodynamic_convergence(config.plan(tolerance))
    out = _out_dir(config)
    for path in emit_report(report, out, stem="converge"):
        print(f"wrote {path}")
    if figures:
        from .figures import plot_convergence

        for path in plot_convergence(report, out, "converge"):
            print(f"wrote {path}")
    _print_checks(report)
    return 0 if report.passed else 1


def _cmd_discriminate(config: RunConfig, figures: bool) -> int:
    report = boundary_condition_discrimination(config.plan())
    out = _out_dir(config)
    for path in emit_report(report, out, stem="discriminate"):
        print(f"wrote {path}")
    if figures:
        from .figures import plot_discrimination

        for path in plot_discrimination(report, out, "discriminate"):
            print(f"wrote {path}")
    _print_checks(report)
    return 0 if report.passed else 1


def _cmd_diagnose(config: RunConfig, figures: bool, eps_values: tuple[float, ...]) -> int:
    report = replacement_diagnostics(config.plan(), eps_values=eps_values)
    out = _out_dir(config)
    for path in emit_report(report, out, stem="diagnose"):
        print(f"wrote {path}")
    if figures:
        from .figures import plot_replacement

        for path in plot_replacement(report, out, "diagnose"):
            print(f"wrote {path}")
    _print_checks(report)
    return 0 if report.passed else 1


def _cmd_martingale(config: RunConfig, figures: bool, fn_names: tuple[str, ...]) -> int:
    fns = [(name, TEST_FUNCTIONS[name]) for name in fn_names]
    report = martingale_suite(config.plan(), fns)
    out = _out_dir(config)
    for path in emit_report(report, out, stem="martingale"):
        print(f"wrote {path}")
    if figures:
        from .figures import plot_martingale

        for path in plot_martingale(report, out, "martingale"):
            print(f"wrote {path}")
    _print_checks(report)
    return 0 if report.passed else 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--output-dir", help="directory for CSV/JSON/figure output")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip rendering PNG figures next to the CSV output")
    parser.add_argument("--seed", type=int, help="master seed (ensemble.seed)")
    parser.add_argument("--r", type=int, dest="ensemble_r", help="ensemble size (ensemble.r)")
    parser.add_argument("--m-bins", type=int, help="comparison bin count (numeric.m_bins)")
    parser.add_argument("--grid-size", type=int, help="solver grid size (numeric.grid_size)")
    parser.add_argument("--t", type=float, dest="t_end", help="time horizon (time.T)")
    parser.add_argument("--n-values", help="comma-separated size list (model.n_values)")
    for field in _MODEL_FIELDS:
        kind = int if field in ("alpha", "n") else float
        parser.add_argument(f"--{field}", type=kind, help=f"model.{field}")
    parser.add_argument("--initial", help="initial profile, e.g. constant:0.5 or linear:0.2,0.8")


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for field in _MODEL_FIELDS:
        value = getattr(args, field)
        if value is not None:
            overrides[f"model.{field}"] = value
    if args.n_values is not None:
        try:
            overrides["model.n_values"] = [int(v) for v in args.n_values.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"model.n_values: {exc}") from exc
    if args.seed is not None:
        overrides["ensemble.seed"] = args.seed
    if args.ensemble_r is not None:
        overrides["ensemble.r"] = args.ensemble_r
    if args.m_bins is not None:
        overrides["numeric.m_bins"] = args.m_bins
    if args.grid_size is not None:
        overrides["numeric.grid_size"] = args.grid_size
    if args.t_end is not None:
        overrides["time.T"] = args.t_end
        overrides["time.checkpoints"] = [args.t_end / 4, args.t_end / 2, args.t_end]
    if args.initial is not None:
        kind, _, rest = str(args.initial).partition(":")
        try:
            values = [float(v) for v in rest.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"initial.values: {exc}") from exc
        overrides["initial.kind"] = kind
        overrides["initial.values"] = values
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepsim",
        description="Boundary-driven exclusion process: simulation, exact analysis, "
        "hydrodynamic-limit experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("simulate", "run one trajectory and write the binned profiles"),
        ("pde", "solve the matching heat equation and write the checkpoints"),
        ("steady", "write the closed-form stationary profile"),
        ("exact", "generator identities and stationarity on a desk-scale system"),
        ("converge", "hydrodynamic convergence study over the size list"),
        ("discriminate", "match each boundary regime to its limiting equation"),
        ("diagnose", "boundary and block replacement diagnostics over the size list"),
        ("martingale", "zero-mean and bracket checks for the pairing process"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "converge":
            p.add_argument("--tolerance", type=float, help="L1 tolerance at the largest size")
        if name == "diagnose":
            p.add_argument("--eps", default="0.2,0.1,0.05",
                           help="comma-separated window fractions, decreasing")
        if name == "martingale":
            p.add_argument("--test-functions", default="sine,bump",
                           help=f"comma-separated names from {sorted(TEST_FUNCTIONS)}")
    version = sub.add_parser("version", help="artifact, schema, and RNG identifiers")
    version.add_argument("--json", action="store_true", dest="as_json")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "version":
        print(version_info(args.as_json))
        return 0
    try:
        overrides = _collect_overrides(args)
        source = args.config if args.config else {}
        if not args.config:
            # without a file, the model fields must arrive via flags
            missing = [f for f in _MODEL_FIELDS if f"model.{f}" not in overrides]
            if missing:
                raise ConfigError(f"model.{missing[0]}: required field is missing "
                                  "(pass --config or the model flags)")
        config = parse_config(source, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    figures = not args.no_figures
    try:
        if args.command == "simulate":
            return _cmd_simulate(config, figures)
        if args.command == "pde":
            return _cmd_pde(config, figures)
        if args.command == "steady":
            return _cmd_steady(config, figures)
        if args.command == "exact":
            return _cmd_exact(config)
        if args.command == "converge":
            return _cmd_converge(config, figures, args.tolerance)
        if args.command == "discriminate":
            return _cmd_discriminate(config, figures)
        if args.command == "diagnose":
            eps = tuple(float(v) for v in args.eps.split(",") if v)
            return _cmd_diagnose(config, figures, eps)
        if args.command == "martingale":
            names = tuple(v for v in args.test_functions.split(",") if v)
            unknown = [v for v in names if v not in TEST_FUNCTIONS]
            if unknown:
                print(f"config error: unknown test function {unknown[0]!r}", file=sys.stderr)
                return 2
            return _cmd_martingale(config, figures, names)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
