"""Command-line front end.

Configuration can come from a JSON file (``--config``), from flags, or
both; flags win.  Unknown configuration keys are rejected.  All rates and
times are dimensionless ratios against the system frequency, matching the
axes of the published sweeps.  Exit status: 0 on success, 1 on a
configuration or validation problem, 2 on a numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import experiments
from .coeffs import CoefficientSolution, TimeGrid, solve_riccati_F, solve_riccati_Q, solve_volterra_F
from .dynamics import (
    PureState,
    average_fidelity_qubit,
    fidelity_lambda,
    fidelity_qubit,
    propagate_lambda,
    propagate_qubit,
)
from .errors import (
    NonFiniteError,
    NotPositiveSemidefiniteError,
    ParseError,
    ValidationError,
)
from .kernels import (
    CompositeKernel,
    KernelSpec,
    MarkovDephasedOU,
    OUKernel,
    OUParams,
    ZeroKernel,
    eval_kernel,
)
from .output import write_json, write_table
from .trajectories import EnsembleSpec, run_qsd_ensemble

__all__ = ["RunConfig", "parse_config", "emit_config", "dispatch", "main"]

SUBCOMMANDS = (
    "kernel",
    "coeff",
    "evolve",
    "fidelity",
    "average-fidelity",
    "trajectories",
    "figure",
    "diagram",
)

_TOP_KEYS = {
    "system",
    "omega",
    "kernel",
    "grid",
    "initial",
    "ensemble",
    "average_variant",
    "output",
}


def _default_kernel() -> KernelSpec:
    return OUKernel(OUParams(1.0, 0.1))


def _default_grid() -> TimeGrid:
    return TimeGrid(step=1e-3, count=8000)


@dataclass
class RunConfig:
    """Validated, fully defaulted run configuration."""

    system: str = "qubit"
    omega: float = 1.0
    kernel: KernelSpec = field(default_factory=_default_kernel)
    grid: TimeGrid = field(default_factory=_default_grid)
    initial: PureState | str = "average"
    ensemble: EnsembleSpec | None = None
    average_variant: str = "paper_formula"
    output_path: str | None = None
    output_format: str = "csv"


def _fail(key: str, message: str):
    raise ValidationError(f"{key}: {message}")


def _expect_keys(mapping: dict, allowed: set, context: str):
    unknown = set(mapping) - allowed
    if unknown:
        _fail(context or "config", f"unknown key(s) {sorted(unknown)}")


def _number(mapping: dict, key: str, context: str, required=True, default=None):
    if key not in mapping:
        if required:
            _fail(f"{context}{key}", "missing")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{context}{key}", f"expected a number, got {value!r}")
    return float(value)


def _ou_params(mapping, context: str) -> OUParams:
    if not isinstance(mapping, dict):
        _fail(context, "expected an object with strength and memory_rate")
    _expect_keys(mapping, {"strength", "memory_rate"}, context)
    strength = _number(mapping, "strength", context + ".")
    memory = _number(mapping, "memory_rate", context + ".")
    try:
        return OUParams(strength=strength, memory_rate=memory)
    except ValueError as exc:
        raise ValidationError(f"{context}: {exc}") from exc


def _parse_kernel(mapping, context="kernel") -> KernelSpec:
    if not isinstance(mapping, dict):
        _fail(context, "expected an object with a type")
    kind = mapping.get("type")
    try:
        if kind == "ou":
            _expect_keys(mapping, {"type", "strength", "memory_rate"}, context)
            return OUKernel(
                OUParams(
                    _number(mapping, "strength", context + "."),
                    _number(mapping, "memory_rate", context + "."),
                )
            )
        if kind == "composite":
            _expect_keys(mapping, {"type", "beta", "alpha"}, context)
            return CompositeKernel(
                beta=_ou_params(mapping.get("beta"), context + ".beta"),
                alpha=_ou_params(mapping.get("alpha"), context + ".alpha"),
            )
        if kind == "markov_dephased":
            _expect_keys(mapping, {"type", "beta", "dephasing_strength"}, context)
            return MarkovDephasedOU(
                beta=_ou_params(mapping.get("beta"), context + ".beta"),
                dephasing_strength=_number(mapping, "dephasing_strength", context + "."),
            )
        if kind == "zero":
            _expect_keys(mapping, {"type"}, context)
            return ZeroKernel()
    except ValueError as exc:
        raise ValidationError(f"{context}: {exc}") from exc
    _fail(
        context + ".type",
        f"expected one of ou|composite|markov_dephased|zero, got {kind!r}",
    )


def _parse_grid(mapping, context="grid") -> TimeGrid:
    if not isinstance(mapping, dict):
        _fail(context, "expected an object")
    _expect_keys(mapping, {"step", "count", "horizon"}, context)
    step = _number(mapping, "step", context + ".", required=False, default=1e-3)
    if ("count" in mapping) == ("horizon" in mapping):
        _fail(context, "give exactly one of count or horizon")
    try:
        if "count" in mapping:
            count = mapping["count"]
            if isinstance(count, bool) or not isinstance(count, int):
                _fail(context + ".count", f"expected an integer, got {count!r}")
            return TimeGrid(step=step, count=count)
        horizon = _number(mapping, "horizon", context + ".")
        return TimeGrid.from_horizon(horizon, step)
    except ValueError as exc:
        raise ValidationError(f"{context}: {exc}") from exc


def _parse_initial(value, context="initial"):
    if value == "average":
        return "average"
    if not isinstance(value, dict):
        _fail(context, "expected 'average' or an object with amplitudes")
    _expect_keys(value, {"amplitudes"}, context)
    raw = value.get("amplitudes")
    if not isinstance(raw, list) or len(raw) not in (2, 3):
        _fail(context + ".amplitudes", "expected a list of 2 or 3 amplitudes")
    amps = []
    for k, item in enumerate(raw):
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            amps.append(complex(item))
        elif (
            isinstance(item, list)
            and len(item) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)
        ):
            amps.append(complex(item[0], item[1]))
        else:
            _fail(f"{context}.amplitudes[{k}]", f"expected a number or [re, im], got {item!r}")
    try:
        return PureState(np.array(amps))
    except ValueError as exc:
        raise ValidationError(f"{context}: {exc}") from exc


def _parse_ensemble(mapping, context="ensemble") -> EnsembleSpec:
    if not isinstance(mapping, dict):
        _fail(context, "expected an object")
    _expect_keys(mapping, {"count", "seed"}, context)
    for key in ("count", "seed"):
        value = mapping.get(key)
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(f"{context}.{key}", f"expected an integer, got {value!r}")
    try:
        return EnsembleSpec(count=mapping["count"], seed=mapping["seed"])
    except ValueError as exc:
        raise ValidationError(f"{context}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("config: top level must be an object")
    _expect_keys(doc, _TOP_KEYS, "config")
    cfg = RunConfig()
    if "system" in doc:
        if doc["system"] not in ("qubit", "lambda"):
            _fail("system", f"expected qubit or lambda, got {doc['system']!r}")
        cfg.system = doc["system"]
    if "omega" in doc:
        omega = _number(doc, "omega", "")
        if omega <= 0:
            _fail("omega", "must be positive")
        cfg.omega = omega
    if "kernel" in doc:
        cfg.kernel = _parse_kernel(doc["kernel"])
    if "grid" in doc:
        cfg.grid = _parse_grid(doc["grid"])
    if "initial" in doc:
        cfg.initial = _parse_initial(doc["initial"])
    if "ensemble" in doc and doc["ensemble"] is not None:
        cfg.ensemble = _parse_ensemble(doc["ensemble"])
    if "average_variant" in doc:
        if doc["average_variant"] not in ("paper_formula", "haar_integral"):
            _fail("average_variant", f"got {doc['average_variant']!r}")
        cfg.average_variant = doc["average_variant"]
    if "output" in doc:
        out = doc["output"]
        if not isinstance(out, dict):
            _fail("output", "expected an object")
        _expect_keys(out, {"path", "format"}, "output")
        if "path" in out:
            if not isinstance(out["path"], str):
                _fail("output.path", "expected a string")
            cfg.output_path = out["path"]
        if "format" in out:
            if out["format"] not in ("csv", "json"):
                _fail("output.format", f"expected csv or json, got {out['format']!r}")
            cfg.output_format = out["format"]
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig):
    if isinstance(cfg.initial, PureState):
        expected = 2 if cfg.system == "qubit" else 3
        if cfg.initial.dim != expected:
            _fail(
                "initial",
                f"amplitude count {cfg.initial.dim} does not match system {cfg.system}",
            )


def _kernel_to_dict(kernel: KernelSpec) -> dict:
    if isinstance(kernel, OUKernel):
        return {
            "type": "ou",
            "strength": kernel.params.strength,
            "memory_rate": kernel.params.memory_rate,
        }
    if isinstance(kernel, CompositeKernel):
        return {
            "type": "composite",
            "beta": {
                "strength": kernel.beta.strength,
                "memory_rate": kernel.beta.memory_rate,
            },
            "alpha": {
                "strength": kernel.alpha.strength,
                "memory_rate": kernel.alpha.memory_rate,
            },
        }
    if isinstance(kernel, MarkovDephasedOU):
        return {
            "type": "markov_dephased",
            "beta": {
                "strength": kernel.beta.strength,
                "memory_rate": kernel.beta.memory_rate,
            },
            "dephasing_strength": kernel.dephasing_strength,
        }
    return {"type": "zero"}


def emit_config(cfg: RunConfig) -> str:
    """Serialize the effective configuration; parse_config round-trips it."""
    doc = {
        "system": cfg.system,
        "omega": cfg.omega,
        "kernel": _kernel_to_dict(cfg.kernel),
        "grid": {"step": cfg.grid.step, "count": cfg.grid.count},
        "initial": (
            "average"
            if cfg.initial == "average"
            else {
                "amplitudes": [
                    [amp.real, amp.imag] for amp in cfg.initial.amplitudes
                ]
            }
        ),
        "ensemble": (
            None
            if cfg.ensemble is None
            else {"count": cfg.ensemble.count, "seed": cfg.ensemble.seed}
        ),
        "average_variant": cfg.average_variant,
        "output": {"path": cfg.output_path or "", "format": cfg.output_format},
    }
    if cfg.output_path is None:
        doc["output"] = {"format": cfg.output_format}
    return json.dumps(doc, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _add_common(sub: argparse.ArgumentParser, kernel_flags=True, initial_flag=True):
    sub.add_argument("--config", help="JSON configuration file; flags override it")
    sub.add_argument("--out", help="output path (file, or directory for figure)")
    sub.add_argument("--format", choices=("csv", "json"), help="output format")
    sub.add_argument("--omega", type=float, help="system frequency (the unit)")
    sub.add_argument("--dt", type=float, help="grid step in units of 1/omega")
    sub.add_argument("--horizon", type=float, help="grid horizon omega*t")
    sub.add_argument("--system", choices=("qubit", "lambda"), help="which system")
    sub.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    if kernel_flags:
        sub.add_argument(
            "--kernel",
            choices=("ou", "composite", "markov-dephased", "zero"),
            help="kernel variant",
        )
        sub.add_argument("--strength", type=float, help="relaxation strength")
        sub.add_argument("--memory", type=float, help="relaxation memory rate")
        sub.add_argument("--deph-strength", type=float, help="dephasing strength")
        sub.add_argument("--deph-memory", type=float, help="dephasing memory rate")
    if initial_flag:
        sub.add_argument(
            "--initial",
            help="'average' or comma-separated complex amplitudes (normalized)",
        )


def _build_parser() -> _Parser:
    parser = _Parser(prog="noisemix", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    kernel = subs.add_parser("kernel", help="tabulate a correlation kernel")
    _add_common(kernel, initial_flag=False)

    coeff = subs.add_parser("coeff", help="solve the damping coefficient")
    _add_common(coeff, initial_flag=False)
    coeff.add_argument(
        "--solver",
        choices=("riccati", "volterra", "compare"),
        default="riccati",
        help="compare runs both and reports the sup-norm difference",
    )

    evolve = subs.add_parser("evolve", help="propagate the master equation")
    _add_common(evolve)

    fidelity = subs.add_parser("fidelity", help="closed-form fidelity of one state")
    _add_common(fidelity)

    average = subs.add_parser(
        "average-fidelity", help="fidelity averaged over initial states (qubit)"
    )
    _add_common(average, initial_flag=False)
    average.add_argument(
        "--variant", choices=("paper_formula", "haar_integral"), help="averaging weights"
    )

    traj = subs.add_parser("trajectories", help="Monte Carlo trajectory ensemble")
    _add_common(traj)
    traj.add_argument("--count", type=int, help="number of trajectories")
    traj.add_argument("--seed", type=int, help="64-bit master seed")
    traj.add_argument(
        "--traj-count",
        type=int,
        help="coarse step count for the noise grid (divides the grid count)",
    )

    figure = subs.add_parser("figure", help="reproduce a published parameter sweep")
    figure.add_argument("id", choices=experiments.FIGURE_IDS)
    _add_common(figure, kernel_flags=False, initial_flag=False)
    figure.add_argument(
        "--variant", choices=("paper_formula", "haar_integral"), help="averaging weights"
    )
    figure.add_argument(
        "--dephasing-frame",
        choices=("rotating", "lab"),
        default="rotating",
        help="frame for the dephasing-only reference curve",
    )

    diagram = subs.add_parser("diagram", help="four-region classification sweep")
    _add_common(diagram, kernel_flags=True, initial_flag=True)
    diagram.add_argument("--time-cells", type=int, default=100)
    diagram.add_argument("--rate-cells", type=int, default=60)
    diagram.add_argument("--rate-min", type=float, default=0.1)
    diagram.add_argument("--rate-max", type=float, default=6.0)
    diagram.add_argument(
        "--dephasing-frame", choices=("rotating", "lab"), default="rotating"
    )
    return parser


def _config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                cfg = parse_config(handle.read())
        except OSError as exc:
            raise ValidationError(f"config: cannot read {args.config}: {exc}") from exc
    else:
        cfg = RunConfig()

    if getattr(args, "system", None):
        cfg.system = args.system
    if getattr(args, "omega", None) is not None:
        if args.omega <= 0:
            raise ValidationError("omega: must be positive")
        cfg.omega = args.omega

    if getattr(args, "dt", None) is not None or getattr(args, "horizon", None) is not None:
        step = args.dt if args.dt is not None else cfg.grid.step
        horizon = args.horizon if args.horizon is not None else cfg.grid.horizon
        try:
            cfg.grid = TimeGrid.from_horizon(horizon, step)
        except ValueError as exc:
            raise ValidationError(f"grid: {exc}") from exc

    if getattr(args, "kernel", None):
        cfg.kernel = _kernel_from_flags(args)
    elif any(
        getattr(args, name, None) is not None
        for name in ("strength", "memory", "deph_strength", "deph_memory")
    ):
        cfg.kernel = _kernel_from_flags(args, default_type=_flagged_kernel_type(cfg.kernel))

    if getattr(args, "initial", None):
        cfg.initial = _initial_from_flag(args.initial)

    if getattr(args, "count", None) is not None or getattr(args, "seed", None) is not None:
        base = cfg.ensemble or EnsembleSpec(count=2000, seed=0)
        try:
            cfg.ensemble = EnsembleSpec(
                count=args.count if args.count is not None else base.count,
                seed=args.seed if args.seed is not None else base.seed,
            )
        except ValueError as exc:
            raise ValidationError(f"ensemble: {exc}") from exc

    if getattr(args, "variant", None):
        cfg.average_variant = args.variant
    if getattr(args, "out", None):
        cfg.output_path = args.out
    if getattr(args, "format", None):
        cfg.output_format = args.format
    _cross_validate(cfg)
    return cfg


def _flagged_kernel_type(kernel: KernelSpec) -> str:
    return {
        OUKernel: "ou",
        CompositeKernel: "composite",
        MarkovDephasedOU: "markov-dephased",
        ZeroKernel: "zero",
    }[type(kernel)]


def _kernel_from_flags(args, default_type=None) -> KernelSpec:
    kind = args.kernel or default_type
    strength = args.strength if args.strength is not None else 1.0
    memory = args.memory if args.memory is not None else 0.1
    try:
        if kind == "ou":
            return OUKernel(OUParams(strength, memory))
        if kind == "composite":
            if args.deph_strength is None or args.deph_memory is None:
                raise ValidationError(
                    "kernel: composite needs --deph-strength and --deph-memory"
                )
            return CompositeKernel(
                OUParams(strength, memory),
                OUParams(args.deph_strength, args.deph_memory),
            )
        if kind == "markov-dephased":
            if args.deph_strength is None:
                raise ValidationError("kernel: markov-dephased needs --deph-strength")
            return MarkovDephasedOU(OUParams(strength, memory), args.deph_strength)
        if kind == "zero":
            return ZeroKernel()
    except ValueError as exc:
        raise ValidationError(f"kernel: {exc}") from exc
    raise ValidationError(f"kernel: unknown type {kind!r}")


def _initial_from_flag(text: str):
    if text == "average":
        return "average"
    try:
        amps = [complex(part) for part in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"initial: cannot parse amplitudes {text!r}") from exc
    if len(amps) not in (2, 3):
        raise ValidationError("initial: expected 2 or 3 amplitudes")
    norm = float(np.linalg.norm(amps))
    if norm == 0:
        raise ValidationError("initial: amplitudes must not all vanish")
    return PureState(np.asarray(amps) / norm)


# --------------------------------------------------------------------------
# subcommand handlers


def _require_state(cfg: RunConfig, purpose: str) -> PureState:
    if not isinstance(cfg.initial, PureState):
        raise ValidationError(f"initial: {purpose} needs an explicit initial state")
    return cfg.initial


def _zero_coefficient(grid: TimeGrid, kind: str) -> CoefficientSolution:
    return CoefficientSolution(
        grid=grid, values=np.zeros(grid.count + 1, dtype=complex), kind=kind
    )


def _coefficient_for(cfg: RunConfig) -> CoefficientSolution:
    if cfg.system == "qubit":
        if isinstance(cfg.kernel, ZeroKernel):
            return _zero_coefficient(cfg.grid, "two_level_F")
        if isinstance(cfg.kernel, CompositeKernel):
            return solve_volterra_F(cfg.kernel, cfg.omega, cfg.grid)
        return solve_riccati_F(cfg.kernel, cfg.omega, cfg.grid)
    if isinstance(cfg.kernel, ZeroKernel):
        return _zero_coefficient(cfg.grid, "three_level_Q")
    if isinstance(cfg.kernel, CompositeKernel):
        raise ValidationError(
            "kernel: the three-level solver needs an exponential-form kernel; "
            "use markov_dephased"
        )
    return solve_riccati_Q(cfg.kernel, cfg.omega, cfg.grid)


def _out_path(cfg: RunConfig, default_name: str) -> str:
    return cfg.output_path or default_name


def _cmd_kernel(cfg: RunConfig, args) -> int:
    taus = cfg.grid.times
    values = eval_kernel(cfg.kernel, taus)
    write_table(
        _out_path(cfg, "kernel.csv"), ["tau", "value"], [taus, values], cfg.output_format
    )
    return 0


_COEFF_HEADER = ["t", "re_f", "im_f", "int_re_f", "im_int_f"]


def _coeff_columns(coeff: CoefficientSolution) -> list:
    return [
        coeff.grid.times,
        coeff.values.real,
        coeff.values.imag,
        coeff.real_integral,
        coeff.integral.imag,
    ]


def _cmd_coeff(cfg: RunConfig, args) -> int:
    if cfg.system == "lambda" and args.solver != "riccati":
        raise ValidationError("solver: the three-level coefficient is Riccati-only")
    if args.solver == "riccati":
        coeff = _coefficient_for(cfg) if cfg.system == "lambda" else _riccati_qubit(cfg)
        write_table(
            _out_path(cfg, "coeff.csv"),
            _COEFF_HEADER,
            _coeff_columns(coeff),
            cfg.output_format,
        )
        return 0
    volterra = solve_volterra_F(cfg.kernel, cfg.omega, cfg.grid)
    if args.solver == "volterra":
        write_table(
            _out_path(cfg, "coeff.csv"),
            _COEFF_HEADER,
            _coeff_columns(volterra),
            cfg.output_format,
        )
        return 0
    riccati = _riccati_qubit(cfg)
    sup = float(np.max(np.abs(riccati.values - volterra.values)))
    write_table(
        _out_path(cfg, "coeff.csv"),
        ["t", "re_f_riccati", "im_f_riccati", "re_f_volterra", "im_f_volterra"],
        [
            cfg.grid.times,
            riccati.values.real,
            riccati.values.imag,
            volterra.values.real,
            volterra.values.imag,
        ],
        cfg.output_format,
    )
    print(f"max_abs_difference = {sup:.17g}")
    return 0


def _riccati_qubit(cfg: RunConfig) -> CoefficientSolution:
    if isinstance(cfg.kernel, ZeroKernel):
        return _zero_coefficient(cfg.grid, "two_level_F")
    if isinstance(cfg.kernel, CompositeKernel):
        raise ValidationError(
            "solver: the Riccati route needs an exponential-form kernel; "
            "use --solver volterra"
        )
    return solve_riccati_F(cfg.kernel, cfg.omega, cfg.grid)


def _cmd_evolve(cfg: RunConfig, args) -> int:
    state = _require_state(cfg, "evolve")
    coeff = _coefficient_for(cfg)
    rho0 = state.density_matrix()
    if cfg.system == "qubit":
        result = propagate_qubit(coeff, rho0, cfg.omega)
    else:
        result = propagate_lambda(coeff, rho0)
    dim = result.dim
    header = ["t"]
    columns = [result.grid.times]
    for i in range(dim):
        for j in range(dim):
            header += [f"rho_{i}{j}_re", f"rho_{i}{j}_im"]
            columns += [result.states[:, i, j].real, result.states[:, i, j].imag]
    header += ["trace_re", "min_eigenvalue"]
    columns += [
        np.trace(result.states, axis1=1, axis2=2).real,
        result.min_eigenvalue,
    ]
    write_table(_out_path(cfg, "evolve.csv"), header, columns, cfg.output_format)
    return 0


def _cmd_fidelity(cfg: RunConfig, args) -> int:
    state = _require_state(cfg, "fidelity")
    coeff = _coefficient_for(cfg)
    if cfg.system == "qubit":
        trace = fidelity_qubit(float(abs(state.amplitudes[0]) ** 2), coeff)
    else:
        trace = fidelity_lambda(state, coeff)
    write_table(
        _out_path(cfg, "fidelity.csv"),
        ["t", "fidelity"],
        [trace.grid.times, trace.values],
        cfg.output_format,
    )
    return 0


def _cmd_average_fidelity(cfg: RunConfig, args) -> int:
    if cfg.system != "qubit":
        raise ValidationError("system: the averaged fidelity is defined for the qubit")
    coeff = _coefficient_for(cfg)
    trace = average_fidelity_qubit(coeff, cfg.average_variant)
    write_table(
        _out_path(cfg, "average_fidelity.csv"),
        ["t", "fidelity"],
        [trace.grid.times, trace.values],
        cfg.output_format,
    )
    return 0


def _traj_grid(cfg: RunConfig, args) -> TimeGrid:
    count = getattr(args, "traj_count", None)
    if count is None:
        count = cfg.grid.count
        stride = 1
        while count > 2048:
            stride += 1
            if cfg.grid.count % stride == 0:
                count = cfg.grid.count // stride
        if count > 2048:
            raise ValidationError(
                "grid: cannot coarsen the grid below 2048 steps; pass --traj-count"
            )
    if count < 1 or cfg.grid.count % count != 0:
        raise ValidationError("traj-count: must divide the grid count")
    return TimeGrid(step=cfg.grid.step * (cfg.grid.count // count), count=count)


def _cmd_trajectories(cfg: RunConfig, args) -> int:
    state = _require_state(cfg, "trajectories")
    if cfg.ensemble is None:
        raise ValidationError("ensemble: trajectories needs --count and --seed")
    coeff = _coefficient_for(cfg)
    grid = _traj_grid(cfg, args)
    result = run_qsd_ensemble(
        cfg.kernel, cfg.omega, coeff, state, grid, cfg.ensemble, threads=args.threads
    )
    write_table(
        _out_path(cfg, "trajectories.csv"),
        ["t", "fidelity_mean", "fidelity_se"],
        [grid.times, result.fidelity, result.fidelity_se],
        cfg.output_format,
    )
    return 0


def _noise_mix_dict(params) -> dict:
    return {
        "relaxation_strength": params.relaxation.strength,
        "relaxation_memory": params.relaxation.memory_rate,
        "dephasing_strength": params.dephasing_strength,
        "dephasing_memory": params.dephasing_memory,
        "omega": params.omega,
    }


def _write_diagram_table(path: str, diagram, fmt: str) -> None:
    n_rate, n_time = diagram.labels.shape
    rate_col = np.repeat(diagram.rate_axis, n_time)
    time_col = np.tile(diagram.time_axis, n_rate)
    write_table(
        path,
        ["dephasing_strength", "omega_t", "region", "tie"],
        [rate_col, time_col, diagram.labels.ravel(), diagram.ties.ravel().astype(int)],
        fmt,
    )


def _cmd_figure(cfg: RunConfig, args) -> int:
    import os

    out_dir = cfg.output_path or args.id
    result = experiments.reproduce_figure(
        args.id,
        grid=cfg.grid,
        variant=cfg.average_variant,
        dephasing_frame=args.dephasing_frame,
        threads=args.threads,
    )
    manifest = {
        "figure": result.figure,
        "average_variant": result.variant,
        "dephasing_frame": result.dephasing_frame,
        "omega": cfg.omega,
        "grid": {"step": cfg.grid.step, "count": cfg.grid.count},
        "claims": result.claims,
        "curves": [],
    }
    for curve in result.curves:
        filename = f"{curve.name}.csv"
        write_table(
            os.path.join(out_dir, filename),
            ["t", "fidelity"],
            [curve.trace.grid.times, curve.trace.values],
            "csv",
        )
        entry = {"name": curve.name, "file": filename, "role": curve.role}
        entry.update(_noise_mix_dict(curve.params))
        manifest["curves"].append(entry)
    if result.diagram is not None:
        table = f"{result.figure}_regions.csv"
        _write_diagram_table(os.path.join(out_dir, table), result.diagram, "csv")
        manifest["regions_file"] = table
        manifest["region_legend"] = result.diagram.legend
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return 0


def _cmd_diagram(cfg: RunConfig, args) -> int:
    if not isinstance(cfg.kernel, OUKernel):
        raise ValidationError(
            "kernel: the diagram sweeps dephasing strength over an OU relaxation "
            "channel; pass --kernel ou"
        )
    initial = cfg.initial if isinstance(cfg.initial, PureState) else None
    diagram = experiments.classify_regions(
        relaxation=cfg.kernel.params,
        omega=cfg.omega,
        initial=initial,
        time_cells=args.time_cells,
        rate_cells=args.rate_cells,
        time_max=cfg.grid.horizon,
        rate_range=(args.rate_min, args.rate_max),
        grid_step=cfg.grid.step,
        dephasing_frame=args.dephasing_frame,
        threads=args.threads,
    )
    _write_diagram_table(_out_path(cfg, "diagram.csv"), diagram, cfg.output_format)
    return 0


_HANDLERS = {
    "kernel": _cmd_kernel,
    "coeff": _cmd_coeff,
    "evolve": _cmd_evolve,
    "fidelity": _cmd_fidelity,
    "average-fidelity": _cmd_average_fidelity,
    "trajectories": _cmd_trajectories,
    "figure": _cmd_figure,
    "diagram": _cmd_diagram,
}


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        args = _build_parser().parse_args(argv)
        cfg = _config_from_args(args)
        return _HANDLERS[args.command](cfg, args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteError, NotPositiveSemidefiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
