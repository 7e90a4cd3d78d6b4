"""Experiment runner for the stability toolkit.

Subcommands wrap the library analyses one-to-one and write three artifacts
per run into the output directory: ``<prefix>.csv`` (full-precision data),
``<prefix>.report.txt`` (key-value summary; its ``generated`` line is the
only nondeterministic field), and ``<prefix>.png`` (figure; suppressed by
``--no-plot``).

Parameters resolve in precedence order: built-in defaults, then a flat
``key = value`` config file given by ``--config``, then explicit flags.

Exit codes: 0 analysis produced a result; 1 infeasible or not applicable;
2 invalid configuration or usage; 3 q-table missing or unreadable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import plots, reporting
from .channel_model import convert_p0_sa, crdsa_config, drift_profile, sa_config, transition_matrix
from .errors import (
    ConfigurationError,
    InfeasibleError,
    NotApplicableError,
    TableFormatError,
    TableRangeError,
)
from .fet import fet_curve, solve_fet
from .mc_validate import (
    empirical_delay,
    empirical_fet,
    empirical_transition_matrix,
    run_batch,
    trace_summary,
)
from .optimize import DEFAULT_P0_GRID, DEFAULT_PR_GRID, optimize_pr
from .sa_model import sa_poisson_throughput
from .stability import classify_profile, expected_delay
from .success_model import estimate_success_table, load_table, save_table, throughput_curve

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_BAD_CONFIG = 2
EXIT_NO_TABLE = 3

OUTDIR_ENV = "CRDSA_STABILITY_OUTDIR"


class _TableMissing(Exception):
    pass


# ---------------------------------------------------------------- parameters


def _read_config_file(path) -> dict:
    """Flat key = value lines; '#' starts a comment; keys normalize to _."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    parts = str(text).replace(",", " ").split()
    if not parts:
        raise ConfigurationError(f"empty value list: {text!r}")
    return [float(p) for p in parts]


def _int_range(text) -> list:
    """start:stop[:step] inclusive integer range."""
    parts = str(text).split(":")
    if len(parts) not in (2, 3):
        raise ConfigurationError(f"range must be start:stop[:step], got {text!r}")
    start, stop = int(parts[0]), int(parts[1])
    step = int(parts[2]) if len(parts) == 3 else 1
    if step < 1 or stop < start:
        raise ConfigurationError(f"bad range {text!r}")
    return list(range(start, stop + 1, step))


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _suffixed(base: Path, ext: str) -> Path:
    return base.parent / (base.name + ext)


class _Params:
    """Unified flag/file/default resolution for one subcommand invocation."""

    def __init__(self, args):
        self.args = vars(args)
        config_path = self.args.get("config")
        self.file = _read_config_file(config_path) if config_path else {}

    def get(self, name, cast=str, default=None, required=False):
        value = self.args.get(name)
        if value is None and name in self.file:
            value = self.file[name]
        if value is None:
            value = default
        elif value is not default:
            value = cast(value)
        if value is None and required:
            raise ConfigurationError(f"missing required parameter: {name}")
        return value


def _build_channel(params: _Params, pr_default=None, p0_default=None):
    """Channel config from params; swept fields may carry placeholder defaults."""
    scheme = params.get("scheme", str, "crdsa")
    M = params.get("M", int, required=True)
    p0 = params.get("p0", float, p0_default, required=p0_default is None)
    pr = params.get("pr", float, pr_default, required=pr_default is None)
    d = params.get("d", int)
    num_slots = params.get("num_slots", int)
    max_iterations = params.get("max_iterations", int)
    if scheme == "crdsa":
        return crdsa_config(
            M,
            p0,
            pr,
            d=2 if d is None else d,
            num_slots=100 if num_slots is None else num_slots,
            max_iterations=10 if max_iterations is None else max_iterations,
        )
    if scheme == "sa":
        if any(v is not None for v in (d, num_slots, max_iterations)):
            raise ConfigurationError("sa takes no d/num_slots/max_iterations")
        return sa_config(M, p0, pr)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def _load_required_table(params: _Params, config=None):
    if config is not None and not config.is_crdsa:
        return None
    path = params.get("table", str)
    if path is None:
        raise _TableMissing("this analysis needs a q-table: pass --table (build one with build-q)")
    if not Path(path).exists():
        raise _TableMissing(f"q-table file not found: {path}")
    return load_table(path)


def _out_base(params: _Params, default_prefix: str) -> Path:
    out_dir = params.get("out_dir", str) or os.environ.get(OUTDIR_ENV, ".")
    prefix = params.get("prefix", str, default_prefix)
    return Path(out_dir) / prefix


def _wrote(path) -> None:
    print(f"wrote {path}")


def _delay_or_none(config, table, mode):
    try:
        return expected_delay(config=config, table=table, mode=mode).delay_slots
    except NotApplicableError:
        return None


# ---------------------------------------------------------------- subcommands


def cmd_build_q(params: _Params) -> int:
    d = params.get("d", int, required=True)
    num_slots = params.get("num_slots", int, 100)
    max_iterations = params.get("max_iterations", int, 10)
    tau_max = params.get("tau_max", int, 500)
    trials = params.get("trials", int, 20000)
    seed = params.get("seed", int, 271828)
    workers = params.get("workers", int)

    table = estimate_success_table(d, num_slots, max_iterations, tau_max, trials, seed, workers)
    table_path = params.get("out", str)
    if table_path is None:
        out_dir = params.get("out_dir", str) or os.environ.get(OUTDIR_ENV, ".")
        name = f"q_d{d}_ns{num_slots}_i{max_iterations}_tau{tau_max}_t{trials}_s{seed}.qtab"
        table_path = Path(out_dir) / name
    table_path = Path(table_path)
    table_path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, table_path)
    _wrote(table_path)

    curve = throughput_curve(table)
    peak_load, peak_s = curve.peak()
    base = _out_base(params, "build-q")
    csv_path = reporting.write_csv(
        _suffixed(base, ".csv"),
        ["tau", "load_pkt_slot", "throughput_pkt_slot"],
        [(i, g, s) for i, (g, s) in enumerate(curve.points)],
    )
    _wrote(csv_path)
    report_path = reporting.write_report(
        _suffixed(base, ".report.txt"),
        "q-table build",
        [
            ("table_file", str(table_path)),
            ("d", d),
            ("num_slots", num_slots),
            ("max_iterations", max_iterations),
            ("tau_max", tau_max),
            ("trials_per_tau", trials),
            ("master_seed", seed),
            ("peak_throughput_pkt_slot", peak_s),
            ("peak_load_pkt_slot", peak_load),
        ],
    )
    _wrote(report_path)
    if not params.get("no_plot", _parse_bool, False):
        loads = [g for g, _ in curve.points]
        ss = [s for _, s in curve.points]
        _wrote(plots.throughput_figure([("decoded", loads, ss)], _suffixed(base, ".png")))
    print(f"peak throughput = {peak_s:.4g} pkt/slot at load {peak_load:.4g}")
    return EXIT_OK


def _profile_and_report(params: _Params):
    config = _build_channel(params)
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    profile = drift_profile(config, table, mode=mode)
    return config, table, mode, profile, classify_profile(profile)


def cmd_drift(params: _Params) -> int:
    config, _, mode, profile, report = _profile_and_report(params)
    base = _out_base(params, "drift")
    states = np.arange(profile.drift.size)
    csv_path = reporting.write_csv(
        _suffixed(base, ".csv"),
        ["backlog", "drift_users_per_epoch", "throughput_pkt_slot"],
        zip(states, profile.drift, profile.throughput),
    )
    _wrote(csv_path)
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("classification", report.classification),
        ("equilibrium_count", len(report.points)),
    ]
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "drift profile", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(plots.drift_figure(profile, _suffixed(base, ".png"), points=report.points))
    print(f"classification = {report.classification}")
    return EXIT_OK


def cmd_equilibria(params: _Params) -> int:
    config, _, mode, profile, report = _profile_and_report(params)
    base = _out_base(params, "equilibria")
    csv_path = reporting.write_csv(
        _suffixed(base, ".csv"),
        ["backlog", "local_stability", "throughput_pkt_slot"],
        [(pt.backlog, pt.local_stability, pt.throughput) for pt in report.points],
    )
    _wrote(csv_path)
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("classification", report.classification),
        ("equilibrium_count", len(report.points)),
    ]
    for i, pt in enumerate(report.points):
        pairs.append((f"point_{i}", f"{pt.local_stability} @ {pt.backlog:.4g} (S={pt.throughput:.4g})"))
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "equilibria", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(plots.drift_figure(profile, _suffixed(base, ".png"), points=report.points))
    print(f"classification = {report.classification}")
    for pt in report.points:
        print(f"point: {pt.local_stability} @ backlog {pt.backlog:.4g}, S = {pt.throughput:.4g} pkt/slot")
    return EXIT_OK


def cmd_delay(params: _Params) -> int:
    config, table, mode, profile, report = _profile_and_report(params)
    delay = expected_delay(table=table, mode=mode, profile=profile)
    base = _out_base(params, "delay")
    csv_path = reporting.write_csv(
        _suffixed(base, ".csv"),
        ["n_0", "S_0_pkt_slot", "delay_slots", "delay_frames"],
        [(delay.n_0, delay.S_0, delay.delay_slots, delay.delay_frames)],
    )
    _wrote(csv_path)
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("classification", report.classification),
        ("n_0_users", delay.n_0),
        ("S_0_pkt_slot", delay.S_0),
        ("delay_slots", delay.delay_slots),
        ("delay_frames", delay.delay_frames),
    ]
    if delay.note:
        pairs.append(("note", delay.note))
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "expected backlog delay", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(
            plots.drift_figure(
                profile, _suffixed(base, ".png"), points=report.points, operating_backlog=delay.n_0
            )
        )
    print(f"n_0 = {delay.n_0:.4g} users")
    print(f"S_0 = {delay.S_0:.4g} pkt/slot")
    frames = "" if delay.delay_frames is None else f" ({delay.delay_frames:.4g} frames)"
    print(f"D_b = {delay.delay_slots:.4g} slots{frames}")
    return EXIT_OK


def cmd_optimize_pr(params: _Params) -> int:
    config = _build_channel(params, pr_default=0.5)
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    grid = params.get("pr_grid", _float_list)
    grid = DEFAULT_PR_GRID if grid is None else np.asarray(grid, dtype=float)

    rows = []
    for pr in np.sort(grid):
        dv = _delay_or_none(config.with_params(pr=float(pr)), table, mode)
        rows.append((pr, dv if dv is not None else float("nan"), dv is not None))
    result = optimize_pr(config, table=table, pr_grid=grid, mode=mode)

    base = _out_base(params, "optimize-pr")
    _wrote(reporting.write_csv(_suffixed(base, ".csv"), ["pr", "delay_slots", "stable"], rows))
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("feasible", result.feasible),
        ("pr_opt", result.pr_opt),
        ("delay_slots", result.delay_slots),
    ]
    if result.note:
        pairs.append(("note", result.note))
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "minimum-delay pr", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(
            plots.delay_sweep_figure(
                [r[0] for r in rows],
                [r[1] for r in rows],
                _suffixed(base, ".png"),
                "retransmission probability",
                x_opt=result.pr_opt,
                logx=True,
            )
        )
    if not result.feasible:
        print(f"error code=infeasible detail={result.note}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"pr_opt = {result.pr_opt:.4g}")
    print(f"delay = {result.delay_slots:.4g} slots")
    return EXIT_OK


def _sweep_best(rows, delay_target):
    """Largest swept value whose minimum stable delay meets the target."""
    best = None
    for value, result in rows:
        if result.feasible and result.delay_slots <= delay_target:
            if best is None or value > best[0]:
                best = (value, result)
    return best


def cmd_max_m(params: _Params) -> int:
    config = _build_channel(params, pr_default=0.5)
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    delay_target = params.get("delay_target", float, required=True)
    m_values = params.get("m_range", _int_range, required=True)
    grid = params.get("pr_grid", _float_list)

    rows = []
    for M in m_values:
        rows.append((M, optimize_pr(config.with_params(M=int(M)), table=table, pr_grid=grid, mode=mode)))
    best = _sweep_best(rows, delay_target)

    base = _out_base(params, "max-m")
    _wrote(
        reporting.write_csv(
            _suffixed(base, ".csv"),
            ["M", "feasible", "pr_opt", "delay_slots"],
            [(M, r.feasible, r.pr_opt, r.delay_slots) for M, r in rows],
        )
    )
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("delay_target_slots", delay_target),
        ("feasible", best is not None),
        ("M_opt", None if best is None else best[0]),
        ("pr_opt", None if best is None else best[1].pr_opt),
        ("delay_slots", None if best is None else best[1].delay_slots),
    ]
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "maximum population", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(
            plots.delay_sweep_figure(
                [M for M, _ in rows],
                [r.delay_slots for _, r in rows],
                _suffixed(base, ".png"),
                "population size M",
                x_opt=None if best is None else best[0],
                target=delay_target,
            )
        )
    if best is None:
        print("error code=infeasible detail=no population size meets the delay target", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"M_opt = {best[0]}")
    print(f"pr_opt = {best[1].pr_opt:.4g}")
    print(f"delay = {best[1].delay_slots:.4g} slots (target {delay_target:.4g})")
    return EXIT_OK


def cmd_max_p0(params: _Params) -> int:
    config = _build_channel(params, pr_default=0.5, p0_default=0.5)
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    delay_target = params.get("delay_target", float, required=True)
    p0_values = params.get("p0_grid", _float_list)
    p0_values = DEFAULT_P0_GRID if p0_values is None else np.sort(np.asarray(p0_values, dtype=float))
    grid = params.get("pr_grid", _float_list)

    rows = []
    for p0 in p0_values:
        rows.append(
            (float(p0), optimize_pr(config.with_params(p0=float(p0)), table=table, pr_grid=grid, mode=mode))
        )
    best = _sweep_best(rows, delay_target)

    base = _out_base(params, "max-p0")
    _wrote(
        reporting.write_csv(
            _suffixed(base, ".csv"),
            ["p0", "feasible", "pr_opt", "delay_slots"],
            [(p0, r.feasible, r.pr_opt, r.delay_slots) for p0, r in rows],
        )
    )
    pairs = reporting.config_pairs(config) + [
        ("mode", mode),
        ("delay_target_slots", delay_target),
        ("feasible", best is not None),
        ("p0_opt", None if best is None else best[0]),
        ("pr_opt", None if best is None else best[1].pr_opt),
        ("delay_slots", None if best is None else best[1].delay_slots),
    ]
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "maximum traffic probability", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(
            plots.delay_sweep_figure(
                [p0 for p0, _ in rows],
                [r.delay_slots for _, r in rows],
                _suffixed(base, ".png"),
                "traffic generation probability p0",
                x_opt=None if best is None else best[0],
                target=delay_target,
            )
        )
    if best is None:
        print("error code=infeasible detail=no p0 on the grid meets the delay target", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"p0_opt = {best[0]:.4g}")
    print(f"pr_opt = {best[1].pr_opt:.4g}")
    print(f"delay = {best[1].delay_slots:.4g} slots (target {delay_target:.4g})")
    return EXIT_OK


def cmd_fet(params: _Params) -> int:
    config = _build_channel(params)
    table = _load_required_table(params, config)
    boundary = params.get("boundary", int)
    rule = params.get("rule", str, "critical")
    flag = ""
    if boundary is None:
        point = fet_curve(config, [config.pr], boundary_rule=rule, table=table)[0]
        boundary, flag = point.boundary, point.flag
        if boundary is None:
            print(f"error code=not-applicable detail={flag}", file=sys.stderr)
            return EXIT_INFEASIBLE
    else:
        rule = "explicit"
    result = solve_fet(config, boundary, table=table)

    base = _out_base(params, "fet")
    _wrote(
        reporting.write_csv(
            _suffixed(base, ".csv"),
            ["starting_backlog", "fet_epochs"],
            zip(range(len(result.times)), result.times),
        )
    )
    pairs = reporting.config_pairs(config) + [
        ("rule", rule),
        ("boundary_backlog", result.boundary_state),
        ("fet_epochs", result.headline),
        ("epoch_unit", result.epoch_unit),
        ("fet_slots", result.headline_slots),
        ("residual", result.residual),
    ]
    if flag:
        pairs.append(("flag", flag))
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "mean first-entry time", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(plots.fet_times_figure(result.times, _suffixed(base, ".png"), result.boundary_state))
    print(f"boundary = {result.boundary_state}")
    print(f"T_0 = {result.headline:.6g} {result.epoch_unit} = {result.headline_slots:.6g} slots")
    return EXIT_OK


def cmd_fet_curve(params: _Params) -> int:
    config = _build_channel(params, pr_default=0.5)
    table = _load_required_table(params, config)
    rule = params.get("rule", str, "critical")
    pr_values = params.get("pr_values", _float_list, required=True)
    points = fet_curve(config, pr_values, boundary_rule=rule, table=table)

    base = _out_base(params, "fet-curve")
    _wrote(
        reporting.write_csv(
            _suffixed(base, ".csv"),
            ["pr", "fet_epochs", "fet_slots", "boundary", "rule", "flag"],
            [(p.pr, p.fet_epochs, p.fet_slots, p.boundary, p.rule, p.flag) for p in points],
        )
    )
    defined = [p for p in points if np.isfinite(p.fet_slots)]
    pairs = reporting.config_pairs(config) + [
        ("rule", rule),
        ("points_requested", len(points)),
        ("points_defined", len(defined)),
    ]
    if defined:
        lo = min(defined, key=lambda p: p.fet_slots)
        hi = max(defined, key=lambda p: p.fet_slots)
        pairs += [
            ("min_fet_slots", f"{lo.fet_slots:.6g} at pr={lo.pr:.4g}"),
            ("max_fet_slots", f"{hi.fet_slots:.6g} at pr={hi.pr:.4g}"),
        ]
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "first-entry-time curve", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(
            plots.fet_curve_figure(
                [(config.scheme, [p.pr for p in points], [p.fet_slots for p in points])],
                _suffixed(base, ".png"),
            )
        )
    if not defined:
        print("error code=not-applicable detail=no pr value yields a finite boundary", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"defined points = {len(defined)}/{len(points)}")
    return EXIT_OK


def cmd_validate(params: _Params) -> int:
    config = _build_channel(params)
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    runs = params.get("runs", int, 100)
    epochs = params.get("epochs", int, required=True)
    seed = params.get("seed", int, 20260825)
    x_max = params.get("x_max", int)
    boundary = params.get("boundary", int)

    traces = run_batch(config, runs, epochs, master_seed=seed)
    summaries = [trace_summary(t) for t in traces]
    base = _out_base(params, "validate")
    _wrote(
        reporting.write_csv(
            _suffixed(base, ".csv"),
            [
                "run_index",
                "epochs",
                "time_avg_backlog",
                "throughput_pkt_slot",
                "mean_delay_slots",
                "packets_completed",
            ],
            [
                (t.run_index, s.epochs, s.time_avg_backlog, s.throughput_pkt_slot, s.mean_delay_slots, s.packets_completed)
                for t, s in zip(traces, summaries)
            ],
        )
    )

    pairs = reporting.config_pairs(config) + [
        ("runs", runs),
        ("epochs_per_run", epochs),
        ("master_seed", seed),
        ("mean_time_avg_backlog", float(np.mean([s.time_avg_backlog for s in summaries]))),
        ("mean_throughput_pkt_slot", float(np.mean([s.throughput_pkt_slot for s in summaries]))),
        ("sim_delay_slots", empirical_delay(traces)),
    ]
    computed_delay = _delay_or_none(config, table, mode)
    if computed_delay is not None:
        pairs.append(("computed_delay_slots", computed_delay))
    if boundary is not None:
        emp = empirical_fet(traces, boundary)
        fr = solve_fet(config, boundary, table=table)
        pairs += [
            ("boundary_backlog", boundary),
            ("sim_fet_epochs", emp.mean_epochs),
            ("sim_fet_runs_used", emp.runs_used),
            ("sim_fet_runs_excluded", emp.runs_excluded),
            ("computed_fet_epochs", fr.headline),
        ]
    if x_max is not None:
        emp_mat = empirical_transition_matrix(traces, x_max)
        comp_mat = transition_matrix(config, table, x_max=x_max)
        visited = emp_mat.row_visits > 0
        gap = np.abs(emp_mat.matrix[visited] - comp_mat.matrix[visited])
        pairs += [
            ("matrix_x_max", x_max),
            ("matrix_rows_visited", int(visited.sum())),
            ("matrix_max_abs_diff", float(gap.max()) if gap.size else None),
        ]
    _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "closed-loop validation", pairs))
    if not params.get("no_plot", _parse_bool, False):
        _wrote(plots.backlog_traces_figure(traces, _suffixed(base, ".png"), boundary=boundary))
    print(f"runs = {runs}, epochs = {epochs}")
    print(f"sim delay = {empirical_delay(traces):.4g} slots")
    if computed_delay is not None:
        print(f"computed delay = {computed_delay:.4g} slots")
    return EXIT_OK


def cmd_compare(params: _Params) -> int:
    analysis = params.get("analysis", str, "min-delay")
    config = _build_channel(params)
    if not config.is_crdsa:
        raise ConfigurationError("compare starts from a crdsa configuration; the sa twin is derived")
    table = _load_required_table(params, config)
    mode = params.get("mode", str, "exact")
    twin = sa_config(config.M, convert_p0_sa(config.p0, config.num_slots), config.pr)
    base = _out_base(params, "compare")

    if analysis == "min-delay":
        grid = params.get("pr_grid", _float_list)
        grid = DEFAULT_PR_GRID if grid is None else np.sort(np.asarray(grid, dtype=float))
        rows = []
        for pr in grid:
            dc = _delay_or_none(config.with_params(pr=float(pr)), table, mode)
            ds = _delay_or_none(twin.with_params(pr=float(pr)), None, mode)
            rows.append((float(pr), dc, ds))
        rc = optimize_pr(config, table=table, pr_grid=grid, mode=mode)
        rs = optimize_pr(twin, pr_grid=grid, mode=mode)
        _wrote(
            reporting.write_csv(
                _suffixed(base, ".csv"), ["pr", "crdsa_delay_slots", "sa_delay_slots"], rows
            )
        )
        saving = None
        if rc.feasible and rs.feasible and rs.delay_slots > 0:
            saving = 100.0 * (1.0 - rc.delay_slots / rs.delay_slots)
        pairs = reporting.config_pairs(config) + [
            ("sa_twin_p0", twin.p0),
            ("crdsa_pr_opt", rc.pr_opt),
            ("crdsa_delay_slots", rc.delay_slots),
            ("sa_pr_opt", rs.pr_opt),
            ("sa_delay_slots", rs.delay_slots),
            ("delay_saving_pct", saving),
        ]
        _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "scheme comparison: minimum delay", pairs))
        if not params.get("no_plot", _parse_bool, False):
            prs = [r[0] for r in rows]
            series = [
                ("crdsa", prs, [float("nan") if r[1] is None else r[1] for r in rows]),
                ("sa", prs, [float("nan") if r[2] is None else r[2] for r in rows]),
            ]
            _wrote(
                plots.fet_curve_figure(
                    series, _suffixed(base, ".png"), ylabel="expected backlog delay (slots)"
                )
            )
        if saving is None:
            print("error code=infeasible detail=one scheme has no stable operating point", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"crdsa: pr_opt = {rc.pr_opt:.4g}, delay = {rc.delay_slots:.4g} slots")
        print(f"sa:    pr_opt = {rs.pr_opt:.4g}, delay = {rs.delay_slots:.4g} slots")
        print(f"delay saving = {saving:.1f}%")
        return EXIT_OK

    if analysis == "fet":
        pr_values = params.get("pr_values", _float_list, required=True)
        crdsa_pts = fet_curve(config, pr_values, boundary_rule="saturation", table=table)
        sa_pts = fet_curve(twin, pr_values, boundary_rule="saturation")
        rows = []
        for c, s in zip(crdsa_pts, sa_pts):
            ratio = (
                c.fet_slots / s.fet_slots
                if np.isfinite(c.fet_slots) and np.isfinite(s.fet_slots) and s.fet_slots > 0
                else float("nan")
            )
            rows.append((c.pr, c.fet_slots, s.fet_slots, ratio))
        _wrote(
            reporting.write_csv(
                _suffixed(base, ".csv"),
                ["pr", "crdsa_fet_slots", "sa_fet_slots", "ratio"],
                rows,
            )
        )
        ratios = [r[3] for r in rows if np.isfinite(r[3])]
        pairs = reporting.config_pairs(config) + [
            ("sa_twin_p0", twin.p0),
            ("rule", "saturation"),
            ("max_ratio", max(ratios) if ratios else None),
        ]
        _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "scheme comparison: first-entry time", pairs))
        if not params.get("no_plot", _parse_bool, False):
            prs = [r[0] for r in rows]
            series = [
                ("crdsa", prs, [r[1] for r in rows]),
                ("sa", prs, [r[2] for r in rows]),
            ]
            _wrote(plots.fet_curve_figure(series, _suffixed(base, ".png")))
        if not ratios:
            print("error code=not-applicable detail=no pr gives finite first-entry times for both schemes", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"max crdsa/sa FET ratio = {max(ratios):.4g}")
        return EXIT_OK

    if analysis == "throughput":
        curve = throughput_curve(table)
        loads = np.array([g for g, _ in curve.points])
        s_crdsa = np.array([s for _, s in curve.points])
        with np.errstate(invalid="ignore"):
            # best-case finite-M slotted ALOHA: all M users attempt with G/M
            s_sa_finite = np.where(
                loads <= config.M,
                loads * (1.0 - np.minimum(loads / config.M, 1.0)) ** (config.M - 1),
                0.0,
            )
        s_sa_poisson = np.array([sa_poisson_throughput(g) for g in loads])
        _wrote(
            reporting.write_csv(
                _suffixed(base, ".csv"),
                ["load_pkt_slot", "crdsa_pkt_slot", "sa_finite_M_pkt_slot", "sa_poisson_pkt_slot"],
                zip(loads, s_crdsa, s_sa_finite, s_sa_poisson),
            )
        )
        peak_load, peak_s = curve.peak()
        pairs = reporting.config_pairs(config) + [
            ("crdsa_peak_pkt_slot", peak_s),
            ("crdsa_peak_load", peak_load),
            ("sa_finite_M_peak_pkt_slot", float(s_sa_finite.max())),
            ("sa_poisson_peak_pkt_slot", float(s_sa_poisson.max())),
        ]
        _wrote(reporting.write_report(_suffixed(base, ".report.txt"), "scheme comparison: throughput", pairs))
        if not params.get("no_plot", _parse_bool, False):
            series = [
                ("crdsa", loads, s_crdsa),
                (f"sa (M={config.M})", loads, s_sa_finite),
                ("sa (poisson)", loads, s_sa_poisson),
            ]
            _wrote(plots.throughput_figure(series, _suffixed(base, ".png")))
        print(f"crdsa peak = {peak_s:.4g} pkt/slot; sa finite-M peak = {s_sa_finite.max():.4g} pkt/slot")
        return EXIT_OK

    raise ConfigurationError(f"unknown analysis {analysis!r}")


# ---------------------------------------------------------------- wiring


def _add_output_args(p) -> None:
    p.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUTDIR_ENV} or .)")
    p.add_argument("--prefix", help="output file prefix (default: subcommand name)")
    p.add_argument("--no-plot", dest="no_plot", action="store_const", const=True, default=None,
                   help="skip figure rendering")


def _add_channel_args(p, with_table=True) -> None:
    p.add_argument("--config", help="flat key = value parameter file; flags override it")
    p.add_argument("--scheme", choices=("crdsa", "sa"))
    p.add_argument("--M", type=int, help="user population size")
    p.add_argument("--p0", type=float, help="fresh-traffic probability per epoch")
    p.add_argument("--pr", type=float, help="retransmission probability per epoch")
    p.add_argument("--d", type=int, help="replicas per burst (crdsa)")
    p.add_argument("--num-slots", dest="num_slots", type=int, help="slots per frame (crdsa)")
    p.add_argument("--max-iterations", dest="max_iterations", type=int, help="decoder iteration cap (crdsa)")
    p.add_argument("--mode", choices=("exact", "approx"), help="throughput evaluation mode")
    if with_table:
        p.add_argument("--table", help="q-table file (required for crdsa)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crdsa-stability",
        description="Stability, delay, and first-entry-time analysis of CRDSA and "
        "Slotted ALOHA random access with a finite user population.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-q", help="estimate and persist a q(tau, upsilon) success table")
    p.add_argument("--d", type=int, required=True, help="replicas per burst")
    p.add_argument("--num-slots", dest="num_slots", type=int, help="slots per frame (default 100)")
    p.add_argument("--max-iterations", dest="max_iterations", type=int, help="decoder iteration cap (default 10)")
    p.add_argument("--tau-max", dest="tau_max", type=int, help="largest attempt count (default 500)")
    p.add_argument("--trials", type=int, help="trials per tau (default 20000)")
    p.add_argument("--seed", type=int, help="master seed (default 271828)")
    p.add_argument("--workers", type=int, help="worker threads for the build")
    p.add_argument("--out", help="table file path (default derived from parameters)")
    p.add_argument("--config", help="flat key = value parameter file; flags override it")
    _add_output_args(p)
    p.set_defaults(handler=cmd_build_q)

    p = sub.add_parser("drift", help="drift and throughput over every backlog state")
    _add_channel_args(p)
    _add_output_args(p)
    p.set_defaults(handler=cmd_drift)

    p = sub.add_parser("equilibria", help="equilibrium points and stability classification")
    _add_channel_args(p)
    _add_output_args(p)
    p.set_defaults(handler=cmd_equilibria)

    p = sub.add_parser("delay", help="expected backlog delay at the stable operating point")
    _add_channel_args(p)
    _add_output_args(p)
    p.set_defaults(handler=cmd_delay)

    p = sub.add_parser("optimize-pr", help="retransmission probability minimizing the delay")
    _add_channel_args(p)
    p.add_argument("--pr-grid", dest="pr_grid", help="comma-separated pr values (default: built-in log grid)")
    _add_output_args(p)
    p.set_defaults(handler=cmd_optimize_pr)

    p = sub.add_parser("max-m", help="largest population meeting a delay target")
    _add_channel_args(p)
    p.add_argument("--delay-target", dest="delay_target", type=float, help="delay budget in slots")
    p.add_argument("--m-range", dest="m_range", help="population sweep start:stop[:step]")
    p.add_argument("--pr-grid", dest="pr_grid", help="comma-separated pr values")
    _add_output_args(p)
    p.set_defaults(handler=cmd_max_m)

    p = sub.add_parser("max-p0", help="largest traffic probability meeting a delay target")
    _add_channel_args(p)
    p.add_argument("--delay-target", dest="delay_target", type=float, help="delay budget in slots")
    p.add_argument("--p0-grid", dest="p0_grid", help="comma-separated p0 values (default: built-in linear grid)")
    p.add_argument("--pr-grid", dest="pr_grid", help="comma-separated pr values")
    _add_output_args(p)
    p.set_defaults(handler=cmd_max_p0)

    p = sub.add_parser("fet", help="mean first-entry time into the high-backlog region")
    _add_channel_args(p)
    p.add_argument("--boundary", type=int, help="absorbing backlog boundary (overrides --rule)")
    p.add_argument("--rule", choices=("critical", "saturation"), help="boundary selection rule (default critical)")
    _add_output_args(p)
    p.set_defaults(handler=cmd_fet)

    p = sub.add_parser("fet-curve", help="first-entry time as a function of pr")
    _add_channel_args(p)
    p.add_argument("--pr-values", dest="pr_values", help="comma-separated pr values")
    p.add_argument("--rule", choices=("critical", "saturation"), help="boundary selection rule (default critical)")
    _add_output_args(p)
    p.set_defaults(handler=cmd_fet_curve)

    p = sub.add_parser("validate", help="closed-loop Monte Carlo cross-check of the analysis")
    _add_channel_args(p)
    p.add_argument("--runs", type=int, help="independent runs (default 100)")
    p.add_argument("--epochs", type=int, help="epochs per run")
    p.add_argument("--seed", type=int, help="master seed (default 20260825)")
    p.add_argument("--x-max", dest="x_max", type=int, help="compare transition matrices up to this backlog")
    p.add_argument("--boundary", type=int, help="also compare first-entry times into this backlog")
    _add_output_args(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("compare", help="side-by-side crdsa vs slotted-aloha analysis")
    _add_channel_args(p)
    p.add_argument("--analysis", choices=("min-delay", "fet", "throughput"), help="comparison to run (default min-delay)")
    p.add_argument("--pr-grid", dest="pr_grid", help="comma-separated pr values (min-delay)")
    p.add_argument("--pr-values", dest="pr_values", help="comma-separated pr values (fet)")
    _add_output_args(p)
    p.set_defaults(handler=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        params = _Params(args)
        return args.handler(params)
    except ConfigurationError as exc:
        print(f"error code=invalid-config detail={exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except _TableMissing as exc:
        print(f"error code=table-missing detail={exc}", file=sys.stderr)
        return EXIT_NO_TABLE
    except (TableFormatError, TableRangeError) as exc:
        print(f"error code=table-invalid detail={exc}", file=sys.stderr)
        return EXIT_NO_TABLE
    except (NotApplicableError, InfeasibleError) as exc:
        print(f"error code=not-applicable detail={exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
