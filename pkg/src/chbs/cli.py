"""Command-line entry point.

Subcommands: ``run`` (single trajectory), ``eps-study`` (regularization
sweep), ``cont-dep`` (two-config stability experiment), ``check``
(structural checks on the mesh).  Configuration is flat sectioned
``key = value`` text; unknown sections or keys are errors.  Output files
are written atomically (temp file plus rename) into the output directory:
``monitors.csv``, ``snapshot_<step>.csv``, ``report.txt``, ``report.csv``.

Randomness comes only from numpy's counter-based Philox generator seeded
from the config, so identical config and seed give byte-identical CSVs.
The CHBS_THREADS environment variable caps experiment fan-out.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import verify
from .domain import build_unit_square
from .errors import ChbsError, CompatibilityError, ConfigError, NumericalError, StepError
from .monotone import (GraphPair, logarithmic_graph, obstacle_graph,
                       polynomial_graph)
from .scheme import (CONVEX_SPLIT, FULLY_IMPLICIT, MonitorRecord,
                     SchemeConfig, run)
from .spaces import FieldPair, project_zero_mean

_SECTIONS = ("mesh", "scheme", "graphs", "init", "forcing", "output")
_GRAPH_KINDS = ("polynomial", "logarithmic", "obstacle")
_INIT_PRESETS = ("constant", "random", "csv")
_FORCING_PRESETS = ("zero", "constant", "csv")
_SPLITTINGS = {"convex_split": CONVEX_SPLIT, "fully_implicit": FULLY_IMPLICIT}


@dataclass
class RunSpec:
    """Validated run description with documented defaults."""

    mesh_n: int = 9
    eps: float = 0.1
    tau: float = 1e-3
    t_end: float = 0.1
    newton_tol: float = 1e-10
    newton_max: int = 50
    splitting: str = "convex_split"
    eps_list: tuple = (0.5, 0.25, 0.125, 0.0625)
    bulk_kind: str = "polynomial"
    boundary_kind: str = "polynomial"
    rho: float = 1.0
    c0: float = 0.0
    pi_slope: float = -1.0
    log_c: float = 1.0
    init_preset: str = "constant"
    init_value: float = 0.0
    init_mean: float = 0.0
    init_amplitude: float = 0.05
    init_path: Optional[str] = None
    seed: Optional[int] = None
    forcing_preset: str = "zero"
    forcing_value: float = 0.0
    forcing_path: Optional[str] = None
    stride: int = 50
    out_dir: str = "out"


def _to_int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}")


def _to_float(key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}")


def _to_float_list(key, raw):
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers, got {raw!r}")


def _to_choice(key, raw, choices):
    if raw not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}; got {raw!r}")
    return raw


def parse_config(text):
    """Parse sectioned key=value text into a validated RunSpec.

    Unknown sections, unknown keys and duplicate keys are errors; parse
    errors carry the line number.
    """
    entries = {}
    section = None
    for ln, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {ln}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw_line!r}")
        if section is None:
            raise ConfigError(f"line {ln}: key outside of any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if (section, key) in entries:
            raise ConfigError(f"line {ln}: duplicate key '{key}' in section [{section}]")
        entries[(section, key)] = (ln, value)

    spec = RunSpec()
    handlers = {
        ("mesh", "n"): lambda v: setattr(spec, "mesh_n", _to_int("n", v)),
        ("scheme", "eps"): lambda v: setattr(spec, "eps", _to_float("eps", v)),
        ("scheme", "tau"): lambda v: setattr(spec, "tau", _to_float("tau", v)),
        ("scheme", "t_end"): lambda v: setattr(spec, "t_end", _to_float("t_end", v)),
        ("scheme", "newton_tol"): lambda v: setattr(spec, "newton_tol", _to_float("newton_tol", v)),
        ("scheme", "newton_max"): lambda v: setattr(spec, "newton_max", _to_int("newton_max", v)),
        ("scheme", "splitting"): lambda v: setattr(spec, "splitting", _to_choice("splitting", v, tuple(_SPLITTINGS))),
        ("scheme", "eps_list"): lambda v: setattr(spec, "eps_list", _to_float_list("eps_list", v)),
        ("graphs", "bulk"): lambda v: setattr(spec, "bulk_kind", _to_choice("bulk", v, _GRAPH_KINDS)),
        ("graphs", "boundary"): lambda v: setattr(spec, "boundary_kind", _to_choice("boundary", v, _GRAPH_KINDS)),
        ("graphs", "rho"): lambda v: setattr(spec, "rho", _to_float("rho", v)),
        ("graphs", "c0"): lambda v: setattr(spec, "c0", _to_float("c0", v)),
        ("graphs", "pi_slope"): lambda v: setattr(spec, "pi_slope", _to_float("pi_slope", v)),
        ("graphs", "log_c"): lambda v: setattr(spec, "log_c", _to_float("log_c", v)),
        ("init", "preset"): lambda v: setattr(spec, "init_preset", _to_choice("preset", v, _INIT_PRESETS)),
        ("init", "value"): lambda v: setattr(spec, "init_value", _to_float("value", v)),
        ("init", "mean"): lambda v: setattr(spec, "init_mean", _to_float("mean", v)),
        ("init", "amplitude"): lambda v: setattr(spec, "init_amplitude", _to_float("amplitude", v)),
        ("init", "path"): lambda v: setattr(spec, "init_path", v),
        ("init", "seed"): lambda v: setattr(spec, "seed", _to_int("seed", v)),
        ("forcing", "preset"): lambda v: setattr(spec, "forcing_preset", _to_choice("preset", v, _FORCING_PRESETS)),
        ("forcing", "value"): lambda v: setattr(spec, "forcing_value", _to_float("value", v)),
        ("forcing", "path"): lambda v: setattr(spec, "forcing_path", v),
        ("output", "stride"): lambda v: setattr(spec, "stride", _to_int("stride", v)),
        ("output", "dir"): lambda v: setattr(spec, "out_dir", v),
    }
    for (section, key), (ln, value) in entries.items():
        handler = handlers.get((section, key))
        if handler is None:
            raise ConfigError(f"line {ln}: unknown key '{key}' in section [{section}]")
        handler(value)
    _validate_spec(spec)
    return spec


def _validate_spec(spec):
    if spec.mesh_n < 3:
        raise ConfigError("n must be at least 3")
    if not 0.0 < spec.eps <= 1.0:
        raise ConfigError("eps must lie in (0,1]")
    if not spec.tau > 0.0:
        raise ConfigError("tau must be positive")
    if spec.t_end < 0.0:
        raise ConfigError("t_end must be nonnegative")
    if not spec.newton_tol > 0.0:
        raise ConfigError("newton_tol must be positive")
    if spec.newton_max < 1:
        raise ConfigError("newton_max must be at least 1")
    if any(not 0.0 < e <= 1.0 for e in spec.eps_list):
        raise ConfigError("eps_list entries must lie in (0,1]")
    if not spec.rho > 0.0:
        raise ConfigError("rho must be positive")
    if spec.c0 < 0.0:
        raise ConfigError("c0 must be nonnegative")
    if spec.init_amplitude < 0.0:
        raise ConfigError("amplitude must be nonnegative")
    if spec.stride < 1:
        raise ConfigError("stride must be at least 1")
    if spec.init_preset == "random" and spec.seed is None:
        raise ConfigError("seed is required when the random init preset is used")
    if spec.init_preset == "csv" and not spec.init_path:
        raise ConfigError("path is required when the csv init preset is used")
    if spec.forcing_preset == "csv" and not spec.forcing_path:
        raise ConfigError("path is required when the csv forcing preset is used")


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


# --- building model objects from a spec ------------------------------------

def _make_graph(kind, spec):
    if kind == "polynomial":
        return polynomial_graph(pi_slope=spec.pi_slope)
    if kind == "logarithmic":
        return logarithmic_graph(c=spec.log_c)
    return obstacle_graph(pi_slope=spec.pi_slope)


def build_graphs(spec):
    try:
        return GraphPair(bulk=_make_graph(spec.bulk_kind, spec),
                         boundary=_make_graph(spec.boundary_kind, spec),
                         rho=spec.rho, c0=spec.c0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_scheme_config(spec, graphs):
    return SchemeConfig(eps=spec.eps, tau=spec.tau, t_end=spec.t_end,
                        graphs=graphs, newton_tol=spec.newton_tol,
                        newton_max=spec.newton_max,
                        splitting=_SPLITTINGS[spec.splitting])


def build_initial(spec, dom):
    if spec.init_preset == "constant":
        return FieldPair.constant(dom, spec.init_value)
    if spec.init_preset == "random":
        rng = np.random.Generator(np.random.Philox(spec.seed))
        noise = FieldPair.from_bulk(dom, 2.0 * rng.random(dom.n_bulk) - 1.0)
        return spec.init_mean * FieldPair.constant(dom, 1.0) \
            + spec.init_amplitude * project_zero_mean(noise)
    values = np.zeros(dom.n_bulk)
    seen = np.zeros(dom.n_bulk, dtype=bool)
    for node, value in _read_node_value_csv(spec.init_path):
        if not 0 <= node < dom.n_bulk:
            raise ConfigError(f"init csv names node {node}, mesh has {dom.n_bulk} bulk nodes")
        values[node] = value
        seen[node] = True
    if not seen.all():
        raise ConfigError(f"init csv is missing {int((~seen).sum())} bulk nodes")
    return FieldPair.from_bulk(dom, values)


def _read_node_value_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append((int(row[0]), float(row[1])))
            except ValueError:
                if k == 0:
                    continue  # header row
                raise ConfigError(f"{path}: malformed row {row!r}")
    return rows


def build_forcing(spec, dom):
    """Forcing callable t -> FieldPair, or None for zero forcing.

    CSV tables hold (t, node, value) rows with piecewise-constant-in-time
    semantics; node ids 0..n_bulk-1 address bulk nodes and ids
    n_bulk..n_bulk+n_boundary-1 address boundary-chain positions.
    """
    if spec.forcing_preset == "zero":
        return None
    if spec.forcing_preset == "constant":
        value = spec.forcing_value
        return lambda t: FieldPair.constant(dom, value)
    table = {}
    with open(spec.forcing_path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                t, node, value = float(row[0]), int(row[1]), float(row[2])
            except ValueError:
                if k == 0:
                    continue
                raise ConfigError(f"{spec.forcing_path}: malformed row {row!r}")
            if not 0 <= node < dom.n_bulk + dom.n_boundary:
                raise ConfigError(f"{spec.forcing_path}: node id {node} out of range")
            table.setdefault(t, []).append((node, value))
    times = sorted(table)
    pairs = []
    for t in times:
        bulk = np.zeros(dom.n_bulk)
        bnd = np.zeros(dom.n_boundary)
        for node, value in table[t]:
            if node < dom.n_bulk:
                bulk[node] = value
            else:
                bnd[node - dom.n_bulk] = value
        pairs.append(FieldPair(bulk, bnd, dom))
    zero = FieldPair.zeros(dom)

    def forcing(t):
        idx = None
        for k, tk in enumerate(times):
            if tk <= t + 1e-12:
                idx = k
            else:
                break
        return pairs[idx] if idx is not None else zero

    return forcing


# --- output helpers ----------------------------------------------------------

def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_chbs_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _monitors_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(MonitorRecord.fields())
    for rec in records:
        writer.writerow([_fmt(getattr(rec, name)) for name in MonitorRecord.fields()])
    return buf.getvalue()


def _snapshot_csv(dom, state):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["node", "x", "y", "u", "mu"])
    u = state.v.bulk + state.m0
    for k in range(dom.n_bulk):
        writer.writerow([k, _fmt(dom.coords[k, 0]), _fmt(dom.coords[k, 1]),
                         _fmt(u[k]), _fmt(state.mu.bulk[k])])
    return buf.getvalue()


def _rows_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) if isinstance(row, dict) else _fmt(row[i])
                         for i, c in enumerate(columns)])
    return buf.getvalue()


def _emit(out_dir, name, text):
    _atomic_write(os.path.join(out_dir, name), text)


def _say(args, message):
    if not args.quiet:
        print(message)


# --- subcommands -------------------------------------------------------------

def cmd_run(args):
    spec = load_config(args.config[0])
    out_dir = args.out or spec.out_dir
    dom = build_unit_square(spec.mesh_n)
    graphs = build_graphs(spec)
    cfg = build_scheme_config(spec, graphs)
    u0 = build_initial(spec, dom)
    forcing = build_forcing(spec, dom)

    traj = run(cfg, u0, forcing)
    _emit(out_dir, "monitors.csv", _monitors_csv(traj.records))
    last = len(traj.states) - 1
    for k, state in enumerate(traj.states):
        if k % spec.stride == 0 or k == last:
            _emit(out_dir, f"snapshot_{k}.csv", _snapshot_csv(dom, state))

    mass0 = traj.records[0].total_mass
    drift = max(abs(r.total_mass - mass0) for r in traj.records)
    ok_mass = drift <= 1e-9
    ok_steps = not traj.aborted
    lines = [f"steps: {last}",
             f"final time: {traj.states[-1].t!r}",
             ("PASS" if ok_mass else "FAIL") + f": mass drift {drift!r} <= 1e-09",
             ("PASS" if ok_steps else "FAIL") + ": all steps converged"]
    if traj.aborted:
        lines.append(f"aborted: {traj.error}")
    _emit(out_dir, "report.txt", "\n".join(lines) + "\n")
    _emit(out_dir, "report.csv", _rows_csv(
        ["steps", "final_time", "mass_drift", "aborted"],
        [{"steps": last, "final_time": traj.states[-1].t,
          "mass_drift": drift, "aborted": int(traj.aborted)}]))
    _say(args, "\n".join(lines))
    return 0 if (ok_mass and ok_steps) else 1


def cmd_eps_study(args):
    spec = load_config(args.config[0])
    out_dir = args.out or spec.out_dir
    dom = build_unit_square(spec.mesh_n)
    graphs = build_graphs(spec)
    cfg = build_scheme_config(spec, graphs)
    u0 = build_initial(spec, dom)
    forcing = build_forcing(spec, dom)

    eps_list = tuple(sorted(spec.eps_list, reverse=True))
    report = verify.vanishing_eps_study(cfg, eps_list, u0, forcing)
    lines = report.summary_lines()
    _emit(out_dir, "report.txt", "\n".join(lines) + "\n")
    _emit(out_dir, "report.csv", _rows_csv(report.table.columns, report.table.rows))
    _say(args, "\n".join(lines))
    return 0 if report.passed else 1


def cmd_cont_dep(args):
    if len(args.config) != 2:
        raise ConfigError("cont-dep needs exactly two --config files")
    spec1 = load_config(args.config[0])
    spec2 = load_config(args.config[1])
    shared = ("mesh_n", "eps", "tau", "t_end", "newton_tol", "newton_max",
              "splitting", "bulk_kind", "boundary_kind", "rho", "c0",
              "pi_slope", "log_c", "stride")
    for name in shared:
        if getattr(spec1, name) != getattr(spec2, name):
            raise ConfigError(f"cont-dep configs may differ only in [init] and "
                              f"[forcing]; '{name}' differs")
    out_dir = args.out or spec1.out_dir
    dom = build_unit_square(spec1.mesh_n)
    graphs = build_graphs(spec1)
    cfg = build_scheme_config(spec1, graphs)
    data1 = (build_initial(spec1, dom), build_forcing(spec1, dom))
    data2 = (build_initial(spec2, dom), build_forcing(spec2, dom))

    report = verify.continuous_dependence_experiment(cfg, data1, data2)
    lines = report.summary_lines()
    _emit(out_dir, "report.txt", "\n".join(lines) + "\n")
    rows = [{"tau": tau, "sup_ratio": ratio}
            for tau, ratio in zip(report.taus, report.sup_ratios)]
    _emit(out_dir, "report.csv", _rows_csv(["tau", "sup_ratio"], rows))
    _say(args, "\n".join(lines))
    return 0 if not report.aborted else 1


def cmd_check(args):
    if args.config:
        spec = load_config(args.config[0])
    else:
        spec = RunSpec()
    out_dir = args.out or spec.out_dir
    dom = build_unit_square(spec.mesh_n)
    report = verify.appendix_checks(dom)
    lines = report.summary_lines()
    _emit(out_dir, "report.txt", "\n".join(lines) + "\n")
    rows = [{"item": it.name, "passed": int(it.passed), "detail": it.detail}
            for it in report.items]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["item", "passed", "detail"])
    for row in rows:
        writer.writerow([row["item"], row["passed"], row["detail"]])
    _emit(out_dir, "report.csv", buf.getvalue())
    _say(args, "\n".join(lines))
    return 0 if report.passed else 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="chbs",
        description="Mass-conserving bulk/boundary phase-field simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, need_config in (("run", cmd_run, True),
                                  ("eps-study", cmd_eps_study, True),
                                  ("cont-dep", cmd_cont_dep, True),
                                  ("check", cmd_check, False)):
        p = sub.add_parser(name)
        p.add_argument("--config", action="append", default=[],
                       help="config file (repeatable for cont-dep)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(fn=fn, need_config=need_config)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.need_config and not args.config:
            raise ConfigError(f"{args.command} needs --config")
        return args.fn(args)
    except (ConfigError, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StepError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ChbsError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
