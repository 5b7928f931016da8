"""Batch command line front end.

Subcommands tie the library modules into reproducible experiments:

    constants         closed-form constant table as JSON
    green             Green function / regular part probe as JSON
    verify-expansion  energy expansion vs quadrature over a rate ladder (CSV)
    flow              integrate one reduced flow (trace CSV + terminal JSON)
    flow-batch        cone-sample intersection count (summary JSON)
    enumerate-cpi     critical-points-at-infinity table + assumption report
    check-assumptions assumption report alone
    decompose         fit bubbles to a gridded function file

Configuration is flat ``key = value`` text (``#`` comments); every key is
also available as a ``--key-name`` flag, and flags override the file.  Each
run writes the fully resolved config (``resolved.cfg``), its outputs, and a
``manifest.json`` carrying content hashes of everything written.  Outputs
contain no timestamps, so re-running a resolved config reproduces every
file byte for byte.  The default output directory is taken from the
``BIFLOW_OUT`` environment variable when ``--out`` is not given.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.  On a
numerical failure partial outputs are kept and a ``FAILURE`` marker file
with the error text is written beside them.
"""

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import constants as cn
from . import green as gr
from .numerics import QuadratureSpec, OdeSpec, check_dim
from .projection import Bubble, Configuration, GriddedFunction, decompose
from .energy import energy_report, normalized_alphas
from .morse import (CATALOGUE, catalogued_k, find_critical_points,
                    enumerate_cpi_single, enumerate_cpi_pairs,
                    check_assumptions)
from .flow import (FlowConstants, FlowState, integrate_flow,
                   estimate_intersection_number)


class CliError(Exception):
    """Invalid configuration or arguments (exit code 2)."""


# ---------------------------------------------------------------------------
# typed flat config
# ---------------------------------------------------------------------------

def _conv_int(s):
    return int(s)


def _conv_float(s):
    return float(s)


def _conv_str(s):
    return str(s)


def _conv_floats(s):
    parts = [p for p in str(s).replace(";", ",").split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _conv_vec(s):
    return np.array(_conv_floats(s), float)


def _fmt_default(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, np.ndarray):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


class Key:
    def __init__(self, conv, default=None, required=False, help=""):
        self.conv = conv
        self.default = default
        self.required = required
        self.help = help


_QUAD_KEYS = {
    "quad_n_radial": Key(_conv_int, 120, help="radial nodes per pairing"),
    "quad_n_angular": Key(_conv_int, 64, help="angular nodes per pairing"),
    "quad_n_sphere": Key(_conv_int, 4096, help="directions, black-box path"),
    "quad_rel_tol": Key(_conv_float, 1e-7, help="adaptive relative tolerance"),
    "seed": Key(_conv_int, 0, help="seed for randomized quadrature paths"),
}

_ODE_KEYS = {
    "ode_initial_step": Key(_conv_float, 1e-3),
    "ode_rtol": Key(_conv_float, 1e-8),
    "ode_atol": Key(_conv_float, 1e-10),
    "ode_max_steps": Key(_conv_int, 200_000),
}

_FIELD_KEYS = {
    "k_field": Key(_conv_str, required=True,
                   help="catalogue name: " + ", ".join(CATALOGUE)),
    "width": Key(_conv_float, help="bump width for fields that take one"),
}

SCHEMAS = {
    "constants": {"dim": Key(_conv_int, required=True)},
    "green": {
        "dim": Key(_conv_int, required=True),
        "probe": Key(_conv_str, required=True,
                     help="two interior points 'x1,..,xn:y1,..,yn'"),
        "method": Key(_conv_str, "series", help="series | quadrature"),
        **_QUAD_KEYS,
    },
    "verify-expansion": {
        "dim": Key(_conv_int, required=True),
        **_FIELD_KEYS,
        "lambda_ladder": Key(_conv_floats, (25.0, 50.0, 100.0, 200.0)),
        "center": Key(_conv_vec, help="bubble center; default: global max"),
        **_QUAD_KEYS,
    },
    "flow": {
        "dim": Key(_conv_int, required=True),
        **_FIELD_KEYS,
        "init": Key(_conv_str, required=True, help="initial state file"),
        "constants": Key(_conv_str, help="flow constants file"),
        "t_max": Key(_conv_float, help="time budget override"),
        "j_mode": Key(_conv_str, "asymptotic", help="asymptotic | exact"),
        **_ODE_KEYS,
    },
    "flow-batch": {
        "dim": Key(_conv_int, required=True),
        **_FIELD_KEYS,
        "constants": Key(_conv_str, help="flow constants file"),
        "target": Key(_conv_vec, required=True),
        "y0": Key(_conv_vec, required=True),
        "samples": Key(_conv_str, required=True,
                       help="cone points 'x1,..,xn;x1,..,xn;...'"),
        "alphas": Key(_conv_floats, (0.25, 0.5, 0.75)),
        "lam0": Key(_conv_float, 40.0),
        "t_max": Key(_conv_float),
        **_ODE_KEYS,
    },
    "enumerate-cpi": {"dim": Key(_conv_int, required=True), **_FIELD_KEYS},
    "check-assumptions": {"dim": Key(_conv_int, required=True), **_FIELD_KEYS},
    "decompose": {
        "grid": Key(_conv_str, required=True, help=".npz gridded function"),
        "count": Key(_conv_int, required=True, help="number of bubbles"),
        "mode": Key(_conv_str, "exact", help="exact | asymptotic"),
        **_QUAD_KEYS,
    },
}


def _parse_kv(text, origin):
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{origin}:{ln}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _resolve(command, args):
    """Defaults, then config file, then flags; returns typed dict."""
    schema = SCHEMAS[command]
    values = {k: spec.default for k, spec in schema.items()}
    if args.config:
        if not os.path.isfile(args.config):
            raise CliError(f"config file not found: {args.config}")
        with open(args.config) as f:
            raw = _parse_kv(f.read(), args.config)
        # resolved.cfg files are self-describing and re-runnable
        recorded = raw.pop("command", command)
        if recorded != command:
            raise CliError(f"{args.config} was written by "
                           f"{recorded!r}, not {command!r}")
        for k, v in raw.items():
            if k not in schema:
                raise CliError(f"{args.config}: unknown key {k!r} for "
                               f"{command} (valid: {', '.join(sorted(schema))})")
            values[k] = _convert(schema, k, v, args.config)
    for k in schema:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = _convert(schema, k, v, "flag --" + k.replace("_", "-"))
    missing = [k for k, spec in schema.items()
               if spec.required and values[k] is None]
    if missing:
        raise CliError(f"missing required keys for {command}: "
                       + ", ".join(sorted(missing)))
    return values


def _convert(schema, key, raw, origin):
    try:
        return schema[key].conv(raw)
    except (ValueError, TypeError) as e:
        raise CliError(f"{origin}: bad value for {key!r}: {e}") from None


def _canonical_text(command, values):
    lines = [f"command = {command}"]
    for k in sorted(values):
        if values[k] is None:
            continue
        lines.append(f"{k} = {_fmt_default(values[k])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output sink with manifest
# ---------------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2,
                      default=_json_default) + "\n"


class OutputSink:
    """Collects written files and finishes with a hash manifest."""

    def __init__(self, outdir):
        self.outdir = outdir
        self.hashes = {}
        if outdir:
            os.makedirs(outdir, exist_ok=True)

    def write_text(self, name, text):
        if self.outdir is None:
            return
        data = text.encode()
        with open(os.path.join(self.outdir, name), "wb") as f:
            f.write(data)
        self.hashes[name] = hashlib.sha256(data).hexdigest()

    def write_json(self, name, obj):
        self.write_text(name, _dumps(obj))

    def finish(self, command, resolved):
        if self.outdir is None:
            return
        self.write_text("resolved.cfg", resolved)
        manifest = {
            "command": command,
            "config_sha256": hashlib.sha256(resolved.encode()).hexdigest(),
            "package": f"biflow {__version__}",
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": np.__version__,
            "outputs": dict(sorted(self.hashes.items())),
        }
        with open(os.path.join(self.outdir, "manifest.json"), "w") as f:
            f.write(_dumps(manifest))

    def mark_failure(self, message):
        if self.outdir:
            with open(os.path.join(self.outdir, "FAILURE"), "w") as f:
                f.write(message + "\n")


# ---------------------------------------------------------------------------
# shared builders and serializers
# ---------------------------------------------------------------------------

def _quad_spec(v):
    return QuadratureSpec(n_radial=v["quad_n_radial"],
                          n_angular=v["quad_n_angular"],
                          n_sphere=v["quad_n_sphere"],
                          rel_tol=v["quad_rel_tol"], seed=v["seed"])


def _ode_spec(v):
    return OdeSpec(initial_step=v["ode_initial_step"], rtol=v["ode_rtol"],
                   atol=v["ode_atol"], max_steps=v["ode_max_steps"])


def _field(v):
    try:
        return catalogued_k(v["k_field"], v["dim"], width=v.get("width"))
    except KeyError:
        raise CliError(f"unknown K-field {v['k_field']!r}; catalogue: "
                       + ", ".join(CATALOGUE)) from None
    except ValueError as e:
        raise CliError(str(e)) from None


def _check_dim(v, flow=False):
    try:
        check_dim(v["dim"])
    except ValueError as e:
        raise CliError(str(e)) from None
    if flow and v["dim"] < 7:
        raise CliError("flow subcommands need dim >= 7; the two-rate sign "
                       "analysis behind the vector field starts there")


def _flow_constants(path):
    if path is None:
        return FlowConstants()
    if not os.path.isfile(path):
        raise CliError(f"constants file not found: {path}")
    with open(path) as f:
        raw = _parse_kv(f.read(), path)
    names = {f.name for f in dataclasses.fields(FlowConstants)}
    bad = set(raw) - names
    if bad:
        raise CliError(f"{path}: unknown flow constants {sorted(bad)}; "
                       f"valid: {sorted(names)}")
    try:
        return FlowConstants(**{k: float(x) for k, x in raw.items()})
    except ValueError as e:
        raise CliError(f"{path}: {e}") from None


def _flow_init(path, n):
    if not os.path.isfile(path):
        raise CliError(f"init file not found: {path}")
    with open(path) as f:
        raw = _parse_kv(f.read(), path)
    try:
        p = int(raw.pop("p", 1))
    except ValueError:
        raise CliError(f"{path}: p must be 1 or 2") from None
    if p not in (1, 2):
        raise CliError(f"{path}: p must be 1 or 2, got {p}")
    a, lam, alpha = [], [], []
    for i in range(1, p + 1):
        for key in (f"a{i}", f"lam{i}"):
            if key not in raw:
                raise CliError(f"{path}: missing key {key!r}")
        a.append(_conv_vec(raw.pop(f"a{i}")))
        lam.append(float(raw.pop(f"lam{i}")))
        if f"alpha{i}" in raw:
            alpha.append(float(raw.pop(f"alpha{i}")))
    if raw:
        raise CliError(f"{path}: unknown keys {sorted(raw)}")
    if alpha and len(alpha) != p:
        raise CliError(f"{path}: give alpha_i for every point or none")
    for ai in a:
        if ai.size != n:
            raise CliError(f"{path}: centers must have {n} coordinates")
        if np.linalg.norm(ai) >= 1.0:
            raise CliError(f"{path}: centers must lie inside the unit ball")
    if min(lam) <= 0:
        raise CliError(f"{path}: rates must be positive")
    return FlowState(n, np.array(a), np.array(lam),
                     alpha_raw=np.array(alpha) if alpha else None)


def _crit_json(c):
    return {"y": c.y.tolist(), "k_value": c.k_value,
            "laplacian_k": c.laplacian_k, "morse_index": c.morse_index,
            "degenerate": c.degenerate}


def _cpi_json(r):
    return {"kind": r.kind, "member": r.member, "level": r.level,
            "index_at_infinity": r.index_at_infinity,
            "condition_values": list(r.condition_values),
            "points": [_crit_json(c) for c in r.points]}


def _assumptions_json(rep):
    return {"field": rep.field_name, "dim": rep.n,
            "critical_points": [_crit_json(c) for c in rep.critical_points],
            "a0_inward": rep.a0_inward,
            "a0_max_normal_derivative": rep.a0_max_normal_derivative,
            "a1_nondegenerate": rep.a1_nondegenerate,
            "a1_distinct_values": rep.a1_distinct_values,
            "a2_split_index": rep.a2_split_index,
            "a2_holds": rep.a2_holds,
            "a5_connections": [list(c) for c in rep.a5_connections],
            "a5_holds": rep.a5_holds,
            "a7_by_class": {str(k): bool(b) for k, b in rep.a7_by_class.items()},
            "notes": rep.notes}


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_constants(v, sink):
    _check_dim(v)
    cs = cn.constant_set(v["dim"])
    obj = dataclasses.asdict(cs)
    obj["c2_over_c3"] = cs.c2 / cs.c3
    out = _dumps(obj)
    sys.stdout.write(out)
    sink.write_text("constants.json", out)
    return 0


def cmd_green(v, sink):
    _check_dim(v)
    n = v["dim"]
    try:
        xs, ys = v["probe"].split(":")
        x, y = _conv_vec(xs), _conv_vec(ys)
    except ValueError:
        raise CliError("probe must be 'x1,..,xn:y1,..,yn'") from None
    if x.size != n or y.size != n:
        raise CliError(f"probe points must have {n} coordinates")
    if max(np.linalg.norm(x), np.linalg.norm(y)) >= 1.0:
        raise CliError("probe points must be interior")
    if np.linalg.norm(x - y) < 1e-9:
        raise CliError("probe points must be distinct")
    if v["method"] not in ("series", "quadrature"):
        raise CliError("method must be series or quadrature")
    g = gr.green_navier(x, y, n, method=v["method"])
    h = (float(np.linalg.norm(x - y)) ** (4 - n)) - g
    obj = {"dim": n, "x": x.tolist(), "y": y.tolist(), "g": g, "h": h,
           "grad_h_x": gr.grad_H(x, y, n).tolist(), "method": v["method"]}
    out = _dumps(obj)
    sys.stdout.write(out)
    sink.write_text("green.json", out)
    return 0


def cmd_verify_expansion(v, sink):
    _check_dim(v)
    n = v["dim"]
    K = _field(v)
    spec = _quad_spec(v)
    if v["center"] is not None:
        a = v["center"]
        if a.size != n or np.linalg.norm(a) >= 1.0:
            raise CliError(f"center must be interior with {n} coordinates")
    else:
        crits = find_critical_points(K)
        a = max(crits, key=lambda c: c.k_value).y
    ladder = sorted(v["lambda_ladder"])
    if len(ladder) < 2:
        raise CliError("lambda_ladder needs at least two rungs")
    rows, gaps = [], []
    for lam in ladder:
        b = Bubble(n, a, lam)
        cfg0 = Configuration([b], np.array([1.0]), mode="exact")
        cfg = Configuration([b], normalized_alphas(cfg0, spec), mode="exact")
        rep = energy_report(cfg, K, spec)
        gaps.append(float(rep.j_gap_rel))
        rows.append((float(lam), float(rep.j_quadrature),
                     float(rep.j_expansion), float(rep.j_gap_rel)))
    lines = ["lambda,j_quad,j_exp,gap_rel,order_estimate"]
    for i, (lam, jq, je, gap) in enumerate(rows):
        order = ""
        if i > 0 and gaps[i] > 0 and gaps[i - 1] > 0:
            order = repr(math.log(gaps[i] / gaps[i - 1])
                         / math.log(lam / rows[i - 1][0]))
        lines.append(f"{lam!r},{jq!r},{je!r},{gap!r},{order}")
    sink.write_text("ladder.csv", "\n".join(lines) + "\n")
    lx, ly = np.log(ladder), np.log(gaps)
    slope = float(np.polyfit(lx, ly, 1)[0])
    summary = {"dim": n, "k_field": K.name, "center": a.tolist(),
               "lambdas": list(ladder), "gaps": gaps, "log_log_slope": slope,
               "gap_monotone_decreasing":
                   all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))}
    sink.write_json("summary.json", summary)
    print(f"ladder of {len(ladder)} rungs: gap slope {slope:.3f}")
    return 0


def _trace_csv(trace):
    n, p = trace.n, trace.p
    cols = ["time"]
    for i in range(p):
        cols += [f"a{i + 1}_{j + 1}" for j in range(n)] + [f"lam{i + 1}"]
    cols += ["j", "regime"] + [f"d{i + 1}" for i in range(p)]
    if p == 2:
        cols.append("eps12")
    lines = [",".join(cols)]
    for t, st, jv, rg in zip(trace.times, trace.states, trace.j_values,
                             trace.regimes):
        row = [repr(float(t))]
        for i in range(p):
            row += [repr(float(x)) for x in st.a[i]]
            row.append(repr(float(st.lam[i])))
        row += [repr(float(jv)), rg]
        row += [repr(float(d)) for d in st.d()]
        if p == 2:
            row.append(repr(float(st.eps12())))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_flow(v, sink):
    _check_dim(v, flow=True)
    K = _field(v)
    consts = _flow_constants(v["constants"])
    init = _flow_init(v["init"], v["dim"])
    if v["j_mode"] not in ("asymptotic", "exact"):
        raise CliError("j_mode must be asymptotic or exact")
    trace = integrate_flow(init, K, spec=_ode_spec(v), consts=consts,
                           t_max=v["t_max"], j_mode=v["j_mode"])
    sink.write_text("trace.csv", _trace_csv(trace))
    last = trace.final_state()
    terminal = {
        "terminal": trace.terminal,
        "t_end": float(trace.times[-1]),
        "n_steps": len(trace.states),
        "nfev": trace.nfev,
        "j_final": float(trace.j_values[-1]),
        "energy_monotone": trace.energy_monotone,
        "max_energy_uptick": trace.max_energy_uptick,
        "lambda_increase_audit": trace.lambda_increase_audit(K, consts),
        "state": {"a": last.a.tolist(), "lam": last.lam.tolist(),
                  "alphas": last.alphas(K).tolist(),
                  "d": last.d().tolist(), "eps12": last.eps12()},
        "membership_margin": last.membership_margin(K, consts),
        "events": [[float(t), desc] for t, desc in trace.events],
        "cpi": _cpi_json(trace.cpi) if trace.cpi is not None else None,
    }
    sink.write_json("terminal.json", terminal)
    print(f"flow: {trace.terminal} after {len(trace.states)} steps, "
          f"J = {trace.j_values[-1]:.6g}")
    return 0


def cmd_flow_batch(v, sink):
    _check_dim(v, flow=True)
    n = v["dim"]
    K = _field(v)
    consts = _flow_constants(v["constants"])
    for key in ("target", "y0"):
        if v[key].size != n:
            raise CliError(f"{key} must have {n} coordinates")
    samples = []
    for part in v["samples"].split(";"):
        x = _conv_vec(part)
        if x.size != n:
            raise CliError(f"samples entries must have {n} coordinates")
        samples.append(x)
    est = estimate_intersection_number(
        v["target"], v["y0"], samples, K, alphas=v["alphas"], lam0=v["lam0"],
        spec=_ode_spec(v), consts=consts, t_max=v["t_max"])
    lines = ["alpha,classification,x"]
    for al, x, label in est.details:
        lines.append(f"{float(al)!r},{label},"
                     + ";".join(repr(float(c)) for c in x))
    sink.write_text("samples.csv", "\n".join(lines) + "\n")
    summary = {"dim": n, "k_field": K.name, "target": est.target.tolist(),
               "y0": v["y0"].tolist(), "count": est.count,
               "parity": est.parity, "n_samples": est.n_samples,
               "n_pair_flows": est.n_pair_flows, "n_single": est.n_single,
               "n_unresolved": est.n_unresolved, "heuristic": est.heuristic}
    sink.write_json("summary.json", summary)
    print(f"flow-batch: count {est.count} (parity {est.parity}) from "
          f"{est.n_samples} samples, {est.n_unresolved} unresolved")
    return 0


def cmd_enumerate_cpi(v, sink):
    _check_dim(v)
    K = _field(v)
    crits = find_critical_points(K)
    obj = {"dim": v["dim"], "k_field": K.name,
           "singles": [_cpi_json(r) for r in enumerate_cpi_single(K, crits)],
           "pairs": [_cpi_json(r) for r in enumerate_cpi_pairs(K, crits)],
           "assumptions": _assumptions_json(check_assumptions(K))}
    out = _dumps(obj)
    sys.stdout.write(out)
    sink.write_text("cpi.json", out)
    return 0


def cmd_check_assumptions(v, sink):
    _check_dim(v)
    K = _field(v)
    out = _dumps(_assumptions_json(check_assumptions(K)))
    sys.stdout.write(out)
    sink.write_text("assumptions.json", out)
    return 0


def cmd_decompose(v, sink):
    if not os.path.isfile(v["grid"]):
        raise CliError(f"grid file not found: {v['grid']}")
    if v["count"] < 1:
        raise CliError("count must be >= 1")
    if v["mode"] not in ("exact", "asymptotic"):
        raise CliError("mode must be exact or asymptotic")
    grid = GriddedFunction.load(v["grid"])
    res = decompose(grid, v["count"], spec=_quad_spec(v), mode=v["mode"])
    obj = {"dim": grid.dim, "count": v["count"],
           "bubbles": [{"a": b.a.tolist(), "lam": b.lam}
                       for b in res.config.bubbles],
           "alphas": res.config.alphas.tolist(),
           "residual_norm": res.residual_norm,
           "relative_residual": res.relative_residual,
           "converged": res.converged, "n_iterations": res.n_iterations}
    sink.write_json("decompose.json", obj)
    print(f"decompose: relative residual {res.relative_residual:.3e} "
          f"({'converged' if res.converged else 'not converged'})")
    return 0


HANDLERS = {
    "constants": cmd_constants,
    "green": cmd_green,
    "verify-expansion": cmd_verify_expansion,
    "flow": cmd_flow,
    "flow-batch": cmd_flow_batch,
    "enumerate-cpi": cmd_enumerate_cpi,
    "check-assumptions": cmd_check_assumptions,
    "decompose": cmd_decompose,
}

# commands whose outputs are files, not stdout JSON
_NEEDS_OUTDIR = {"verify-expansion", "flow", "flow-batch", "decompose"}


def _build_parser():
    top = argparse.ArgumentParser(
        prog="biflow",
        description="reduced-flow toolkit for a fourth-order critical "
                    "problem on the unit ball")
    sub = top.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory "
                                     "(default: $BIFLOW_OUT)")
        for key, spec in schema.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key,
                           default=None, metavar="V", help=spec.help or None)
    return top


def main(argv=None):
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        values = _resolve(command, args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    outdir = args.out or os.environ.get("BIFLOW_OUT") or None
    sink = OutputSink(outdir)
    try:
        if outdir is None and command in _NEEDS_OUTDIR:
            raise CliError(f"{command} writes files; give --out or set "
                           "BIFLOW_OUT")
        code = HANDLERS[command](values, sink)
        sink.finish(command, _canonical_text(command, values))
        return code
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - boundary of the process
        message = f"{type(e).__name__}: {e}"
        sink.mark_failure(message)
        print(f"numerical failure: {message}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
