"""Command-line runner: YAML config in, CSV or JSON tables out.

Exit status is 0 on success, 2 when the config or the inputs are invalid and
3 when a computation fails numerically (a JSON diagnostic goes to stderr).
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import copy
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
import sys

import jsonschema
import numpy as np
import yaml

from . import critical_layer, dispersion, mode_search, semicircle
from .errors import CircstabError, InvalidInput, NumericalFailure
from .profiles import ProblemSetup, from_dict
from .rayleigh_bvp import ATOL, RTOL, Mode

log = logging.getLogger("circstab")

SCHEMA_VERSION = 1
COLUMNS = ("schema_version", "command", "k", "re_c", "im_c", "residual", "count",
           "m", "M", "condition", "notes")
COMMANDS = ("solve-mode", "find-modes", "semicircle", "verify-oracles",
            "critical-layer", "epsilon-scaling", "sweep")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

_number = {"type": "number"}
_pair = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_profile = {"type": "object", "required": ["kind"],
            "additionalProperties": {"type": ["number", "array"]},
            "properties": {"kind": {"enum": ["constant", "taylor_couette", "piecewise_outer",
                                             "tabulated", "tanh_shear"]}}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "setup": {
            "type": "object",
            "additionalProperties": False,
            "required": ["rho_plus", "rho_minus", "alpha", "r_in", "r_out",
                         "profile_plus", "profile_minus"],
            "properties": {
                "rho_plus": _number, "rho_minus": _number, "alpha": _number,
                "r_in": _number,
                "r_out": {"anyOf": [_number, {"enum": ["inf"]}]},
                "profile_plus": _profile, "profile_minus": _profile,
            },
        },
        "k": {"anyOf": [{"type": "integer"},
                        {"type": "array", "items": {"type": "integer"}}]},
        "k_range": {"type": "array", "items": {"type": "integer"}, "minItems": 2,
                    "maxItems": 2},
        "region": {"type": "object", "additionalProperties": False,
                   "required": ["re", "im"], "properties": {"re": _pair, "im": _pair}},
        "mode": {"type": "object", "additionalProperties": False, "required": ["re", "im"],
                 "properties": {"re": _number, "im": _number}},
        "branch": {"enum": [1, -1]},
        "epsilon": _number,
        "oracle_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "lipschitz": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k", "alpha", "B", "omega_star", "b", "eps_ladder"],
            "properties": {"k": {"type": "integer"}, "alpha": _number, "B": _number,
                           "rho_plus": _number, "omega_star": _number, "b": _number,
                           "s_star": _number,
                           "eps_ladder": {"type": "array", "items": _number}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axes"],
            "properties": {"axes": {"type": "object",
                                    "additionalProperties": {"type": "array"}},
                           "identities": {"type": "boolean"}},
        },
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {"eta_floor": {"type": "number", "exclusiveMinimum": 0}}},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"path": {"type": "string"},
                                  "format": {"enum": ["csv", "json"]}}},
    },
}


def _loose(schema):
    """Copy of ``schema`` that tolerates unknown keys."""
    out = copy.deepcopy(schema)

    def walk(node):
        if isinstance(node, dict):
            if node.get("additionalProperties") is False:
                node.pop("additionalProperties")
            for v in node.values():
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)

    walk(out)
    return out


def _prune(cfg, schema):
    """Drop keys the schema does not know, warning about each."""
    props = schema.get("properties")
    if not isinstance(cfg, dict) or props is None:
        return cfg
    out = {}
    for key, val in cfg.items():
        if key in props:
            out[key] = _prune(val, props[key])
        elif isinstance(schema.get("additionalProperties"), dict):
            out[key] = val
        else:
            log.warning("ignoring unknown config key %r", key)
    return out


def validate(cfg, strict=True):
    try:
        jsonschema.validate(cfg, SCHEMA if strict else _loose(SCHEMA))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise InvalidInput(f"config invalid at '{path}': {exc.message}") from None
    return cfg if strict else _prune(cfg, SCHEMA)


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def build_setup(data):
    r_out = data["r_out"]
    r_out = math.inf if r_out == "inf" else float(r_out)
    return ProblemSetup(rho_plus=float(data["rho_plus"]), rho_minus=float(data["rho_minus"]),
                        alpha=float(data["alpha"]), r_in=float(data["r_in"]), r_out=r_out,
                        profile_plus=from_dict(data["profile_plus"]),
                        profile_minus=from_dict(data["profile_minus"]))


def wave_numbers(cfg):
    if "k_range" in cfg:
        lo, hi = cfg["k_range"]
        ks = list(range(lo, hi + 1))
    elif "k" in cfg:
        ks = cfg["k"] if isinstance(cfg["k"], list) else [cfg["k"]]
    else:
        raise InvalidInput("config needs 'k' or 'k_range'")
    if any(k == 0 for k in ks):
        raise InvalidInput("k must be nonzero")
    return ks


def _need(cfg, key):
    if key not in cfg:
        raise InvalidInput(f"command '{cfg['command']}' needs '{key}'")
    return cfg[key]


def _row(command, **kw):
    row = dict.fromkeys(COLUMNS, "")
    row.update(schema_version=SCHEMA_VERSION, command=command)
    row.update(kw)
    return row


def _eta(cfg):
    return cfg.get("tolerances", {}).get("eta_floor", mode_search.ETA_FLOOR)


def _region(cfg, setup, k):
    eta = _eta(cfg)
    if "region" in cfg:
        r = cfg["region"]
        return mode_search.SearchRegion(tuple(r["re"]), tuple(r["im"]), "UserSpecified", eta)
    return mode_search.SearchRegion.semicircle(setup, k, eta_floor=eta)


# -- commands -------------------------------------------------------------------

def cmd_solve_mode(cfg):
    setup = build_setup(_need(cfg, "setup"))
    m = _need(cfg, "mode")
    rows = []
    for k in wave_numbers(cfg):
        res = dispersion.residual(setup, Mode(k, complex(m["re"], m["im"])))
        rows.append(_row("solve-mode", k=k, re_c=m["re"], im_c=m["im"],
                         residual=abs(res.value),
                         notes=f"accepted={res.accepted};zeta_plus={res.zeta_prime_plus!r};"
                               f"zeta_minus={res.zeta_prime_minus!r}"))
    return rows


def cmd_find_modes(cfg):
    setup = build_setup(_need(cfg, "setup"))
    rows = []
    for k in wave_numbers(cfg):
        cat = mode_search.find_modes(setup, k, _region(cfg, setup, k))
        if not cat.roots:
            rows.append(_row("find-modes", k=k, count=cat.counted, notes="no roots"))
        for r in cat.roots:
            d = r.identity_defects
            note = f"multiplicity={r.multiplicity};newton={r.newton_iterations}"
            if d is not None:
                note += f";identity_im={d.imaginary:.3e};identity_re={d.real:.3e}"
            rows.append(_row("find-modes", k=k, re_c=r.c.real, im_c=r.c.imag,
                             residual=r.abs_residual, count=cat.counted, notes=note))
    return rows


def cmd_semicircle(cfg):
    setup = build_setup(_need(cfg, "setup"))
    rows = []
    for k in wave_numbers(cfg):
        rep = semicircle.bound(setup, k)
        rows.append(_row("semicircle", k=k, m=rep.m, M=rep.M, condition=rep.condition_strict,
                         notes=f"center={rep.center!r};radius={rep.radius!r}"))
    return rows


ORACLE_DRAWS = {
    "ConstantVortex": lambda g: {},
    "CapillaryConstant": lambda g: {"alpha": g.uniform(0.1, 2), "B": g.uniform(-2, 2)},
    "TCWaterWave": lambda g: {"alpha": g.uniform(0.1, 2), "A": g.uniform(-0.5, 0.5),
                              "B": g.uniform(-1, 1), "r_in": g.uniform(0.1, 0.8)},
    "TwoPhaseTC": lambda g: {"alpha": g.uniform(0.1, 2), "A": g.uniform(-0.5, 0.5),
                             "B": g.uniform(-1, 1), "a": g.uniform(-0.5, 0.5),
                             "b": g.uniform(-1, 1), "r_in": g.uniform(0.1, 0.8),
                             "r_out": g.uniform(1.5, 4), "epsilon": g.uniform(0, 0.5)},
}


def oracle_deviation(case, params, c):
    """Relative gap between the shooting residual and the scaled closed form."""
    setup = dispersion.oracle_setup(case, params)
    d, _, _ = dispersion.residual_values(setup, params["k"], np.array([c]))
    ref = dispersion.oracle_scale(case, params) * dispersion.oracle_dispersion(case, params, c)
    return abs(d[0] - ref) / max(dispersion.acceptance_scale(setup, params["k"]), abs(ref))


def cmd_verify_oracles(cfg):
    n = cfg.get("oracle_samples", 20)
    gen = np.random.default_rng(cfg.get("seed", 0))
    rows = []
    for case, draw in ORACLE_DRAWS.items():
        worst = 0.0
        for _ in range(n):
            p = draw(gen)
            p["k"] = int(gen.integers(2, 9))
            c = complex(gen.uniform(-2, 2), gen.uniform(0.05, 2))
            worst = max(worst, oracle_deviation(case, p, c))
        rows.append(_row("verify-oracles", residual=worst, count=n,
                         notes=f"case={case};ok={worst <= 1e-8}"))
    return rows


def cmd_critical_layer(cfg):
    setup = build_setup(_need(cfg, "setup"))
    branch = cfg.get("branch", 1)
    rows = []
    for k in wave_numbers(cfg):
        pred = critical_layer.predict_bifurcation(setup, k, branch)
        sol = critical_layer.solve_unstable_mode(setup, k, branch, cfg.get("epsilon"),
                                                 prediction=pred)
        rows.append(_row("critical-layer", k=k, re_c=sol.c_final.real, im_c=sol.c_final.imag,
                         residual=max(sol.lambda_residuals),
                         notes=f"c_k={pred.c_k!r};c_sharp={pred.c_sharp!r};"
                               f"epsilon={sol.epsilon!r};nu1={sol.nu1!r};nu2={sol.nu2!r}"))
    return rows


def cmd_epsilon_scaling(cfg):
    p = dict(_need(cfg, "lipschitz"))
    ladder = p.pop("eps_ladder")
    st = critical_layer.epsilon_scaling_study(p, ladder)
    extra = {"slope": st.slope, "lambda_plus": st.lambda_plus, "s_star": st.s_star,
             "real_slope": st.real_slope, "separation": st.separation,
             "epsilons": list(st.epsilons), "lambda_I": list(st.lambda_I),
             "lambda_R": list(st.lambda_R)}
    row = _row("epsilon-scaling", k=p["k"], re_c=st.lambda_R[0], im_c=st.lambda_I[0],
               count=len(st.epsilons),
               notes=f"slope={st.slope!r};lambda_plus={st.lambda_plus!r};"
                     f"separation={st.separation!r}")
    return [row], extra


# -- sweep ------------------------------------------------------------------------

SETUP_KEYS = ("rho_plus", "rho_minus", "alpha", "r_in", "r_out")


def _apply_axis(cfg, key, value):
    setup = cfg["setup"]
    if key == "k":
        cfg["k"] = int(value)
    elif key == "epsilon":
        setup["rho_minus"] = float(value) * setup["rho_plus"]
    elif key in SETUP_KEYS:
        setup[key] = value
    elif key in ("A", "B"):
        setup["profile_plus"][key] = value
    elif key.startswith(("profile_plus.", "profile_minus.")):
        side, name = key.split(".", 1)
        setup[side][name] = value
    else:
        raise InvalidInput(f"unknown sweep axis {key!r}")


def _sweep_point(cfg, names, values, identities):
    point = copy.deepcopy(cfg)
    out = dict(zip(names, values))
    try:
        for key, val in zip(names, values):
            _apply_axis(point, key, val)
        setup = build_setup(point["setup"])
        count, top, bounds = 0, None, []
        for k in wave_numbers(point):
            rep = semicircle.bound(setup, k)
            bounds.append(rep)
            cat = mode_search.find_modes(setup, k, _region(point, setup, k),
                                         verify_identities=identities)
            count += cat.counted
            for r in cat.roots:
                if top is None or r.c.imag > top.imag:
                    top = r.c
        rep = bounds[0]
        out.update(count=count, re_c=top.real if top is not None else "",
                   im_c=top.imag if top is not None else "", m=rep.m, M=rep.M,
                   condition=all(b.condition_strict for b in bounds), error="")
    except CircstabError as exc:
        out.update(count="", re_c="", im_c="", m="", M="", condition="",
                   error=f"{type(exc).__name__}: {exc}")
    return out


def cmd_sweep(cfg, threads=1):
    _need(cfg, "setup")
    sweep_cfg = _need(cfg, "sweep")
    axes = sweep_cfg["axes"]
    names = sorted(axes)
    grid = list(itertools.product(*(axes[n] for n in names))) if names else []
    if any(len(axes[n]) == 0 for n in names):
        grid = []
    identities = sweep_cfg.get("identities", False)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda v: _sweep_point(cfg, names, v, identities), grid))
    results.sort(key=lambda r: tuple(r[n] for n in names))
    rows = []
    for r in results:
        note = ";".join(f"{n}={r[n]!r}" for n in names)
        rows.append(_row("sweep", k="", re_c=r["re_c"], im_c=r["im_c"], count=r["count"],
                         m=r["m"], M=r["M"], condition=r["condition"], notes=note,
                         error=r["error"], **{n: r[n] for n in names}))
    return rows, {"axes": names}


HANDLERS = {
    "solve-mode": cmd_solve_mode,
    "find-modes": cmd_find_modes,
    "semicircle": cmd_semicircle,
    "verify-oracles": cmd_verify_oracles,
    "critical-layer": cmd_critical_layer,
    "epsilon-scaling": cmd_epsilon_scaling,
}


# -- output -------------------------------------------------------------------------

def tolerance_set(cfg):
    return {"rtol": RTOL, "atol": ATOL, "accept_rel": dispersion.ACCEPT_REL,
            "eta_floor": _eta(cfg), "lambda_accept": critical_layer.ACCEPT}


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(command, rows, cfg, fmt, extra=None):
    digest = config_hash(cfg)
    tol = tolerance_set(cfg)
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "command": command, "config_hash": digest,
               "tolerances": tol, "rows": rows}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    columns = list(COLUMNS)
    if command == "sweep":
        columns += (extra or {}).get("axes", []) + ["error"]
    buf = io.StringIO()
    buf.write(f"# config_hash={digest}\n")
    buf.write("# tolerances=" + json.dumps(tol, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def run(cfg, *, strict=True, threads=1, out=None, fmt=None):
    """Validate ``cfg``, execute its command and return (text, format)."""
    cfg = validate(cfg, strict)
    command = cfg.get("command")
    if command is None:
        raise InvalidInput("no command given")
    output = cfg.get("output", {})
    fmt = fmt or output.get("format", "csv")
    if command == "sweep":
        rows, extra = cmd_sweep(cfg, threads)
    else:
        result = HANDLERS[command](cfg)
        rows, extra = result if isinstance(result, tuple) else (result, None)
    text = render(command, rows, cfg, fmt, extra)
    path = out or output.get("path")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text, rows


def _parser():
    ap = argparse.ArgumentParser(prog="circstab",
                                 description="Stability of surface waves on circular two-phase flows.")
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--command", choices=COMMANDS, help="override the config's command")
    ap.add_argument("--out", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--strict", action="store_true", help="reject unknown config keys")
    return ap


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CIRCSTAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh) or {}
        if not isinstance(cfg, dict):
            raise InvalidInput("config must be a mapping")
        if args.command:
            cfg["command"] = args.command
        text, _ = run(cfg, strict=args.strict, threads=args.threads, out=args.out,
                      fmt=args.format)
    except (InvalidInput, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        diag = {"error": type(exc).__name__, "message": str(exc),
                "command": cfg.get("command")}
        print(json.dumps(diag, sort_keys=True), file=sys.stderr)
        return EXIT_NUMERICAL
    if not (args.out or cfg.get("output", {}).get("path")):
        sys.stdout.write(text)
    return EXIT_OK
