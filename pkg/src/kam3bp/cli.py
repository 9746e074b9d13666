"""Command-line entry point.

Subcommands mirror the modules: coords, average, bnf, domains, kam,
simulate, report.  Configuration comes from a versioned JSON document
(unknown fields are rejected - there are too many constants to let typos
pass silently); every output lands atomically (write to a temp file in the
target directory, then rename).  Exit codes: 0 success, 1 a numerical
assertion failed, 2 configuration error.
"""

import argparse
import csv
import json
import os
import sys
import tempfile

import numpy as np

CONFIG_SCHEMA = "kam3bp-config/1"
REPORT_SCHEMA = "kam3bp-report/1"


class ConfigError(ValueError):
    pass


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_csv(path, header, rows):
    import io

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _require_keys(block, known, path):
    unknown = sorted(set(block) - set(known))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown} in {path}")


def _masses_from(block, path="masses"):
    from .bodies import MassParams

    _require_keys(block, {"m0", "m1", "m2", "mu"}, path)
    try:
        return MassParams(**block)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    if cfg.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"schema: expected {CONFIG_SCHEMA!r}, got {cfg.get('schema')!r}")
    return cfg


def _outdir(args, cfg=None):
    if args.outdir:
        return args.outdir
    env = os.environ.get("KAM3BP_OUTDIR")
    if env:
        return env
    if cfg and cfg.get("outdir"):
        return cfg["outdir"]
    return "."


# ---------------------------------------------------------------- subcommands

def cmd_coords(args):
    from .charts import state_from_json_dict, to_cartesian, to_chart

    with open(args.input) as fh:
        doc = json.load(fh)
    _require_keys(doc, {"schema", "state", "masses"}, "coords input")
    masses = _masses_from(doc["masses"])
    state = state_from_json_dict(doc["state"])
    cart = to_cartesian(state, masses)
    out = to_chart(cart, args.to, masses)
    payload = {"schema": "kam3bp-state/1", "state": out.to_json_dict(),
               "masses": doc["masses"]}
    path = os.path.join(_outdir(args), args.output or f"state_{args.to}.json")
    write_json(path, payload)
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"wrote {path}")
    return 0


def cmd_average(args):
    from .averaging import QuadratureConfig, elliptic_equilibrium_check, hyperbolic_equilibrium_check

    cfg = load_config(args.config)
    block = cfg.get("average")
    if block is None:
        raise ConfigError("missing 'average' block")
    _require_keys(block, {"kind", "Lambda1", "Lambda2", "Gamma2", "G",
                          "masses", "N"}, "average")
    masses = _masses_from(block["masses"], "average.masses")
    qcfg = QuadratureConfig(N=block.get("N", 48))
    kind = block.get("kind", "elliptic")
    if kind == "elliptic":
        rep = elliptic_equilibrium_check(block["Lambda1"], block["Lambda2"], masses, qcfg)
    elif kind == "hyperbolic":
        rep = hyperbolic_equilibrium_check(block["Lambda1"], block["Lambda2"],
                                           block["Gamma2"], block["G"], masses, qcfg)
    else:
        raise ConfigError(f"average.kind: unknown kind {kind!r}")
    payload = {"schema": "kam3bp-equilibrium/1", **rep.to_json_dict()}
    path = os.path.join(_outdir(args, cfg), f"equilibrium_{kind}.json")
    write_json(path, payload)
    print(json.dumps(payload, sort_keys=True) if args.json else f"wrote {path}")
    return 0 if rep.classification in ("elliptic", "hyperbolic") else 1


def cmd_bnf(args):
    from .averaging import QuadratureConfig
    from .bnf import bnf_from_fav, make_fav_evaluator, remainder_scaling

    cfg = load_config(args.config)
    block = cfg.get("bnf")
    if block is None:
        raise ConfigError("missing 'bnf' block")
    _require_keys(block, {"Lambda1", "Lambda2", "masses", "s", "N", "radius",
                          "remainder_radii"}, "bnf")
    masses = _masses_from(block["masses"], "bnf.masses")
    qcfg = QuadratureConfig(N=block.get("N", 32))
    ev = make_fav_evaluator(block["Lambda1"], block["Lambda2"], masses, qcfg)
    res = bnf_from_fav(block["Lambda1"], block["Lambda2"], masses,
                       s=block.get("s", 4), cfg=qcfg,
                       radius=block.get("radius", 0.05), evaluator=ev)
    if block.get("remainder_radii"):
        res.remainder = remainder_scaling(res, block["remainder_radii"], ev)
    payload = {"schema": "kam3bp-bnf/1", **res.to_json_dict()}
    path = os.path.join(_outdir(args, cfg), "bnf.json")
    write_json(path, payload)
    print(json.dumps(payload, sort_keys=True) if args.json else f"wrote {path}")
    return 0


def _domain_spec(args):
    from .domains import DomainSpec, lambda_plus_of_G
    from .bodies import MassParams

    masses = MassParams(m0=1.0, m1=1.2, m2=0.1, mu=1e-3)
    try:
        return DomainSpec(G=args.G, Lambda_minus=0.5 * args.G,
                          Lambda_plus=lambda_plus_of_G(args.G),
                          alpha_minus=0.01, alpha_plus=args.alpha_plus,
                          c=args.c, c1=args.c1, eps=args.eps,
                          gamma_small=args.gamma, masses=masses)
    except ValueError as err:
        raise ConfigError(f"domains: {err}")


def cmd_domains(args):
    from .domains import emit_figure_data, measure_Astar, verify_inclusion_X

    spec = _domain_spec(args)
    out = _outdir(args)
    report = {"schema": "kam3bp-domains/1", "G": args.G, "eps": args.eps,
              "c1": args.c1, "gamma": args.gamma}
    status = 0
    if args.figure:
        rows = emit_figure_data(spec, args.figure)
        path = os.path.join(out, f"figure{args.figure}.csv")
        write_csv(path, ["x", "y", "series"], rows)
        report["figure_csv"] = path
    if args.check in ("inclusion", "all"):
        rep = verify_inclusion_X(spec, samples=args.samples, seed=args.seed)
        report["inclusion"] = rep
        status = max(status, 0 if rep["pass"] else 1)
    if args.check in ("measure", "all"):
        rep = measure_Astar(spec, samples=args.samples, seed=args.seed)
        report["measure"] = rep
        status = max(status, 0 if rep["chain_ok"] else 1)
    path = os.path.join(out, "domains_report.json")
    write_json(path, report)
    print(json.dumps(report, sort_keys=True) if args.json else f"wrote {path}")
    return status


def cmd_kam(args):
    from .kamrec import KamInput, check_conditions, run

    cfg = load_config(args.config)
    block = cfg.get("kam")
    if block is None:
        raise ConfigError("missing 'kam' block")
    known = {"n1", "n2", "tau", "gamma1", "gamma2", "s", "rho", "eps",
             "eps_bar", "M", "M_hat", "M_bar", "M_bar1", "M_bar2", "E",
             "lam", "c1"}
    _require_keys(block, known, "kam")
    try:
        inp = KamInput(**block)
    except (TypeError, ValueError) as err:
        # name the offending field when possible
        for key, val in block.items():
            if isinstance(val, (int, float)) and val <= 0 and key not in ("n1", "n2"):
                raise ConfigError(f"kam.{key}: must be positive (got {val})")
        raise ConfigError(f"kam: {err}")
    states, verdict = run(inp, args.steps, require_conditions=False)
    payload = {"schema": "kam3bp-kam/1",
               "conditions": verdict["conditions"],
               "pass": verdict["pass"],
               "failures": verdict["failures"],
               "steps": [st.as_dict() for st in states]}
    out = _outdir(args, cfg)
    write_json(os.path.join(out, "kam_run.json"), payload)
    write_csv(os.path.join(out, "kam_run.csv"),
              ["j", "K", "rho_hat", "E_hat", "lambda"],
              [[st.j, float(st.K), float(st.rho_hat), float(st.E_hat), float(st.lam)]
               for st in states])
    print(json.dumps({"pass": verdict["pass"]}) if args.json
          else f"wrote {out}/kam_run.json ({'pass' if verdict['pass'] else 'FAIL'})")
    return 0 if verdict["pass"] else 1


def cmd_simulate(args):
    from .charts import state_from_json_dict
    from .dynamics import IntegratorConfig, fast_frequencies, integrate

    cfg = load_config(args.config)
    block = cfg.get("simulate")
    if block is None:
        raise ConfigError("missing 'simulate' block")
    _require_keys(block, {"state", "masses", "dt", "t_total", "stride",
                          "scheme", "chart_out", "spectrum"}, "simulate")
    masses = _masses_from(block["masses"], "simulate.masses")
    state = state_from_json_dict(block["state"])
    try:
        icfg = IntegratorConfig(dt=block["dt"], t_total=block["t_total"],
                                stride=block.get("stride", 10),
                                scheme=block.get("scheme", "yoshida6"))
    except ValueError as err:
        raise ConfigError(f"simulate: {err}")
    traj = integrate(state, masses, icfg)
    out = _outdir(args, cfg)
    path = os.path.join(out, "trajectory.csv")
    traj.to_csv(path, chart=block.get("chart_out", "cartesian"))
    result = {"schema": "kam3bp-simulate/1", "trajectory_csv": path,
              "samples": int(len(traj.t)), "min_separation": traj.min_separation}
    if block.get("spectrum"):
        spec = fast_frequencies(traj, masses)
        result["spectrum"] = spec.to_json_dict()
        write_json(os.path.join(out, "spectrum.json"), result["spectrum"])
    write_json(os.path.join(out, "simulate.json"), result)
    print(json.dumps(result, sort_keys=True) if args.json else f"wrote {path}")
    return 0


def reference_report(seed=12345):
    """Fast deterministic battery over the closed-form and sampled checks."""
    import math

    from .bodies import MassParams
    from .domains import (DomainSpec, THETA_VALIDITY, lambda_plus_of_G,
                          measure_Astar, tangency_cubic, underline_k,
                          verify_inclusion_X, xstar, xstar_cubic)
    from .kamrec import KamInput, diophantine_check, run

    a, b, k = tangency_cubic()
    grid_ok = True
    for theta in np.linspace(1e-3, 0.1, 100):
        xs = xstar(float(theta))
        grid_ok &= (1 + 4 * theta < xs < 1 + 6 * theta)
        grid_ok &= xstar_cubic(1 + 4 * theta, theta) < 0 < xstar_cubic(1 + 6 * theta, theta)
    masses = MassParams(m0=1.0, m1=1.2, m2=0.1, mu=1e-3)
    spec = DomainSpec(G=1.0, Lambda_minus=0.5, Lambda_plus=lambda_plus_of_G(1.0),
                      alpha_minus=0.01, alpha_plus=0.04, c=0.9, c1=0.1,
                      eps=1.0, gamma_small=0.002, masses=masses)
    incl = verify_inclusion_X(spec, samples=2000, seed=seed)
    meas = measure_Astar(spec, samples=20000, seed=seed)
    dio = diophantine_check((1.0, math.sqrt(2)), (math.sqrt(3),), 1e-3, 1e-3, 4.0, 12)
    inp = KamInput(n1=2, n2=1, tau=4.0, gamma1=0.1, gamma2=0.05, s=0.4,
                   rho=0.5, eps=0.5, eps_bar=0.5, M=1.5, M_hat=1.2, M_bar=2.0,
                   M_bar1=1.0, M_bar2=1.5, E=1e-60, lam=1.0)
    states, verdict = run(inp, 8)
    return {
        "schema": REPORT_SCHEMA,
        "seed": seed,
        "constants": {
            "underline_k": underline_k(),
            "lambda_plus_G1": lambda_plus_of_G(1.0),
            "theta_validity": THETA_VALIDITY,
            "tangency": {"a": a, "b": b, "k": k},
        },
        "xstar_grid_ok": bool(grid_ok),
        "inclusion": {"pass": incl["pass"], "violations": incl["violations"],
                      "samples": incl["samples"]},
        "measure": {"chain_ok": meas["chain_ok"],
                    "monte_carlo": meas["monte_carlo"],
                    "integral": meas["integral"],
                    "analytic_lower_bound": meas["analytic_lower_bound"]},
        "diophantine_pass": dio["pass"],
        "kam_run": {"pass": verdict["pass"],
                    "steps": verdict["steps_completed"],
                    "E_hat_first": float(states[0].E_hat),
                    "K_first": float(states[0].K)},
    }


def cmd_report(args):
    if not args.all:
        raise ConfigError("report: only --all is implemented")
    payload = reference_report(seed=args.seed)
    path = os.path.join(_outdir(args), "report.json")
    write_json(path, payload)
    ok = (payload["xstar_grid_ok"] and payload["inclusion"]["pass"]
          and payload["measure"]["chain_ok"] and payload["diophantine_pass"]
          and payload["kam_run"]["pass"])
    print(json.dumps(payload, sort_keys=True) if args.json else
          f"wrote {path} ({'pass' if ok else 'FAIL'})")
    return 0 if ok else 1


# --------------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="kam3bp",
                                description="two-scale KAM numerics for the planetary three-body problem")
    p.add_argument("--outdir", help="output directory (or env KAM3BP_OUTDIR)")
    p.add_argument("--json", action="store_true", help="print machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coords", help="convert a state between charts")
    c.add_argument("--input", required=True)
    c.add_argument("--to", required=True,
                   choices=["cartesian", "jrd", "rps", "perihelia"])
    c.add_argument("--output")
    c.set_defaults(func=cmd_coords)

    a = sub.add_parser("average", help="equilibrium checks of the averaged coupling")
    a.add_argument("--config", required=True)
    a.set_defaults(func=cmd_average)

    b = sub.add_parser("bnf", help="Birkhoff normal form at an action point")
    b.add_argument("--config", required=True)
    b.set_defaults(func=cmd_bnf)

    d = sub.add_parser("domains", help="membership/measure checks and figure data")
    d.add_argument("--figure", type=int, choices=[1, 2])
    d.add_argument("--check", choices=["inclusion", "measure", "all"])
    d.add_argument("--G", type=float, default=1.0)
    d.add_argument("--eps", type=float, default=1.0)
    d.add_argument("--c1", type=float, default=0.1)
    d.add_argument("--gamma", type=float, default=0.002)
    d.add_argument("--alpha-plus", dest="alpha_plus", type=float, default=0.04)
    d.add_argument("--c", type=float, default=0.9)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--samples", type=int, default=10000)
    d.set_defaults(func=cmd_domains)

    k = sub.add_parser("kam", help="run the KAM parameter recursion")
    k.add_argument("--config", required=True)
    k.add_argument("--steps", type=int, default=8)
    k.set_defaults(func=cmd_kam)

    s = sub.add_parser("simulate", help="integrate the full system")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="reference verification battery")
    r.add_argument("--all", action="store_true")
    r.add_argument("--seed", type=int, default=12345)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
