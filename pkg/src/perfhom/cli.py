"""Configuration-driven command line entry point.

One JSON config document drives every pipeline stage; no environment
configuration.  Subcommands: cell, converge, green, noncritical, remark,
verify.  Exit codes: 0 success, 1 solver failure, 2 config error,
3 acceptance failure in verify.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import cell, fields, green, grids, harness, relax, report, solver, \
    stencil
from .fields import FieldError
from .grids import GridError
from .relax import SolverError


class ConfigError(ValueError):
    pass


_DEFAULT_RESOLUTIONS = {"M": 144, "N_cell": 96, "R_capacity": 16.0,
                        "N_capacity": 8, "N_green": 96, "N_remark": 96}


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = {}
    cfg["n"] = raw.get("n", 3)
    if cfg["n"] != 3:
        raise ConfigError("only n = 3 is supported at desk scale")
    cfg["alpha"] = float(raw.get("alpha", 1.0))
    cfg["seed"] = int(raw.get("seed", 0))
    try:
        cfg["field"] = fields.field_from_spec(raw.get("field", {}))
    except (FieldError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad field spec: {exc}")
    phi_spec = raw.get("phi", {"kind": "constant", "params": {"c": -1.0}})
    try:
        cfg["phi"] = fields.make_obstacle(phi_spec.get("kind", "constant"),
                                          n=cfg["n"],
                                          **phi_spec.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad obstacle spec: {exc}")
    for key, default in (("eps_list", [0.5, 1 / 3, 0.25]),
                         ("beta_eps_list", None),
                         ("delta_list", [0.1]),
                         ("q_list", [1.2, 1.8]),
                         ("shrink_list", [0.1, 0.05, 0.025])):
        val = raw.get(key, default)
        if val is not None:
            if not isinstance(val, list) or not val or \
                    not all(isinstance(v, (int, float)) and v > 0
                            for v in val):
                raise ConfigError(f"{key} must be a list of positive "
                                  f"numbers")
            val = [float(v) for v in val]
        cfg[key] = val
    res = dict(_DEFAULT_RESOLUTIONS)
    res.update(raw.get("resolutions", {}))
    for k, v in res.items():
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"resolution {k} must be positive")
    cfg["resolutions"] = res
    cfg["out"] = raw.get("out", "out")
    cfg["sigma"] = float(raw.get("sigma", 0.05))
    return cfg


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _outdir(cfg, args):
    out = args.out or cfg["out"]
    os.makedirs(os.path.join(out, "tables"), exist_ok=True)
    os.makedirs(os.path.join(out, "fields"), exist_ok=True)
    return out


def cmd_cell(cfg, args):
    fld = cfg["field"]
    res = cfg["resolutions"]
    out = _outdir(cfg, args)
    N = int(res["N_cell"])
    et = cell.effective_tensor(fld, N)
    beta_list = cfg["beta_eps_list"] or cfg["eps_list"]
    beta0, table = cell.estimate_beta0(fld, sorted(beta_list, reverse=True),
                                       N)
    summary = {"abar": et.abar, "kappas": et.kappas, "N_cell": N,
               "beta0": beta0, "beta_model": table["model"],
               "beta_fit_residual": table["fit_residual"],
               "cauchy_decreasing": table["cauchy_decreasing"]}
    rows = [(r["eps"], r["N"], r["beta_eps"], r["t"])
            for r in table["rows"]]
    report.write_csv(os.path.join(out, "tables", "beta_eps.csv"),
                     ["eps", "N", "beta_eps", "t"], rows)
    for eps, resu in table["results"].items():
        report.save_field(os.path.join(out, "fields", f"W_eps_{eps:g}"),
                          resu.W, {"eps": eps, "N": N,
                                   "beta_eps": resu.beta_eps})
    A0 = np.diag(np.diag(et.abar))
    cap = cell.capacity_potential(A0, R=float(res["R_capacity"]),
                                  N_exterior=int(res["N_capacity"]))
    summary["gamma0"] = cap.gamma0
    summary["gamma0_tensor"] = np.diag(A0)
    summary["capacity_flux_shells"] = {str(k): v
                                       for k, v in cap.flux_shells.items()}
    summary["beta0_gamma0_gap"] = beta0 - cap.gamma0
    report.write_json(os.path.join(out, "summary.json"), summary)
    if not args.quiet:
        print(f"abar diag {np.diag(et.abar)}, beta0={beta0:.6g}, "
              f"gamma0={cap.gamma0:.6g}")
    return 0


def cmd_converge(cfg, args):
    res = cfg["resolutions"]
    out = _outdir(cfg, args)
    rep = harness.run_convergence(
        cfg["field"], cfg["phi"], cfg["eps_list"], alpha=1.0,
        M=int(res["M"]), N_cell=int(res["N_cell"]),
        beta_eps_list=cfg["beta_eps_list"], keep_fields=True,
        quiet=args.quiet)
    cols = ["eps", "M", "N_cell", "l1_internal", "sup_err", "l1_err",
            "l2_err", "grad_ratio", "max_osc", "osc_scale"]
    report.write_csv(os.path.join(out, "tables", "convergence.csv"), cols,
                     [[r[c] for c in cols] for r in rep.rows])
    for name, arr in rep.fields_kept.items():
        report.save_field(os.path.join(out, "fields", name), arr, {})
    report.write_json(os.path.join(out, "summary.json"), {
        "config": rep.config, "abar": rep.abar.abar, "beta0": rep.beta0,
        "rate": rep.rate, "sup_decreasing": rep.sup_decreasing,
        "rows": rep.rows})
    if not args.quiet:
        print(f"l1 slope {rep.rate['l1_internal_slope']:.3f} "
              f"(expected {rep.rate['expected']:.3f})")
    return 0


def cmd_green(cfg, args):
    fld = cfg["field"]
    out = _outdir(cfg, args)
    N = int(cfg["resolutions"]["N_green"])
    probe = green.approx_green(fld, 0.0, cfg["sigma"], N)
    probe_half = green.approx_green(fld, 0.0, cfg["sigma"] / 2.0, N)
    hom = green.almost_homogeneity_probe(fld, 0.0, [0.2, 0.3, 0.4],
                                         sigma=cfg["sigma"], N=N)
    summary = {"sigma": cfg["sigma"], "source_mass": probe.source_mass,
               "min_G": float(probe.G.min()),
               "bound_ratio": probe.bound_ratio,
               "bound_ratio_half_sigma": probe_half.bound_ratio}
    report.write_csv(os.path.join(out, "tables", "homogeneity.csv"),
                     ["radius", "min", "max", "band_ratio"],
                     [(r["radius"], r["min"], r["max"], r["band_ratio"])
                      for r in hom["rows"]])
    grad_rows = []
    tabs = _pmap(lambda q: green.l1_gradient_test(fld, q,
                                                  cfg["shrink_list"], N=N),
                 cfg["q_list"], args.threads)
    for q, tab in zip(cfg["q_list"], tabs):
        for r in tab["rows"]:
            grad_rows.append((q, tab["subcritical"], r["r"], r["grad_lq"],
                              r["ratio"]))
    report.write_csv(os.path.join(out, "tables", "l1_gradient.csv"),
                     ["q", "subcritical", "r", "grad_lq", "ratio"],
                     grad_rows)
    report.write_json(os.path.join(out, "summary.json"), summary)
    return 0


def cmd_noncritical(cfg, args):
    res = cfg["resolutions"]
    out = _outdir(cfg, args)
    rep = harness.noncritical_sweep(cfg["field"], cfg["phi"], cfg["alpha"],
                                    cfg["eps_list"],
                                    N_cell=int(res["N_cell"]),
                                    M=int(res["M"]))
    keys = sorted(rep["rows"][0].keys()) if rep["rows"] else []
    report.write_csv(os.path.join(out, "tables", "noncritical.csv"), keys,
                     [[r[k] for k in keys] for r in rep["rows"]])
    report.write_json(os.path.join(out, "summary.json"), rep)
    return 0


def cmd_remark(cfg, args):
    res = cfg["resolutions"]
    out = _outdir(cfg, args)
    rep = harness.remark_experiment(cfg["delta_list"], cfg["eps_list"],
                                    N=int(res["N_remark"]),
                                    capacity_R=float(res["R_capacity"]),
                                    capacity_N=int(res["N_capacity"]))
    rows = []
    for d in rep["deltas"]:
        for r in d["rows"]:
            rows.append((d["delta"], r["eps"], r["N"], r["beta_eps"],
                         r["lhs"], r["I1"], r["I2"], r["I3"],
                         r["identity_residual"]))
    report.write_csv(os.path.join(out, "tables", "remark.csv"),
                     ["delta", "eps", "N", "beta_eps", "lhs", "I1", "I2",
                      "I3", "identity_residual"], rows)
    report.write_json(os.path.join(out, "summary.json"), rep)
    if not args.quiet:
        for d in rep["deltas"]:
            print(f"delta={d['delta']:g}: I1={d['rows'][-1]['I1']:.4e} "
                  f"gap beta0-gamma0 = {d['gap']:.4g}")
    return 0


def _verify_checks(cfg):
    """Small deterministic suite of the library's core invariants."""
    rng = np.random.default_rng(cfg["seed"])
    checks = []

    def add(name, ok, value):
        checks.append({"name": name, "pass": bool(ok), "value": value})

    A = np.diag([1.0, 2.0, 3.0])
    et = cell.effective_tensor(fields.ConstantField(A), 12)
    err = float(np.abs(et.abar - A).max())
    add("effective_tensor_constant_exact", err <= 1e-10, err)

    fld = fields.make_separable_field(
        lambda x, y, z: 1.5 + 0.5 * np.sin(2 * np.pi * x)
        * np.cos(2 * np.pi * y), name="sinprod_check")
    grid = grids.build_cell_grid(3, 12)
    opr = stencil.assemble(fld, grid)
    m = relax.invariant_measure(opr)
    add("invariant_measure_positive", m.min() > 0, float(m.min()))
    M1 = _random_sym(rng)
    M2 = _random_sym(rng)
    k1 = cell.kappa_of(opr, M1)
    k2 = cell.kappa_of(opr, M2)
    k12 = cell.kappa_of(opr, M1 + M2)
    lin = abs(k12 - k1 - k2)
    add("kappa_linear", lin <= 1e-8, lin)

    phi = fields.make_obstacle("constant", c=-1.0)
    spec = solver.HomogenizedSpec(abar=np.eye(3), beta0=10.0, phi=phi,
                                  grid=grids.BoxGrid(3, 8))
    u = solver.solve_homogenized(spec)
    add("nonpositive_obstacle_zero_solution", float(np.abs(u).max()) == 0.0,
        float(np.abs(u).max()))

    dom = grids.perforate(16, grids.ScaleSet(0.5, alpha=1.0))
    phi2 = fields.make_obstacle("sine_bump", c0=-0.2, c1=1.2)
    espec = solver.EpsProblemSpec(field=fields.ConstantField(np.eye(3)),
                                  phi=phi2, dom=dom)
    u_eps = solver.solve_eps_problem(espec)
    psi = espec.obstacle_eps()
    add("eps_problem_admissible", bool((u_eps >= psi - 1e-10).all()),
        float((u_eps - psi).min()))
    ubar = grids.underline_transform(u_eps, dom)
    add("underline_idempotent",
        float(np.abs(grids.underline_transform(ubar, dom) - ubar).max())
        == 0.0, 0.0)
    return checks


def _random_sym(rng):
    B = rng.standard_normal((3, 3))
    return 0.5 * (B + B.T)


def cmd_verify(cfg, args):
    out = _outdir(cfg, args)
    checks = _verify_checks(cfg)
    report.write_csv(os.path.join(out, "tables", "verify.csv"),
                     ["name", "pass", "value"],
                     [(c["name"], c["pass"], c["value"]) for c in checks])
    ok = all(c["pass"] for c in checks)
    report.write_json(os.path.join(out, "summary.json"),
                      {"seed": cfg["seed"], "all_pass": ok,
                       "checks": checks})
    if not args.quiet:
        for c in checks:
            print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']} "
                  f"({report.fmt(c['value'])})")
    return 0 if ok else 3


_COMMANDS = {"cell": cmd_cell, "converge": cmd_converge, "green": cmd_green,
             "noncritical": cmd_noncritical, "remark": cmd_remark,
             "verify": cmd_verify}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="perfhom",
        description="Obstacle problems in critically perforated media")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=None, help="output directory "
                        "(overrides the config)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except (SolverError, GridError, FieldError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
