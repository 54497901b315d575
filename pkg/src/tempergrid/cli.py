"""Command-line entry point: generate, sparsify, schedule, run, kl, analyze, collapse.

Exit codes: 0 success, 2 configuration/input error, 3 resource-guard refusal.
Progress goes to stderr; data goes to files (or stdout for summaries).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, fss_collapse, kl_curve, logical_energies, read_curve_csv,
                       residual_curve, swap_rate_report, write_collapse_json, write_curve_csv,
                       write_curve_dat)
from .constraints import ConstrainedProblem, SparsificationError, decode_many, identity_map, sparsify
from .engine import ConfigError, RunConfig, read_trace_jsonl, run_2dpt, run_jcolumn_pt, write_trace_jsonl
from .instances import (WishartSpec, five_node_complete, generate_verified_wishart, generate_wishart,
                        read_bundle, spec_meta, verify_planted, write_bundle, write_sparsified)
from .ising import ModelError
from .oracle import (SizeGuardError, codes_from_spins, enumerate_boltzmann, exact_ground_state,
                     expected_kl_bias)
from .schedule import Schedule, ScheduleConfig, build_schedule

log = logging.getLogger("tempergrid")

CONFIG_VERSION = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3

_TOP_KEYS = {"version", "instance", "sparsify", "schedule", "run", "baseline", "output"}
_INSTANCE_KEYS = {"bundle", "kind", "n", "alpha", "seed", "couplings"}
_SPARSIFY_KEYS = {"copies", "max_degree"}
_SCHEDULE_KEYS = {"betas", "penalties", "file", "adaptive"}
_RUN_KEYS = {"total_sweeps", "sweeps_per_swap", "seed", "both_directions", "store_states"}
_BASELINE_KEYS = {"penalty", "j_repeats"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def load_config(path) -> dict:
    """Read and validate an experiment config; relative paths resolve against its folder."""
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    _check_keys(cfg, _TOP_KEYS, "config")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")
    for key in ("instance", "schedule", "run"):
        if key not in cfg:
            raise ConfigError(f"config is missing '{key}'")
    _check_keys(cfg["instance"], _INSTANCE_KEYS, "instance")
    _check_keys(cfg.get("sparsify", {}), _SPARSIFY_KEYS, "sparsify")
    _check_keys(cfg["schedule"], _SCHEDULE_KEYS, "schedule")
    _check_keys(cfg["run"], _RUN_KEYS, "run")
    _check_keys(cfg.get("baseline", {}), _BASELINE_KEYS, "baseline")
    if "adaptive" in cfg["schedule"]:
        _check_keys(cfg["schedule"]["adaptive"], set(ScheduleConfig.__dataclass_fields__), "schedule.adaptive")
    base = p.parent
    for section, key in (("instance", "bundle"), ("instance", "couplings"), ("schedule", "file")):
        if key in cfg[section]:
            cfg[section][key] = str((base / cfg[section][key]).resolve())
    if "output" in cfg:
        cfg["output"] = str((base / cfg["output"]).resolve())
    return cfg


def _resolve_instance(spec: dict):
    """(logical model, planted energy or None, physical problem or None, map or None)."""
    if "bundle" in spec:
        b = read_bundle(spec["bundle"])
        return b.model, b.planted_energy, b.problem, b.smap
    kind = spec.get("kind")
    if kind == "wishart":
        inst = generate_wishart(WishartSpec(int(spec["n"]), float(spec.get("alpha", 0.75)), int(spec.get("seed", 0))))
        return inst.model, inst.planted_energy, None, None
    if kind == "five-node":
        return five_node_complete(spec.get("couplings")), None, None, None
    raise ConfigError("instance needs 'bundle' or kind 'wishart' / 'five-node'")


def _ground_energy(model, planted_energy):
    if planted_energy is not None:
        return planted_energy
    if model.n_spins <= 24:
        return exact_ground_state(model)[1]
    return None


def _prepare(cfg):
    model, planted_energy, problem, smap = _resolve_instance(cfg["instance"])
    sp = cfg.get("sparsify")
    if sp is not None:
        problem, smap = sparsify(model, int(sp.get("copies", 1)), sp.get("max_degree"))
    elif problem is None:
        problem, smap = ConstrainedProblem.unconstrained(model), identity_map(model.n_spins)
    return model, planted_energy, problem, smap


def _schedule(cfg, problem, threads):
    sc = cfg["schedule"]
    if "file" in sc:
        return Schedule.load(sc["file"])
    if "betas" in sc or "penalties" in sc:
        return Schedule(sc.get("betas", [1.0]), sc.get("penalties", [0.0]))
    log.info("building adaptive schedule")
    return build_schedule(problem, ScheduleConfig(**sc.get("adaptive", {})), threads=threads)


def _run_config(cfg) -> RunConfig:
    r = cfg["run"]
    try:
        return RunConfig(int(r["total_sweeps"]), int(r["sweeps_per_swap"]), int(r.get("seed", 0)),
                         store_states=bool(r.get("store_states", True)),
                         both_directions=bool(r.get("both_directions", False)))
    except KeyError as exc:
        raise ConfigError(f"run is missing {exc}") from exc


def _summary(trace, model, smap, e_gs, baseline):
    n = model.n_spins
    energies = logical_energies(trace, model, smap)
    out = {"rounds": trace.n_rounds, "sweeps": int(trace.sweep_count[-1]) if trace.n_rounds else 0}
    if baseline:
        out["feasible_fraction"] = trace.feasible_fraction
        out["penalty"] = trace.penalty
    else:
        out["feasible_fraction"] = float(np.mean(trace.target_g == 0))
    if e_gs is not None and trace.n_rounds:
        final = energies[-1]
        out["E_gs"] = float(e_gs)
        out["final_rho_E"] = None if np.isnan(final) else float((final - e_gs) / n)
    out["swap_rates"] = swap_rate_report(trace)
    return out


# --- subcommands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.kind == "wishart":
        spec = WishartSpec(args.n, args.alpha, args.seed)
        if args.verify:
            if args.n > 24:
                raise SizeGuardError(f"--verify enumerates 2^{args.n} states (limit 2^24)")
            inst = generate_verified_wishart(spec)
            spec = inst.spec
        else:
            inst = generate_wishart(spec)
        meta = spec_meta(spec)
        if args.verify:
            meta["verified"] = verify_planted(inst)
        write_bundle(args.out, inst.model, planted=inst.planted_state, planted_energy=inst.planted_energy,
                     meta=meta, force=args.force)
        print(json.dumps({"bundle": str(args.out), "planted_energy": inst.planted_energy, "seed": spec.seed}))
    else:
        model = five_node_complete(args.couplings)
        state, e = exact_ground_state(model)
        write_bundle(args.out, model, planted=state, planted_energy=e,
                     meta={"kind": "five-node", "ground_state": "exact enumeration"}, force=args.force)
        print(json.dumps({"bundle": str(args.out), "ground_energy": e}))
    return 0


def cmd_sparsify(args) -> int:
    b = read_bundle(args.bundle)
    problem, smap = sparsify(b.model, args.copies, args.max_degree)
    write_sparsified(args.bundle, problem, smap, {"copies": args.copies, "max_degree": args.max_degree})
    print(json.dumps({"n_physical": problem.n_spins, "constraint_pairs": problem.constraints.m}))
    return 0


def cmd_schedule(args) -> int:
    b = read_bundle(args.bundle)
    if b.problem is None:
        raise ConfigError(f"{args.bundle} has no physical.json; run 'sparsify' first")
    kw = {}
    if args.config:
        kw = json.loads(Path(args.config).read_text())
        _check_keys(kw, set(ScheduleConfig.__dataclass_fields__), "schedule config")
    sched = build_schedule(b.problem, ScheduleConfig(**kw), threads=args.threads)
    out = args.out or Path(args.bundle) / "schedule.json"
    sched.save(out)
    if sched.warning:
        log.warning(sched.warning)
    print(json.dumps({"schedule": str(out), "shape": list(sched.shape)}))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    model, planted_energy, problem, smap = _prepare(cfg)
    sched = _schedule(cfg, problem, args.threads)
    rc = _run_config(cfg)
    out = Path(args.out or cfg.get("output") or Path(args.config).with_suffix(""))
    out.mkdir(parents=True, exist_ok=True)
    sched.save(out / "schedule.json")
    t0 = time.time()
    if args.baseline:
        bl = cfg.get("baseline", {})
        penalty = bl.get("penalty")
        if penalty is None:
            penalty = float(np.mean(sched.penalties))
        j = int(bl.get("j_repeats") or len(sched.penalties))
        log.info("J-column PT: %d x %d at P=%.4g", len(sched.betas), j, penalty)
        trace = run_jcolumn_pt(problem, sched.betas, penalty, j, rc, threads=args.threads)
    else:
        log.info("2D-PT: %d x %d grid, %d rounds", len(sched.betas), len(sched.penalties), rc.n_rounds)
        trace = run_2dpt(problem, sched, rc, threads=args.threads)
    log.info("finished in %.1f s", time.time() - t0)
    write_trace_jsonl(trace, out / "trace.jsonl", include_states=rc.store_states)
    summary = _summary(trace, model, smap, _ground_energy(model, planted_energy), args.baseline)
    summary["algorithm"] = "jcolumn" if args.baseline else "2dpt"
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    (out / "meta.json").write_text(json.dumps({"version": __version__, "wall_seconds": time.time() - t0,
                                               "finished": time.strftime("%Y-%m-%dT%H:%M:%S")}) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "swap_rates"}))
    return 0


def _trace_logical_codes(path, smap, discard_infeasible):
    rec = read_trace_jsonl(path)
    if any(s is None for s in rec["states"]):
        raise ConfigError(f"{path} has rounds without stored states")
    states = np.array(rec["states"])
    logical, feasible = decode_many(smap, states)
    codes = codes_from_spins(logical)
    sweeps = rec["sweep_count"]
    if discard_infeasible:
        return sweeps[feasible], codes[feasible]
    return sweeps, codes


def cmd_kl(args) -> int:
    b = read_bundle(args.bundle)
    smap = b.smap if b.smap is not None else identity_map(b.model.n_spins)
    exact = enumerate_boltzmann(b.model, args.beta)
    runs = [_trace_logical_codes(path, smap, args.discard_infeasible) for path in args.traces]
    n = min(codes.size for _, codes in runs)
    if n == 0:
        raise ConfigError("a trace has no usable samples")
    sweeps = runs[0][0]
    mean = np.mean([kl_curve(codes[:n], exact, np.arange(1, n + 1)) for _, codes in runs], axis=0)
    k = 1 << b.model.n_spins
    with open(args.out, "w") as fh:
        fh.write("sweeps,samples,kl,reference\n")
        for t in range(n):
            fh.write(f"{int(sweeps[t])},{t + 1},{mean[t]!r},{expected_kl_bias(k, t + 1)!r}\n")
    print(json.dumps({"csv": str(args.out), "final_kl": float(mean[-1]), "chains": len(runs)}))
    return 0


def cmd_analyze(args) -> int:
    """Residual-energy curve from run directories (one per instance x trial)."""
    groups = {}
    t_axis = None
    n_logical = None
    for run_dir in args.runs:
        d = Path(run_dir)
        cfg = json.loads((d / "config.json").read_text())
        summary = json.loads((d / "summary.json").read_text())
        model, planted_energy, problem, smap = _prepare(cfg)
        e_gs = _ground_energy(model, planted_energy)
        if e_gs is None:
            raise AnalysisError(f"{d}: no ground-state energy available")
        rec = read_trace_jsonl(d / "trace.jsonl")
        if summary.get("algorithm") == "jcolumn" or any(s is None for s in rec["states"]):
            e = rec["f"]
        else:
            logical, feasible = decode_many(smap, np.array(rec["states"]))
            e = model.energies(logical)
            if args.strict:
                e = np.where(feasible, e, np.nan)
        if t_axis is None:
            t_axis = rec["sweep_count"]
            n_logical = model.n_spins
        elif model.n_spins != n_logical or len(e) != len(t_axis):
            raise AnalysisError("runs differ in logical size or length")
        key = json.dumps(cfg["instance"], sort_keys=True)
        groups.setdefault(key, (e_gs, []))[1].append(e)
    keys = sorted(groups)
    curve = residual_curve([groups[k][1] for k in keys], [groups[k][0] for k in keys], n_logical, t_axis,
                           seed=args.seed)
    write_curve_csv(curve, args.out)
    if args.dat:
        write_curve_dat(curve, args.dat)
    if curve.degenerate:
        log.warning("single run: confidence interval is degenerate")
    print(json.dumps({"csv": str(args.out), "n_logical": n_logical, "instances": curve.instances,
                      "final_rho_E": float(curve.rho[-1])}))
    return 0


def cmd_collapse(args) -> int:
    curves = [read_curve_csv(p) for p in args.curves]
    grid = np.round(np.arange(args.mu_min, args.mu_max + args.mu_step / 2, args.mu_step), 10)
    window = None
    if args.t_min is not None or args.t_max is not None:
        window = (args.t_min if args.t_min is not None else 0.0,
                  args.t_max if args.t_max is not None else np.inf)
    res = fss_collapse(curves, b=args.b, mu_grid=grid, window=window)
    write_collapse_json(res, args.out, {"sizes": sorted(c.n_logical for c in curves)})
    print(json.dumps({"mu": res.mu, "b": res.b, "objective": res.objective,
                      "window": [float(w) for w in res.window]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tempergrid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an instance bundle")
    g.add_argument("kind", choices=["wishart", "five-node"])
    g.add_argument("--n", type=int, default=16)
    g.add_argument("--alpha", type=float, default=0.75)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--couplings", help="five-node coefficients file (model JSON)")
    g.add_argument("--verify", action="store_true", help="enumerate to confirm the planted ground state")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sparsify", help="add physical.json and map.json to a bundle")
    s.add_argument("bundle", type=Path)
    s.add_argument("--copies", type=int, default=3)
    s.add_argument("--max-degree", type=int)
    s.set_defaults(func=cmd_sparsify)

    sc = sub.add_parser("schedule", help="build an adaptive (beta, P) schedule")
    sc.add_argument("bundle", type=Path)
    sc.add_argument("--config", type=Path, help="JSON with ScheduleConfig fields")
    sc.add_argument("--out", type=Path)
    sc.add_argument("--threads", type=int)
    sc.set_defaults(func=cmd_schedule)

    r = sub.add_parser("run", help="run 2D-PT (or the J-column baseline) from a config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path)
    r.add_argument("--baseline", action="store_true", help="J-column PT at the mean schedule penalty")
    r.add_argument("--threads", type=int, help="worker threads (default: TEMPERGRID_THREADS or 1)")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("kl", help="KL-vs-time CSV of decoded trace samples")
    k.add_argument("bundle", type=Path)
    k.add_argument("traces", nargs="+", type=Path)
    k.add_argument("--beta", type=float, default=1.0)
    k.add_argument("--discard-infeasible", action="store_true")
    k.add_argument("--out", type=Path, required=True)
    k.set_defaults(func=cmd_kl)

    a = sub.add_parser("analyze", help="residual-energy curve from run directories")
    a.add_argument("runs", nargs="+", type=Path)
    a.add_argument("--out", type=Path, required=True)
    a.add_argument("--dat", type=Path, help="also write a gnuplot .dat file")
    a.add_argument("--strict", action="store_true", help="drop infeasible samples instead of decoding")
    a.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("collapse", help="finite-size-scaling collapse of residual curves")
    c.add_argument("curves", nargs="+", type=Path)
    c.add_argument("--b", type=float, default=0.0)
    c.add_argument("--mu-min", type=float, default=0.0)
    c.add_argument("--mu-max", type=float, default=15.0)
    c.add_argument("--mu-step", type=float, default=0.1)
    c.add_argument("--t-min", type=float)
    c.add_argument("--t-max", type=float)
    c.add_argument("--out", type=Path, required=True)
    c.set_defaults(func=cmd_collapse)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SizeGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, ModelError, SparsificationError, AnalysisError, FileExistsError,
            FileNotFoundError, KeyError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
