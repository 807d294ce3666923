"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 analysis
infeasible (no operating point, degenerate labels, unstable tuning result),
4 numerical failure.

With ``--out-dir`` every command writes its outputs plus ``manifest.json``.
JSON outputs embed the run record; the manifest lists every output with its
sha256, so ``ibrstab rerun DIR/manifest.json --out-dir OTHER`` can check
that a rerun is byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .asm import (AsmConfig, AsmConfigError, ConvergenceError, DegenerateLabelsError, DiskOracle,
                  PowerSystemOracle, SvmError, SvmModel, argmax_probability, map_csv, probability_map,
                  run_asm)
from .loadflow import DivergenceError, LoadFlowError, SingularJacobianError, solve_newton_raphson
from .netmodel import (GAIN_NAMES, IbrSpec, NetworkError, ParameterDomain, apply_scenario, load_network,
                       resolve_data_file)
from .stability import GRIDS, EigenError, build_context, eigenvalues, is_ps_stable, scenario_system
from .thevenin import TheveninError, table_rows

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_NET = "cigre_hv.net"


class UsageError(Exception):
    pass


class InfeasibleError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_assignments(text: str | None) -> dict[str, float]:
    """``k=v,k=v`` into a dict of floats."""
    out: dict[str, float] = {}
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"bad assignment {item!r}, expected name=value")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise UsageError(f"bad value in {item!r}") from None
    return out


def _gains(text: str | None) -> dict[str, float]:
    g = parse_assignments(text)
    unknown = sorted(set(g) - set(GAIN_NAMES))
    if unknown:
        raise UsageError(f"unknown gain(s): {', '.join(unknown)}; known: {', '.join(GAIN_NAMES)}")
    bad = [k for k, v in g.items() if not (math.isfinite(v) and v >= 0)]
    if bad:
        raise UsageError(f"gains must be finite and >= 0: {', '.join(bad)}")
    return g


def _bool_choice(text: str) -> str:
    t = text.lower()
    if t not in ("true", "false", "both"):
        raise argparse.ArgumentTypeError("expected true, false or both")
    return t


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _open_net(name: str):
    try:
        path = resolve_data_file(name)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    return load_network(path), path


def _scenarios(net, args) -> list[int]:
    if getattr(args, "scenario", None) is None:
        return sorted(net.scenarios)
    for sc in args.scenario:
        if sc not in net.scenarios:
            raise UsageError(f"unknown scenario {sc}; available: {', '.join(map(str, sorted(net.scenarios)))}")
    return list(args.scenario)


def _check_bus(net, bus: str):
    if bus not in net.bus_ids:
        raise UsageError(f"unknown bus {bus!r}")


# ---------------------------------------------------------------------------
# run records


class Run:
    """Collects outputs of one command and writes them with a manifest."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.args = args
        self.argv = list(argv)
        self.out_dir = Path(args.out_dir) if getattr(args, "out_dir", None) else None
        self.inputs: dict[str, str] = {}
        self.seeds: dict[str, int] = {}
        self.config: dict = {}
        self.files: dict[str, bytes] = {}
        self.t0 = time.perf_counter()

    def add_input(self, role: str, path: Path):
        self.inputs[role] = _sha256(path)

    def record(self) -> dict:
        """Everything that determines the outputs; no timing."""
        return {"command": self.args.command, "argv": self.argv, "config": self.config,
                "inputs": self.inputs, "seeds": self.seeds, "version": __version__}

    def add_json(self, name: str, payload: dict):
        doc = {"run": self.record(), **payload}
        self.files[name] = (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8")

    def add_text(self, name: str, text: str):
        self.files[name] = text.encode("utf-8")

    def flush(self):
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            (self.out_dir / name).write_bytes(data)
        manifest = {**self.record(),
                    "outputs": {n: hashlib.sha256(d).hexdigest() for n, d in sorted(self.files.items())},
                    "timing": {"wall_s": round(time.perf_counter() - self.t0, 3)}}
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                                   encoding="utf-8")


def _canonical_argv(parser: argparse.ArgumentParser, args: argparse.Namespace) -> list[str]:
    """Rebuild a command line from parsed values, with input files made absolute
    and without ``--out-dir``."""
    out = [args.command]
    for act in parser._actions:
        if not act.option_strings or act.dest in ("help", "out_dir"):
            continue
        val = getattr(args, act.dest, None)
        if val is None or val is False:
            continue
        flag = act.option_strings[-1]
        if act.dest in ("net", "model"):
            val = str(resolve_data_file(val).resolve()) if act.dest == "net" else str(Path(val).resolve())
        if val is True:
            out.append(flag)
        elif isinstance(val, list):
            out += [flag, *map(str, val)]
        else:
            out += [flag, val if isinstance(val, str) else repr(val)]
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_loadflow(args, run: Run) -> int:
    net, path = _open_net(args.net)
    run.add_input("net", path)
    reports = {}
    for sc in _scenarios(net, args):
        sol = solve_newton_raphson(apply_scenario(net, sc))
        reports[str(sc)] = sol.report()
    run.config = {"net": str(path.name), "scenarios": [int(k) for k in reports]}
    run.add_json("loadflow.json", {"scenarios": reports})
    if args.json:
        print(json.dumps(reports, indent=1, sort_keys=True))
    else:
        for sc, rep in reports.items():
            print(f"scenario {sc}: converged in {rep['iterations']} iterations, "
                  f"mismatch {rep['mismatch_pu']:.2e} pu, losses {rep['losses_mw']:.2f} MW")
            print(f"  {'bus':>5} {'|V| pu':>8} {'angle':>9} {'P MW':>10} {'Q Mvar':>10}")
            for b in rep["buses"]:
                print(f"  {b['bus']:>5} {b['v_pu']:8.4f} {b['angle_deg']:9.3f} {b['p_mw']:10.2f} {b['q_mvar']:10.2f}")
            for i in rep["injectors"]:
                print(f"  {i['id']:>5} P={i['p_mw']:.2f} MW Q={i['q_mvar']:.2f} Mvar")
    return EXIT_OK


def _ibr(args, extra: dict | None = None) -> IbrSpec:
    spec = IbrSpec(version=args.ibr_version)
    spec.validate()
    return spec.with_gains(**_gains(getattr(args, "gains", None) or getattr(args, "fixed", None)), **(extra or {}))


def _context(net, args, names: Sequence[str] = ()):
    _check_bus(net, args.bus)
    ctx = build_context(net, args.grid, _scenarios(net, args), args.bus, _ibr(args), names)
    if ctx.failures:
        raise InfeasibleError("no operating point: " + "; ".join(f"scenario {k}: {v}"
                                                                  for k, v in sorted(ctx.failures.items())))
    return ctx


def cmd_eigs(args, run: Run) -> int:
    net, path = _open_net(args.net)
    run.add_input("net", path)
    ctx = _context(net, args)
    gains = ctx.fixed_gains
    run.config = {"net": path.name, "grid": args.grid, "bus": args.bus, "ibr_version": args.ibr_version,
                  "gains": gains, "scenarios": list(ctx.scenarios), "top": args.top}
    results, stable = {}, True
    for case in ctx.cases:
        sys_ = scenario_system(ctx, case, {})
        rep = eigenvalues(sys_, top=args.top, eps=ctx.eps)
        ok = rep.max_real < 0
        stable &= ok
        results[str(case.scenario)] = {"stable": ok, **rep.as_dict()}
        if args.dump:
            run.add_text(f"system_s{case.scenario}.json", sys_.to_json() + "\n")
        if not args.json:
            print(f"scenario {case.scenario}: {'stable' if ok else 'UNSTABLE'}  "
                  f"states={rep.eigenvalues.size}  max Re={rep.max_real:.6g}")
            print(f"  {'mode':>4} {'real':>12} {'imag':>12} {'Hz':>9} {'damping':>8}  participation")
            shown = [m for m in rep.modes if m.eigenvalue.imag >= 0][: args.modes]
            for k, m in enumerate(shown):
                part = ", ".join(f"{s} {f:.2f}" for s, f in m.participation)
                print(f"  {k:4d} {m.eigenvalue.real:12.5g} {m.eigenvalue.imag:12.5g} {m.freq_hz:9.4g} "
                      f"{m.damping:8.4f}  {part}")
    verdict = {"stable": bool(stable), "failing": [int(k) for k, r in results.items() if not r["stable"]]}
    run.add_json("eigs.json", {"verdict": verdict, "scenarios": results})
    if args.json:
        print(json.dumps({"verdict": verdict, "scenarios": results}, indent=1, sort_keys=True))
    else:
        print(f"verdict: {'stable' if stable else 'unstable'}")
    return EXIT_OK


def cmd_thevenin(args, run: Run) -> int:
    net, path = _open_net(args.net)
    run.add_input("net", path)
    _check_bus(net, args.bus)
    settings = {"true": (True,), "false": (False,), "both": (True, False)}[args.include_loads]
    scenarios = _scenarios(net, args) if not args.all_scenarios else sorted(net.scenarios)
    rows = table_rows(net, args.bus, scenarios, settings)
    run.config = {"net": path.name, "bus": args.bus, "scenarios": scenarios, "include_loads": args.include_loads}
    table = [r.row() for r in rows]
    run.add_json("thevenin.json", {"rows": table})
    csv_lines = ["scenario,loads,s_sc_mva,scr,x_over_r,v_th_pu"]
    csv_lines += [f"{r['scenario']},{r['loads']},{r['s_sc_mva']!r},{r['scr']!r},{r['x_over_r']!r},{r['v_th_pu']!r}"
                  for r in table]
    run.add_text("thevenin.csv", "\r\n".join(csv_lines) + "\r\n")
    if args.json:
        print(json.dumps(table, indent=1))
    else:
        print(f"{'scenario':>8} {'loads':>5} {'S_sc MVA':>9} {'SCR':>6} {'X/R':>6} {'V_th pu':>8}")
        for r in table:
            print(f"{r['scenario']:>8} {r['loads']:>5} {r['s_sc_mva']:9.1f} {r['scr']:6.3f} "
                  f"{r['x_over_r']:6.3f} {r['v_th_pu']:8.4f}")
    return EXIT_OK


def _oracle(args, run: Run, domain: ParameterDomain) -> Callable:
    if args.oracle == "disk":
        run.config["oracle"] = {"kind": "disk", "radius": args.disk_radius}
        return DiskOracle(args.disk_radius)
    net, path = _open_net(args.net)
    run.add_input("net", path)
    fixed = _gains(args.fixed)
    clash = sorted(set(fixed) & set(domain.names))
    if clash:
        raise UsageError(f"gain(s) both swept and fixed: {', '.join(clash)}")
    unknown = sorted(set(domain.names) - set(GAIN_NAMES))
    if unknown:
        raise UsageError(f"unknown swept parameter(s): {', '.join(unknown)}")
    ctx = _context(net, args, domain.names)
    run.config["oracle"] = {"kind": "power-system", "net": path.name, "grid": args.grid, "bus": args.bus,
                            "ibr_version": args.ibr_version, "scenarios": list(ctx.scenarios),
                            "held_gains": {k: v for k, v in ctx.fixed_gains.items() if k not in domain.names}}
    return PowerSystemOracle(ctx)


def _asm_config(args) -> AsmConfig:
    return AsmConfig(n_init=args.n_init, n_r=args.n_cand, n_a=args.n_add, p_th=args.p_th, rng_seed=args.seed,
                     rounds=args.rounds, C=args.C, gamma=args.gamma)


def _domain(text: str | None) -> ParameterDomain:
    if not text:
        raise UsageError("--params is required")
    return ParameterDomain.parse(text)


def _train(args, run: Run, domain: ParameterDomain, oracle):
    cfg = _asm_config(args)
    run.config["asm"] = cfg.as_dict()
    run.seeds["asm"] = cfg.rng_seed
    model, hist = run_asm(domain, oracle, cfg, workers=args.workers)
    run.add_text("history.jsonl", hist.to_jsonl())
    run.add_text("model.json", model.to_json() + "\n")
    return model, hist


def cmd_map(args, run: Run) -> int:
    _asm_config(args)  # reject bad settings before the costly setup
    domain = _domain(args.params)
    run.config = {"domain": str(domain), "resolution": args.resolution, "label_map": args.label_map}
    oracle = _oracle(args, run, domain)
    model, hist = _train(args, run, domain, oracle)
    pts, prob, labels = probability_map(model, domain, args.resolution, oracle if args.label_map else None,
                                        args.workers)
    run.add_text("map.csv", map_csv(domain, pts, prob, labels))
    n_stable = sum(s.s for s in hist.samples)
    summary = {"samples": len(hist.samples), "stable": n_stable, "infeasible": len(hist.infeasible),
               "map_points": int(len(pts)), "mean_probability": float(np.mean(prob))}
    run.add_json("map_summary.json", {"summary": summary, "model_info": model.info})
    print(f"labeled {summary['samples']} samples ({n_stable} stable, {summary['infeasible']} infeasible); "
          f"map of {summary['map_points']} points")
    return EXIT_OK


def cmd_tune(args, run: Run) -> int:
    if args.model:
        mpath = Path(args.model)
        if not mpath.exists():
            raise UsageError(f"model file not found: {args.model}")
        run.add_input("model", mpath)
        model = SvmModel.from_json(mpath.read_text(encoding="utf-8"))
        domain = model.domain
        if args.params and ParameterDomain.parse(args.params) != domain:
            raise UsageError("--params does not match the domain of the saved model")
        run.config = {"domain": str(domain), "model": mpath.name}
        oracle = _oracle(args, run, domain)
    else:
        _asm_config(args)
        domain = _domain(args.params)
        run.config = {"domain": str(domain)}
        oracle = _oracle(args, run, domain)
        model, _ = _train(args, run, domain, oracle)
    best = argmax_probability(model, domain, args.resolution)
    verdict = oracle(best.rho)
    result = {"tuned": best.as_dict(domain.names), "confirmation": verdict.as_dict()}
    run.add_json("tune.json", result)
    print("rho* = " + ", ".join(f"{n}={v:.6g}" for n, v in zip(domain.names, best.rho)))
    print(f"estimated probability of stability {best.probability:.4f}; "
          f"confirmation: {'stable' if verdict.s else 'unstable'}")
    if verdict.infeasible or not verdict.s:
        run.flush()
        raise InfeasibleError("tuned point is not confirmed stable by the eigenvalue test"
                              + (f" ({verdict.reason})" if verdict.reason else ""))
    return EXIT_OK


def cmd_rerun(args, _run: Run) -> int:
    mpath = Path(args.manifest)
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {mpath}: {exc}") from None
    if manifest.get("version") != __version__:
        print(f"warning: manifest written by version {manifest.get('version')}, running {__version__}",
              file=sys.stderr)
    code = main(argv + ["--out-dir", args.out_dir])
    if code != EXIT_OK:
        return code
    new = json.loads((Path(args.out_dir) / "manifest.json").read_text(encoding="utf-8"))
    if new["inputs"] != manifest["inputs"]:
        print("input files differ from the manifest", file=sys.stderr)
        return EXIT_USAGE
    diff = sorted(k for k in set(new["outputs"]) | set(manifest["outputs"])
                  if new["outputs"].get(k) != manifest["outputs"].get(k))
    if diff:
        print("outputs differ from the manifest: " + ", ".join(diff), file=sys.stderr)
        return EXIT_NUMERIC
    print(f"reproduced {len(new['outputs'])} output file(s) byte for byte")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_net(p):
    p.add_argument("--net", default=DEFAULT_NET, help="network file (path, $IBRSTAB_DATA_PATH, or bundled name)")


def _add_unit(p):
    p.add_argument("--bus", default="10", help="bus of the unit under study")
    p.add_argument("--ibr-version", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--grid", choices=GRIDS, default="full")
    p.add_argument("--scenario", type=int, nargs="+", help="scenario ids (default: all)")


def _add_asm(p):
    p.add_argument("--params", help="swept domain, e.g. kp_pll:0:12,ki_pll:0:860")
    p.add_argument("--fixed", help="held gains, e.g. kp_i=0.64,ki_i=48")
    p.add_argument("--oracle", choices=("power", "disk"), default="power")
    p.add_argument("--disk-radius", type=float, default=1.0)
    p.add_argument("--n-init", type=int, default=100)
    p.add_argument("--n-add", type=int, default=250)
    p.add_argument("--n-cand", type=int, default=20_000)
    p.add_argument("--p-th", type=float, default=0.8)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", type=float, default=AsmConfig.C)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--workers", type=int, default=1, help="parallel oracle evaluations")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ibrstab", description="Small-signal stability of grids with inverters.")
    ap.add_argument("--version", action="version", version=f"ibrstab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loadflow", help="Newton-Raphson load flow per scenario")
    _add_net(p)
    p.add_argument("--scenario", type=int, nargs="+")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_loadflow)

    p = sub.add_parser("eigs", help="eigenvalues and verdict for one gain set")
    _add_net(p)
    _add_unit(p)
    p.add_argument("--gains", help="gain overrides, e.g. kp_pll=0.77,ki_pll=376")
    p.add_argument("--top", type=int, default=3, help="participating states per mode")
    p.add_argument("--modes", type=int, default=12, help="modes printed per scenario")
    p.add_argument("--dump", action="store_true", help="write the system matrix of each scenario")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eigs)

    p = sub.add_parser("thevenin", help="Thevenin equivalents seen from a bus")
    _add_net(p)
    p.add_argument("--bus", default="10")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--all-scenarios", action="store_true")
    g.add_argument("--scenario", type=int, nargs="+")
    p.add_argument("--include-loads", type=_bool_choice, default="both")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_thevenin)

    p = sub.add_parser("map", help="adaptive stability map of a gain domain")
    _add_net(p)
    _add_unit(p)
    _add_asm(p)
    p.add_argument("--resolution", type=int, default=101, help="map points per dimension")
    p.add_argument("--label-map", action="store_true", help="also label every map point with the oracle")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("tune", help="gains of maximum estimated stability probability")
    _add_net(p)
    _add_unit(p)
    _add_asm(p)
    p.add_argument("--model", help="saved model.json; skips sampling and training")
    p.add_argument("--resolution", type=int, default=None, help="search grid points per dimension")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("rerun", help="rerun a command from its manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rerun)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    run = None
    try:
        run = Run(args, _canonical_argv(sub, args) if args.command != "rerun" else argv)
        code = args.func(args, run)
        if args.command != "rerun":
            run.flush()
        return code
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (NetworkError, AsmConfigError, TheveninError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (DegenerateLabelsError, InfeasibleError, DivergenceError) as exc:
        return _fail(EXIT_INFEASIBLE, str(exc))
    except (ConvergenceError, EigenError, SingularJacobianError, LoadFlowError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, f"{type(exc).__name__}: {exc}")
    except (SvmError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))


def _fail(code: int, msg: str) -> int:
    print(f"ibrstab: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
