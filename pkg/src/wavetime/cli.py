"""Command-line front end.

Subcommands: analyze (traditional STA + window report), optimize (full
flow plus clock sweep), extract (removal explanation), sdc (constraint
generation), verify (wave-simulation equivalence).  Exit codes: 0 ok or
PASS, 1 FAIL, 2 usage error, 3 infeasible.
"""

import argparse
import os
import sys

from . import netlist as nl
from . import milp, optimizer, retime_extract, sdcgen, sta, verify, vsmodel

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def build_parser():
    ap = argparse.ArgumentParser(
        prog="wavetime",
        description="flip-flop removal and wave-pipelining toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, paths):
        for name in paths:
            p.add_argument(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--T", type=float, help="clock period override")
        p.add_argument("--ru", type=float, help="upper guard band")
        p.add_argument("--rl", type=float, help="lower guard band")
        p.add_argument("--phases", help="comma-separated unit clock phases")
        p.add_argument("--duty", type=float)
        p.add_argument("--tstable", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--dth-start", type=float,
                       help="first delay bound of the refinement schedule")
        p.add_argument("--dth-step", type=float,
                       help="decrement between delay bounds")
        p.add_argument("--sweep-step", type=float, default=0.005,
                       help="period sweep step as a fraction of T")
        p.add_argument("--milp-nodes", type=int)
        p.add_argument("--milp-time-ms", type=int)
        p.add_argument("--dump-model", action="store_true",
                       help="write solver models in LP format")
        p.add_argument("--replace-threshold", type=float)
        p.add_argument("--retime-objective", default="min-removals",
                       choices=["min-removals", "min-lags"])
        p.add_argument("--out-dir", default=".")
        return p

    common(sub.add_parser("analyze"), ["netlist"])
    common(sub.add_parser("optimize"), ["netlist"])
    common(sub.add_parser("extract"), ["orig", "opt"])
    common(sub.add_parser("sdc"), ["orig", "opt"])
    common(sub.add_parser("verify"), ["orig", "opt"])
    return ap


def load_config_file(path):
    values = {}
    with open(path) as fh:
        for i, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{i}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


_TUPLE_KEYS = {"phases", "dth_schedule"}
_INT_KEYS = {"milp_nodes", "milp_time_ms"}


def make_config(circuit, args):
    values = {}
    if args.config:
        for key, val in load_config_file(args.config).items():
            if key in _TUPLE_KEYS:
                values[key] = tuple(float(x) for x in val.split(","))
            elif key in _INT_KEYS:
                values[key] = int(val)
            else:
                values[key] = float(val)
    flag_map = {"T": args.T, "r_u": args.ru, "r_l": args.rl,
                "duty": args.duty, "t_stable": args.tstable,
                "alpha": args.alpha, "beta": args.beta, "gamma": args.gamma,
                "milp_nodes": args.milp_nodes,
                "milp_time_ms": args.milp_time_ms,
                "replace_threshold": args.replace_threshold}
    for key, val in flag_map.items():
        if val is not None:
            values[key] = val
    if args.phases is not None:
        values["phases"] = tuple(float(x) for x in args.phases.split(","))
    T = values.pop("T", circuit.T)
    if args.dth_start is not None or args.dth_step is not None:
        start = args.dth_start if args.dth_start is not None else 7 * T / 8
        step = args.dth_step if args.dth_step is not None else T / 8
        sched = []
        d = start
        while d > 0:
            sched.append(d)
            d -= step
        sched.append(0.0)
        values["dth_schedule"] = tuple(sched)
    return nl.Config(T=T, **values)


def _read(path):
    with open(path) as fh:
        return fh.read()


def _load_second(path):
    """The second operand of extract/sdc/verify: either a plain netlist
    or a placement file written by `optimize`."""
    text = _read(path)
    if "\nplacement\n" in text:
        placed, period = optimizer.placement_from_text(text)
        return placed, period
    return nl.parse_netlist(text), None


def _anchor_solution(orig_graph, opt):
    """Removal locations, either via the retiming ILP (netlist pair) or
    straight from a placement's anchor annotations."""
    if isinstance(opt, nl.Circuit):
        return retime_extract.extract_removals(
            orig_graph, nl.to_gate_graph(opt))
    sol = retime_extract.RetimeSolution()
    for e in orig_graph.edges:
        key = (e.src, e.dst, e.dst_pin)
        lam = opt.anchors(e)
        sol.y[key] = lam
        sol.w_r[key] = e.w
    return sol


def cmd_analyze(args):
    circuit = nl.parse_netlist(_read(args.netlist))
    cfg = make_config(circuit, args)
    print(f"min_period={sta.traditional_min_period(circuit):.6g}")
    graph = nl.to_gate_graph(circuit)
    placed = sta.as_placed(graph)
    windows, violations = sta.propagate_windows(placed, cfg)
    sys.stdout.write(sta.format_report(placed, windows, violations))
    return EXIT_OK


def cmd_optimize(args):
    circuit = nl.parse_netlist(_read(args.netlist))
    cfg = make_config(circuit, args)
    graph = nl.to_gate_graph(circuit)
    if args.dump_model:
        arts = vsmodel.build_relaxed_model(graph, cfg)
        _write(args, "relaxed.lp", milp.export_lp(arts.model))
    placed, report, best_cfg = optimizer.sweep_clock_period(
        graph, cfg, args.sweep_step)
    base = nl.serialize(circuit)
    _write(args, "opt.net", optimizer.placement_to_text(placed, best_cfg,
                                                        base))
    _write(args, "report.txt", report.text())
    anchors = [f"edge {e.src} {e.dst} removed={placed.anchors(e)}"
               for e in placed.graph.edges if placed.anchors(e) >= 1]
    _write(args, "anchors.txt", "\n".join(anchors) + ("\n" if anchors else ""))
    sys.stdout.write(report.text())
    return EXIT_OK


def cmd_extract(args):
    orig = nl.to_gate_graph(nl.parse_netlist(_read(args.orig)))
    opt, _ = _load_second(args.opt)
    if isinstance(opt, nl.Circuit):
        sol = retime_extract.extract_removals(
            orig, nl.to_gate_graph(opt), objective=args.retime_objective)
    else:
        sol = _anchor_solution(orig, opt)
    _write(args, "retime.txt", sol.text())
    sys.stdout.write(sol.text())
    return EXIT_OK


def cmd_sdc(args):
    orig_circuit = nl.parse_netlist(_read(args.orig))
    orig = nl.to_gate_graph(orig_circuit)
    opt, period = _load_second(args.opt)
    cfg = make_config(orig_circuit, args)
    if period is not None and args.T is None:
        cfg = cfg.with_period(period)
    sol = _anchor_solution(orig, opt)
    classes = sdcgen.classify_paths(orig, sol)
    sdcgen.find_differentiating_pins(classes, orig)
    text = sdcgen.emit_sdc(classes, cfg)
    _write(args, "out.sdc", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args):
    orig = nl.parse_netlist(_read(args.orig))
    opt, period = _load_second(args.opt)
    cfg = make_config(orig, args)
    if period is not None and args.T is None:
        cfg = cfg.with_period(period)
    ok, diff = verify.check_equivalence(orig, opt, cfg)
    print("PASS" if ok else "FAIL")
    sys.stdout.write(diff)
    return EXIT_OK if ok else EXIT_FAIL


def _write(args, name, text):
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, name), "w") as fh:
        fh.write(text)


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    handlers = {"analyze": cmd_analyze, "optimize": cmd_optimize,
                "extract": cmd_extract, "sdc": cmd_sdc,
                "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except optimizer.InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except retime_extract.RetimeError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (nl.NetlistError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
