"""Four-stage optimization flow and the outer clock-period sweep.

Stage 1 solves the relaxed pad model and collects candidate unit sites S.
Stage 2 refines S with unit presence binaries while lowering the pad
bound d_th.  Stage 3 legalizes the surviving sites S_d with the exact
flip-flop/latch model, dropping sites that legalize to "no unit".
Stage 4 snaps gate delays to their libraries and trades long buffer
chains for sequential units where that saves area.
"""

import math
from dataclasses import dataclass, field

from . import milp, sta, vsmodel
from .sta import EdgeDecision, OptimizedCircuit

FF_AREA = 6
BUFFER_AREA = 1


class InfeasibleError(Exception):
    """Raised when a flow stage cannot be satisfied; carries the stage."""

    def __init__(self, stage, detail=""):
        self.stage = stage
        super().__init__(f"infeasible at stage {stage}" +
                         (f": {detail}" if detail else ""))


@dataclass
class StageInfo:
    name: str
    status: str
    n_sites: int
    objective: float


@dataclass
class OptimizationReport:
    stages: list = field(default_factory=list)
    final_T: float = 0.0
    n_f: int = 0
    n_l: int = 0
    n_b: int = 0
    area_before: float = 0.0
    area_after: float = 0.0

    def lines(self):
        out = []
        for st in self.stages:
            out.append(f"{st.name}.status={st.status}")
            out.append(f"{st.name}.sites={st.n_sites}")
            out.append(f"{st.name}.objective={st.objective:.6g}")
        out.append(f"final.T={self.final_T:.6g}")
        out.append(f"final.n_f={self.n_f}")
        out.append(f"final.n_l={self.n_l}")
        out.append(f"final.n_b={self.n_b}")
        out.append(f"final.area_before={self.area_before:.6g}")
        out.append(f"final.area_after={self.area_after:.6g}")
        return out

    def text(self):
        return "\n".join(self.lines()) + "\n"


def _solve_stage(arts, cfg, stage):
    sol = milp.solve(arts.model, max_nodes=cfg.milp_nodes,
                     time_ms=cfg.milp_time_ms)
    if sol.status == "infeasible" or (sol.status == "bound_reached"
                                      and not sol.values):
        raise InfeasibleError(stage, sol.status)
    bad = arts.model.violated(sol.values)
    if bad:
        raise InfeasibleError(stage, f"solution audit failed: {bad[:3]}")
    return sol


def _count_units(placed):
    ffs, latches = set(), set()
    for k, dec in placed.decisions.items():
        if dec.unit == "flipflop":
            ffs.add(k[0])
        elif dec.unit == "latch":
            latches.add(k[0])
    return ffs, latches


def buffer_count(dec, cfg):
    if dec.xi <= 1e-9:
        return 0
    return int(math.ceil(dec.xi / cfg.buffer_delay - 1e-9))


def area(placed, cfg):
    ffs, latches = _count_units(placed)
    bufs = sum(buffer_count(d, cfg) for d in placed.decisions.values())
    return FF_AREA * (len(ffs) + len(latches)) + BUFFER_AREA * bufs


def _absorb_equal_pads(placed, eps=1e-6):
    """Equal pads emulate buffers: realize them as extra buffer delay on
    every outgoing connection of the gate."""
    for k in sorted(placed.decisions):
        dec = placed.decisions[k]
        if dec.delta_prime > eps and dec.delta_prime - dec.delta <= eps:
            dec.xi += dec.delta
        dec.delta = 0.0
        dec.delta_prime = 0.0
    return placed


def run_flow(graph, cfg):
    """Run stages 1-4; returns (OptimizedCircuit, OptimizationReport) or
    raises InfeasibleError naming the failing stage."""
    report = OptimizationReport()
    report.area_before = FF_AREA * graph.total_weight()

    arts = vsmodel.build_relaxed_model(graph, cfg)
    sol = _solve_stage(arts, cfg, "relaxed")
    _, S = vsmodel.decode_solution(arts, sol)
    S = set(S.sites)
    report.stages.append(StageInfo("stage1", sol.status, len(S),
                                   sol.objective))

    sol2, arts2 = None, None
    schedule = list(cfg.dth_schedule)
    if not schedule or schedule[-1] != 0.0:
        schedule.append(0.0)
    extra = len(graph.gates) + 1
    for i, d_th in enumerate(schedule + [0.0] * extra):
        arts2 = vsmodel.build_cdq_model(graph, cfg, S, d_th)
        sol2 = _solve_stage(arts2, cfg, "cdq")
        _, hot = vsmodel.decode_solution(arts2, sol2)
        new = set(hot.sites) - S
        S |= new
        if i >= len(schedule) - 1 and not new:
            break
    S_d = {g for g, x in arts2.x.items() if sol2.values[x] > 0.5}
    report.stages.append(StageInfo("stage2", sol2.status, len(S_d),
                                   sol2.objective))

    seen = set()
    placed = None
    for _ in range(2 * len(graph.gates) + 2):
        key = frozenset(S_d)
        if key in seen:
            raise InfeasibleError("legalization",
                                  "site set oscillates without converging")
        seen.add(key)
        arts3 = vsmodel.build_legalization_model(graph, cfg, S_d)
        sol3 = _solve_stage(arts3, cfg, "legalization")
        placed, hot3 = vsmodel.decode_solution(arts3, sol3)
        unit_sites = {k[0] for k, d in placed.decisions.items()
                      if d.unit != "none"}
        invalid = S_d - unit_sites
        pad_sites = set(hot3.sites) - S_d
        if not invalid and not pad_sites:
            break
        S_d = (S_d - invalid) | pad_sites
    else:
        raise InfeasibleError("legalization", "iteration limit exceeded")
    report.stages.append(StageInfo("stage3", sol3.status, len(S_d),
                                   sol3.objective))

    placed = _absorb_equal_pads(placed)
    placed = discretize_delays(placed, cfg)
    placed = replace_buffers(placed, cfg)

    _, violations = sta.propagate_windows(placed, cfg)
    if violations:
        raise InfeasibleError("finalize", f"residual violations "
                              f"{[(v.node, v.kind) for v in violations[:3]]}")
    for dec in placed.decisions.values():
        dec.buffers = buffer_count(dec, cfg)
    ffs, latches = _count_units(placed)
    report.final_T = cfg.T
    report.n_f = len(ffs)
    report.n_l = len(latches)
    report.n_b = sum(buffer_count(d, cfg) for d in placed.decisions.values())
    report.area_after = area(placed, cfg)
    return placed, report


def _snap(value, lib):
    """Nearest library entry, ties to the smaller value."""
    best = lib[0]
    for x in lib:
        if abs(x - value) < abs(best - value) - 1e-12:
            best = x
        elif abs(x - value) <= abs(best - value) + 1e-12 and x < best:
            best = x
    return best


def discretize_delays(placed, cfg, libs=None):
    """Snap solved gate delays to library entries, with one repair pass
    nudging gates toward the violation-reducing neighbor."""
    graph = placed.graph
    libs = libs or {g: gate.lib for g, gate in graph.gates.items()}
    cont = {g: placed.delay(g) for g in graph.gates}
    snapped = {g: _snap(cont[g], sorted(libs[g])) for g in graph.gates}
    trial = OptimizedCircuit(graph, decisions=placed.decisions,
                             lam=placed.lam, gate_delays=snapped)
    _, violations = sta.propagate_windows(trial, cfg)
    if not violations:
        return trial
    late = any(v.kind in ("setup", "non_interference", "latch_region")
               for v in violations)
    early = any(v.kind == "hold" for v in violations)
    repaired = dict(snapped)
    for g in sorted(graph.gates):
        lib = sorted(libs[g])
        i = lib.index(repaired[g])
        if late and repaired[g] > cont[g] and i > 0:
            repaired[g] = lib[i - 1]
        elif early and repaired[g] < cont[g] and i + 1 < len(lib):
            repaired[g] = lib[i + 1]
    trial = OptimizedCircuit(graph, decisions=placed.decisions,
                             lam=placed.lam, gate_delays=repaired)
    _, violations = sta.propagate_windows(trial, cfg)
    if violations:
        raise InfeasibleError("discretization",
                              "library snapping cannot meet timing")
    return trial


def replace_buffers(placed, cfg):
    """Swap buffer chains longer than the replacement threshold for a
    single sequential unit when that is timing-clean and not larger."""
    graph = placed.graph
    rejected = set()
    while True:
        candidates = [(dec.xi, k) for k, dec in placed.decisions.items()
                      if dec.unit == "none" and k not in rejected
                      and dec.xi > cfg.replace_threshold]
        if not candidates:
            return placed
        candidates.sort(key=lambda t: (-t[0], t[1]))
        _, k = candidates[0]
        dec = placed.decisions[k]
        if buffer_count(dec, cfg) < FF_AREA:
            rejected.add(k)
            continue
        committed = False
        for unit in ("flipflop", "latch"):
            for n in range(-2, 3):
                for phi in cfg.phases:
                    trial_dec = EdgeDecision(xi=0.0, unit=unit, n_cycle=n,
                                             phi=phi)
                    old = placed.decisions[k]
                    placed.decisions[k] = trial_dec
                    _, violations = sta.propagate_windows(placed, cfg)
                    if violations:
                        placed.decisions[k] = old
                    else:
                        committed = True
                        break
                if committed:
                    break
            if committed:
                break
        if not committed:
            rejected.add(k)


def sweep_clock_period(graph, cfg, step_fraction=0.005):
    """Shrink T by step_fraction of the starting period until the flow
    fails; returns (best placed, best report, best cfg)."""
    if not (0 < step_fraction <= 0.1):
        raise ValueError("step_fraction must be in (0, 0.1]")
    step = step_fraction * cfg.T
    best = None
    current = cfg
    while True:
        try:
            placed, report = run_flow(graph, current)
        except InfeasibleError:
            if best is None:
                raise
            return best
        best = (placed, report, current)
        next_T = current.T - step
        if next_T <= 0:
            return best
        current = current.with_period(next_T)


# -- placement files ---------------------------------------------------------

def placement_to_text(placed, cfg, base_text):
    """Self-contained placement file: the base netlist followed by the
    resolved decisions."""
    out = [base_text.rstrip("\n"), "", "placement"]
    out.append(f"period {cfg.T!r}")
    for g in sorted(placed.gate_delays):
        out.append(f"size {g} d={placed.gate_delays[g]!r}")
    for e in placed.graph.edges:
        dec = placed.decision(e)
        lam = placed.anchors(e)
        if dec == EdgeDecision() and lam == e.w:
            continue
        out.append(f"edge {e.src} {e.dst} {e.dst_pin} xi={dec.xi!r} "
                   f"unit={dec.unit} n={dec.n_cycle} phi={dec.phi!r} "
                   f"lam={lam} bufs={dec.buffers}")
    return "\n".join(out) + "\n"


def placement_from_text(text):
    """Parse a placement file back into (OptimizedCircuit, period)."""
    from . import netlist as nl
    head, _, tail = text.partition("\nplacement\n")
    circuit = nl.parse_netlist(head)
    graph = nl.to_gate_graph(circuit)
    placed = sta.as_placed(graph)
    period = circuit.T
    for raw in tail.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "period":
            period = float(toks[1])
        elif toks[0] == "size":
            kv = dict(t.split("=", 1) for t in toks[2:])
            placed.gate_delays[toks[1]] = float(kv["d"])
        elif toks[0] == "edge":
            src, dst, pin = toks[1], toks[2], int(toks[3])
            kv = dict(t.split("=", 1) for t in toks[4:])
            key = (src, dst, pin)
            placed.decisions[key] = EdgeDecision(
                xi=float(kv.get("xi", 0.0)), unit=kv.get("unit", "none"),
                n_cycle=int(kv.get("n", 0)), phi=float(kv.get("phi", 0.0)),
                buffers=int(kv.get("bufs", 0)))
            if "lam" in kv:
                placed.lam[key] = int(kv["lam"])
        else:
            raise nl.NetlistError(f"unknown placement statement {toks[0]!r}")
    return placed, period
