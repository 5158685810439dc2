"""Arrival-window propagation and boundary checking.

Two timing views live here: the traditional one (all flip-flops present,
minimum period = worst register-to-register path) and the placed one,
where removed flip-flops act as anchor points that shift the time
reference by one period and inserted sequential delay units resynchronize
fast signals.

The placement container types (EdgeDecision, OptimizedCircuit) are
defined here so that both the optimizer and the independent wave
simulator can use them without depending on each other.
"""

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ArrivalWindow:
    s: float        # latest arrival
    s_prime: float  # earliest arrival

    def shifted(self, dt):
        return ArrivalWindow(self.s + dt, self.s_prime + dt)

    def width(self):
        return self.s - self.s_prime


@dataclass(frozen=True)
class Violation:
    node: object    # node name or edge key
    kind: str       # setup | hold | non_interference | latch_region
    margin: float   # negative slack

    def __post_init__(self):
        assert self.margin < 0


@dataclass
class EdgeDecision:
    """Resolved decision for one gate-output connection: buffer delay,
    emulated pads (stages 1-3 only), and the sequential unit if any."""
    xi: float = 0.0
    delta: float = 0.0
    delta_prime: float = 0.0
    unit: str = "none"   # none | flipflop | latch
    n_cycle: int = 0
    phi: float = 0.0
    buffers: int = 0     # realized buffer count for xi


@dataclass
class OptimizedCircuit:
    """A gate graph with all removable flip-flops taken out (lam anchors
    per edge) plus per-edge decisions and possibly re-sized gate delays."""
    graph: object                    # netlist.GateGraph
    decisions: dict = field(default_factory=dict)   # edge key -> EdgeDecision
    lam: dict = field(default_factory=dict)         # edge key -> anchor count
    gate_delays: dict = field(default_factory=dict)  # gate -> chosen delay

    def decision(self, e):
        return self.decisions.get(edge_key(e)) or EdgeDecision()

    def anchors(self, e):
        k = edge_key(e)
        return self.lam[k] if k in self.lam else e.w

    def delay(self, gate):
        return self.gate_delays.get(gate, self.graph.gates[gate].d)


def edge_key(e):
    return (e.src, e.dst, e.dst_pin)


def as_placed(graph):
    """Wrap a gate graph as a placement with every collapsed flip-flop
    removed (pure anchors, no units) and library-declared delays."""
    return OptimizedCircuit(graph)


# -- traditional STA --------------------------------------------------------

def traditional_min_period(c):
    """Worst register-to-register delay t_cq + gate delays + t_su, with
    all flip-flops present and no guard bands (plain path arithmetic)."""
    readers = c.readers()
    memo = {}

    def longest_from(gate):
        # longest combinational delay from this gate (inclusive) to any
        # capturing flip-flop or output
        if gate in memo:
            return memo[gate]
        memo[gate] = float("-inf")  # cycle guard; circuits are FF-broken
        best = float("-inf")
        for reader, _ in readers.get(gate, ()):
            if reader in c.gates:
                best = max(best, longest_from(reader))
            else:
                best = max(best, 0.0)
        memo[gate] = c.gates[gate].d + best
        return memo[gate]

    worst = float("-inf")
    for launch in list(c.ffs) + list(c.inputs):
        for reader, _ in readers.get(launch, ()):
            if reader in c.gates:
                worst = max(worst, longest_from(reader))
            else:
                worst = max(worst, 0.0)
    if worst == float("-inf"):
        return 0.0
    p = c.ff_params
    return p.t_cq + worst + p.t_su


# -- placed-circuit window propagation --------------------------------------

def unit_region_checks(win, dec, cfg, p, violations, key):
    """Setup/hold-style checks of the unit's input against its capture
    region; separate from window transfer because a unit's output does
    not depend on its input (loops are legal through units)."""
    T, eps = cfg.T, cfg.eps
    s, sp = win.s, win.s_prime
    if dec.unit == "flipflop":
        lo = dec.n_cycle * T + dec.phi + p.t_h * cfg.r_u
        hi = (dec.n_cycle + 1) * T + dec.phi - p.t_su * cfg.r_u
        if s > hi + eps:
            violations.append(Violation(key, "setup", hi - s))
        if sp < lo - eps:
            violations.append(Violation(key, "hold", sp - lo))
    elif dec.unit == "latch":
        start = dec.n_cycle * T + dec.phi
        opens = start + cfg.duty * T
        lo = start + p.t_h * cfg.r_u
        hi = start + T - p.t_su * cfg.r_u
        # the fast signal must land in the non-transparent region; the
        # slow one anywhere within the unit's cycle
        if sp < lo - eps:
            violations.append(Violation(key, "latch_region", sp - lo))
        if sp > opens + eps:
            violations.append(Violation(key, "latch_region", opens - sp))
        if s > hi + eps:
            violations.append(Violation(key, "latch_region", hi - s))


def _edge_window(win, dec, lam, cfg, p):
    """Window transfer of one connection: the source's sequential unit
    (if any), then the destination's input buffer, then anchor shifts."""
    T, eps = cfg.T, cfg.eps
    s = win.s
    sp = win.s_prime
    if dec.unit == "flipflop":
        s = (dec.n_cycle + 1) * T + dec.phi + p.t_cq * cfg.r_u
        sp = (dec.n_cycle + 1) * T + dec.phi + p.t_cq * cfg.r_l
    elif dec.unit == "latch":
        opens = dec.n_cycle * T + dec.phi + cfg.duty * T
        sp = opens + p.t_cq * cfg.r_l if sp <= opens + eps else sp + p.t_dq * cfg.r_l
        s = opens + p.t_cq * cfg.r_u if s <= opens + eps else s + p.t_dq * cfg.r_u
    s = s + dec.xi * cfg.r_u
    sp = sp + dec.xi * cfg.r_l
    return ArrivalWindow(s - lam * T, sp - lam * T)


def _gate_order(placed):
    """Topological order of gates over connections that carry no
    sequential unit (unit outputs do not depend on their inputs)."""
    g = placed.graph
    deps = {n: set() for n in g.gates}
    for e in g.edges:
        if e.dst in g.gates and e.src in g.gates:
            if placed.decision(e).unit == "none":
                deps[e.dst].add(e.src)
    order, ready = [], sorted(n for n, d in deps.items() if not d)
    done = set()
    while ready:
        n = ready.pop(0)
        order.append(n)
        done.add(n)
        newly = sorted(m for m, d in deps.items()
                       if m not in done and m not in ready and d <= done)
        ready = sorted(ready + newly)
    if len(order) != len(deps):
        raise ValueError("unresolved placement: combinational cycle without "
                         "a sequential delay unit")
    return order


def propagate_windows(placed, cfg):
    """Forward arrival-window propagation over the placed circuit.

    Returns (windows, violations).  The windows map holds one entry per
    node (keyed by name, after the node's own gate delay) and one per
    connection (keyed by (src, dst, pin), after buffer/unit/anchor
    processing, i.e. at the destination pin).
    """
    g = placed.graph
    p = g.circuit.ff_params
    violations = []
    windows = {}
    launch = ArrivalWindow(p.t_cq * cfg.r_u, p.t_cq * cfg.r_l)
    for t, kind in g.terminals.items():
        if kind in ("input", "bff"):
            windows[t] = launch

    # provisional outputs for unit-carrying connections (a flip-flop's
    # output never depends on its input; assume a latch is opaque until
    # its source window says otherwise), then refine to a fixed point so
    # loops through units resolve
    assumed_early = ArrivalWindow(float("-inf"), float("-inf"))
    for e in g.edges:
        if placed.decision(e).unit != "none":
            windows[edge_key(e)] = _edge_window(
                assumed_early, placed.decision(e), placed.anchors(e), cfg, p)

    def src_window(e):
        if e.src in g.gates:
            return windows.get(e.src)
        return launch

    def contributions(node):
        outs = []
        for e in g.in_edges(node):
            k = edge_key(e)
            sw = src_window(e)
            if sw is not None:
                windows[k] = _edge_window(sw, placed.decision(e),
                                          placed.anchors(e), cfg, p)
            outs.append(windows[k])
        return outs

    order = _gate_order(placed)
    sinks = [t for t, kind in g.terminals.items()
             if kind in ("output", "bff") and g.in_edges(t)]
    converged = False
    for _ in range(len(order) + 3):
        changed = False
        for n in order:
            ws = contributions(n)
            if not ws:
                raise ValueError(f"gate {n} has no driven inputs")
            d = placed.delay(n)
            w = ArrivalWindow(max(x.s for x in ws) + d * cfg.r_u,
                              min(x.s_prime for x in ws) + d * cfg.r_l)
            if windows.get(n) != w:
                windows[n] = w
                changed = True
        if not changed:
            converged = True
            break
    sink_windows = {}
    for t in sorted(sinks):
        ws = contributions(t)
        w = ArrivalWindow(max(x.s for x in ws), min(x.s_prime for x in ws))
        windows[t] = w
        sink_windows[t] = w

    for e in g.edges:
        dec = placed.decision(e)
        if dec.unit == "none":
            continue
        sw = src_window(e)
        if sw is None:
            continue
        unit_region_checks(sw, dec, cfg, p, violations, edge_key(e))
        if not converged and dec.unit == "latch":
            violations.append(Violation(edge_key(e), "latch_region", -1.0))

    violations.extend(check_boundary(sink_windows, cfg, p))

    # wave non-interference at every node, terminals included
    for node, w in windows.items():
        if not isinstance(node, str):
            continue
        gap = (w.s_prime + cfg.T) - (w.s + cfg.t_stable)
        if gap < -cfg.eps:
            violations.append(Violation(node, "non_interference", gap))

    return windows, violations


def check_boundary(windows, cfg, ff_params):
    """Setup/hold checks at boundary flip-flops (windows already shifted
    to the capture reference)."""
    out = []
    for node, w in windows.items():
        setup = cfg.T - (w.s + ff_params.t_su * cfg.r_u)
        if setup < -cfg.eps:
            out.append(Violation(node, "setup", setup))
        hold = w.s_prime - ff_params.t_h * cfg.r_u
        if hold < -cfg.eps:
            out.append(Violation(node, "hold", hold))
    return out


def format_report(placed, windows, violations):
    """Text table, one row per named node, topological order with edge
    rows attached to their destination."""
    g = placed.graph
    by_node = {}
    for v in violations:
        name = v.node if isinstance(v.node, str) else v.node[1]
        by_node.setdefault(name, []).append(v.kind)
    rows = ["node\ts\ts'\tviolations"]
    names = [t for t in sorted(g.terminals) if g.terminals[t] != "output"]
    names += [n for n in _gate_order(placed)]
    names += [t for t in sorted(g.terminals) if g.terminals[t] == "output"]
    for n in names:
        w = windows.get(n)
        if w is None:
            continue
        flags = ",".join(sorted(set(by_node.get(n, [])))) or "-"
        rows.append(f"{n}\t{w.s:.6g}\t{w.s_prime:.6g}\t{flags}")
    return "\n".join(rows) + "\n"
