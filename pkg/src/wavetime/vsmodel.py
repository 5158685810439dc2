"""Translate a gate graph plus configuration into the MILP formulations
of the optimization flow, and decode solutions back into placements.

Three builders share one variable layout:

* relaxed   -- pads (delta, delta') emulate sequential delay units,
* cdq       -- candidate sites get a presence binary x and the unit's
               clock/data-to-q delay, gated by a delay bound d_th,
* legalized -- candidate sites get the exact flip-flop/latch model as an
               either-or over the three insertion cases and the phases.

The arrival variable s of a gate denotes the latest arrival at the gate
output after its own pad/unit, before the anchor shifts of the outgoing
connections; s' is the earliest counterpart.
"""

from dataclasses import dataclass, field

from . import milp
from .milp import BINARY, CONTINUOUS, INTEGER, MilpModel
from .sta import EdgeDecision, OptimizedCircuit, edge_key

# small tie-break cost on unit-presence binaries so that x = 1 appears
# only where a pad is actually exercised
X_COST = 1e-6


@dataclass
class PlacementSet:
    sites: set

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, g):
        return g in self.sites


@dataclass
class ModelArtifacts:
    model: MilpModel
    graph: object
    cfg: object
    kind: str                    # relaxed | cdq | legalized
    s: dict = field(default_factory=dict)        # node -> var id
    sp: dict = field(default_factory=dict)
    d: dict = field(default_factory=dict)        # gate -> var id
    xi: dict = field(default_factory=dict)       # edge key -> var id
    delta: dict = field(default_factory=dict)    # gate -> var id
    delta_p: dict = field(default_factory=dict)
    x: dict = field(default_factory=dict)        # site -> presence binary
    site: dict = field(default_factory=dict)     # site -> legalization vars
    sites: set = field(default_factory=set)


def _base(graph, cfg, kind):
    m = MilpModel(name=kind)
    arts = ModelArtifacts(m, graph, cfg, kind)
    T = cfg.T
    lo, hi = -2 * T, 3 * T
    # terminal sources launch at a constant; only capture points (gates
    # and terminals with in-edges) get arrival variables
    sinks = {e.dst for e in graph.edges}
    for n in sorted(graph.gates) + sorted(t for t in graph.terminals
                                          if t in sinks):
        arts.s[n] = m.add_var(CONTINUOUS, lb=lo, ub=hi, name=f"s_{n}")
        arts.sp[n] = m.add_var(CONTINUOUS, lb=lo, ub=hi, name=f"sp_{n}")
    for g in sorted(graph.gates):
        lib = graph.gates[g].lib
        arts.d[g] = m.add_var(CONTINUOUS, lb=min(lib), ub=max(lib),
                              name=f"d_{g}")
    for e in graph.edges:
        arts.xi[edge_key(e)] = m.add_var(CONTINUOUS, lb=0.0, ub=3 * T,
                                         name=f"xi_{e.src}_{e.dst}_{e.dst_pin}")
    return arts


def _src_terms(arts, e):
    """(coeffs, const) for the latest/earliest arrival at the source of
    an edge: a variable for gates, the launch constant for terminals."""
    g, cfg = arts.graph, arts.cfg
    p = g.circuit.ff_params
    if e.src in g.gates:
        return (arts.s[e.src], 0.0), (arts.sp[e.src], 0.0)
    return (None, p.t_cq * cfg.r_u), (None, p.t_cq * cfg.r_l)


def _pads(arts, gates):
    m, T = arts.model, arts.cfg.T
    for g in sorted(gates):
        arts.delta[g] = m.add_var(CONTINUOUS, lb=0.0, ub=2 * T,
                                  name=f"delta_{g}")
        arts.delta_p[g] = m.add_var(CONTINUOUS, lb=0.0, ub=2 * T,
                                    name=f"deltap_{g}")
        # fast signals get at least as much padding as slow ones
        m.add_constr({arts.delta_p[g]: 1.0, arts.delta[g]: -1.0}, ">=", 0.0,
                     name=f"pad_order_{g}")


def _arrival_constraints(arts, pad_terms):
    """Per in-edge propagation constraints.  pad_terms maps a gate to a
    pair of extra linear terms (for s and s') realizing its pad/unit, or
    None when the gate's output variable is constrained elsewhere."""
    m, g, cfg = arts.model, arts.graph, arts.cfg
    T = cfg.T
    for e in g.edges:
        k = edge_key(e)
        dst_is_gate = e.dst in g.gates
        terms = pad_terms.get(e.dst) if dst_is_gate else ({}, {})
        if terms is None:
            continue
        add_s, add_sp = terms
        (sv, sc), (spv, spc) = _src_terms(arts, e)
        cs = {arts.s[e.dst]: 1.0, arts.xi[k]: -cfg.r_u}
        csp = {arts.sp[e.dst]: 1.0, arts.xi[k]: -cfg.r_l}
        if sv is not None:
            cs[sv] = cs.get(sv, 0.0) - 1.0
            csp[spv] = csp.get(spv, 0.0) - 1.0
        if dst_is_gate:
            cs[arts.d[e.dst]] = cs.get(arts.d[e.dst], 0.0) - cfg.r_u
            csp[arts.d[e.dst]] = csp.get(arts.d[e.dst], 0.0) - cfg.r_l
        for v, a in add_s.items():
            cs[v] = cs.get(v, 0.0) - a
        for v, a in add_sp.items():
            csp[v] = csp.get(v, 0.0) - a
        m.add_constr(cs, ">=", sc - e.w * T,
                     name=f"arr_{e.src}_{e.dst}_{e.dst_pin}")
        m.add_constr(csp, "<=", spc - e.w * T,
                     name=f"arrp_{e.src}_{e.dst}_{e.dst_pin}")


def _loop_order_constraints(arts, gates):
    """s'_u + delta' <= s_u + delta per in-edge: forces a sequential unit
    somewhere on every zero-weight cycle created by removal."""
    m, g = arts.model, arts.graph
    for e in g.edges:
        if e.dst in gates:
            (sv, sc), (spv, spc) = _src_terms(arts, e)
            c = {arts.delta_p[e.dst]: 1.0, arts.delta[e.dst]: -1.0}
            if sv is not None:
                c[spv] = c.get(spv, 0.0) + 1.0
                c[sv] = c.get(sv, 0.0) - 1.0
            m.add_constr(c, "<=", sc - spc,
                         name=f"order_{e.src}_{e.dst}_{e.dst_pin}")


def _stability(arts, extra=()):
    m, cfg = arts.model, arts.cfg
    for n in sorted(arts.s):
        m.add_constr({arts.s[n]: 1.0, arts.sp[n]: -1.0}, "<=",
                     cfg.T - cfg.t_stable, name=f"stable_{n}")
    for name, s, sp in extra:
        m.add_constr({s: 1.0, sp: -1.0}, "<=", cfg.T - cfg.t_stable,
                     name=f"stable_{name}")


def _boundary(arts):
    m, g, cfg = arts.model, arts.graph, arts.cfg
    p = g.circuit.ff_params
    for t, kind in sorted(g.terminals.items()):
        if kind in ("output", "bff") and g.in_edges(t):
            m.add_constr({arts.s[t]: 1.0}, "<=", cfg.T - p.t_su * cfg.r_u,
                         name=f"setup_{t}")
            m.add_constr({arts.sp[t]: 1.0}, ">=", p.t_h * cfg.r_u,
                         name=f"hold_{t}")


def _objective(arts, pad_gates):
    cfg = arts.cfg
    obj = {}
    for g in pad_gates:
        obj[arts.delta_p[g]] = obj.get(arts.delta_p[g], 0.0) + \
            cfg.alpha + cfg.beta
        obj[arts.delta[g]] = obj.get(arts.delta[g], 0.0) - cfg.alpha
    for k, v in arts.xi.items():
        obj[v] = obj.get(v, 0.0) + cfg.beta
    for g, v in arts.d.items():
        obj[v] = obj.get(v, 0.0) - cfg.gamma
    for g, v in arts.x.items():
        obj[v] = obj.get(v, 0.0) + X_COST
    arts.model.set_objective(obj, "min")


def build_relaxed_model(graph, cfg):
    """Stage-1 formulation: every gate output carries emulated pads."""
    arts = _base(graph, cfg, "relaxed")
    gates = set(graph.gates)
    _pads(arts, gates)
    # pads scale with the guard bands so an equal pair (delta = delta')
    # is exactly realizable as a buffer chain later
    pad_terms = {g: ({arts.delta[g]: cfg.r_u}, {arts.delta_p[g]: cfg.r_l})
                 for g in gates}
    _arrival_constraints(arts, pad_terms)
    _loop_order_constraints(arts, gates)
    _stability(arts)
    _boundary(arts)
    _objective(arts, sorted(gates))
    return arts


def build_cdq_model(graph, cfg, S, d_th):
    """Stage-2 formulation: sites in S additionally model the inherent
    clock/data-to-q delay of a unit, present only when x = 1, and any
    exercised site must pad at least d_th."""
    sites = set(S.sites if isinstance(S, PlacementSet) else S)
    arts = _base(graph, cfg, "cdq")
    arts.sites = sites
    gates = set(graph.gates)
    _pads(arts, gates)
    m = arts.model
    t_cdq = graph.circuit.ff_params.t_cq
    pad_terms = {}
    for g in sorted(gates):
        if g in sites:
            x = m.add_var(BINARY, name=f"x_{g}")
            arts.x[g] = x
            z = m.linearize_product(x, arts.delta[g], name=f"xd_{g}")
            zp = m.linearize_product(x, arts.delta_p[g], name=f"xdp_{g}")
            pad_terms[g] = ({z: cfg.r_u, x: t_cdq * cfg.r_u},
                            {zp: cfg.r_l, x: t_cdq * cfg.r_l})
            m.add_indicator(x, {arts.delta_p[g]: 1.0, arts.delta[g]: -1.0},
                            d_th, cfg.big_M)
        else:
            pad_terms[g] = ({arts.delta[g]: cfg.r_u},
                            {arts.delta_p[g]: cfg.r_l})
    _arrival_constraints(arts, pad_terms)
    _loop_order_constraints(arts, gates)
    _stability(arts)
    _boundary(arts)
    _objective(arts, sorted(gates - sites))
    return arts


def build_legalization_model(graph, cfg, S_d):
    """Stage-3 formulation: sites get the exact unit model (Case 1 no
    unit / Case 2 flip-flop / Case 3 latch) over the configured phases;
    everything else keeps the relaxed pads."""
    sites = set(S_d.sites if isinstance(S_d, PlacementSet) else S_d)
    arts = _base(graph, cfg, "legalized")
    arts.sites = sites
    gates = set(graph.gates)
    relaxed = gates - sites
    _pads(arts, relaxed)
    m = arts.model
    T = cfg.T
    p = graph.circuit.ff_params
    pad_terms = {g: ({arts.delta[g]: cfg.r_u}, {arts.delta_p[g]: cfg.r_l})
                 for g in relaxed}
    extra_stable = []
    for g in sorted(sites):
        # w: gate output before the unit; the site's s variable is the
        # post-unit point t
        sw = m.add_var(CONTINUOUS, lb=-2 * T, ub=3 * T, name=f"sw_{g}")
        swp = m.add_var(CONTINUOUS, lb=-2 * T, ub=3 * T, name=f"swp_{g}")
        st, stp = arts.s[g], arts.sp[g]
        N = m.add_var(INTEGER, lb=-2, ub=2, name=f"N_{g}")
        phase_sel = [m.add_var(BINARY, name=f"ph_{g}_{i}")
                     for i in range(len(cfg.phases))]
        m.add_constr({v: 1.0 for v in phase_sel}, "=", 1.0,
                     name=f"one_phase_{g}")
        # PHI = sum(phi_k * y_k); REF = N*T + PHI as linear coefficients
        phi = {v: ph for v, ph in zip(phase_sel, cfg.phases)}

        def ref(vec, scale=1.0):
            out = dict(vec)
            out[N] = out.get(N, 0.0) + scale * T
            for v, ph in phi.items():
                out[v] = out.get(v, 0.0) + scale * ph
            return out

        region = [
            # N*T + PHI + t_h*r_u <= s_w, s'_w <= (N+1)*T + PHI - t_su*r_u
            (ref({sw: -1.0}), "<=", -p.t_h * cfg.r_u),
            (ref({swp: -1.0}), "<=", -p.t_h * cfg.r_u),
            (ref({sw: -1.0}), ">=", -T + p.t_su * cfg.r_u),
            (ref({swp: -1.0}), ">=", -T + p.t_su * cfg.r_u),
        ]
        case1 = [
            ({st: 1.0, sw: -1.0}, ">=", 0.0),
            ({stp: 1.0, swp: -1.0}, "<=", 0.0),
        ]
        case2 = region + [
            # s_t pinned to the next active edge plus clock-to-q
            (ref({st: -1.0}), "<=", -T - p.t_cq * cfg.r_u),
            (ref({stp: -1.0}), ">=", -T - p.t_cq * cfg.r_l),
        ]
        case3 = region + [
            # fast signal confined to the non-transparent part
            (ref({swp: -1.0}), ">=", -cfg.duty * T),
            # latest leaves when the latch opens, or passes transparently
            (ref({st: -1.0}), "<=", -cfg.duty * T - p.t_cq * cfg.r_u),
            ({st: 1.0, sw: -1.0}, ">=", p.t_dq * cfg.r_u),
            (ref({stp: -1.0}), ">=", -cfg.duty * T - p.t_cq * cfg.r_l),
        ]
        sels = m.add_either_or([case1, case2, case3], cfg.big_M)
        arts.site[g] = {"sw": sw, "swp": swp, "N": N,
                        "phases": phase_sel, "cases": sels}
        # in-edge propagation lands on w instead of t
        pad_terms[g] = None
        for e in graph.edges:
            if e.dst != g:
                continue
            k = edge_key(e)
            (sv, sc), (spv, spc) = _src_terms(arts, e)
            cs = {sw: 1.0, arts.xi[k]: -cfg.r_u}
            csp = {swp: 1.0, arts.xi[k]: -cfg.r_l}
            if sv is not None:
                cs[sv] = cs.get(sv, 0.0) - 1.0
                csp[spv] = csp.get(spv, 0.0) - 1.0
            cs[arts.d[g]] = cs.get(arts.d[g], 0.0) - cfg.r_u
            csp[arts.d[g]] = csp.get(arts.d[g], 0.0) - cfg.r_l
            m.add_constr(cs, ">=", sc - e.w * T,
                         name=f"arr_{e.src}_{e.dst}_{e.dst_pin}")
            m.add_constr(csp, "<=", spc - e.w * T,
                         name=f"arrp_{e.src}_{e.dst}_{e.dst_pin}")
        extra_stable.append((f"w_{g}", sw, swp))
    _arrival_constraints(arts, pad_terms)
    _loop_order_constraints(arts, relaxed)
    _stability(arts, extra=extra_stable)
    _boundary(arts)
    _objective(arts, sorted(relaxed))
    return arts


def decode_solution(arts, sol, pad_eps=1e-6):
    """Turn solver values into per-edge decisions plus the set of
    locations whose pads indicate (or realize) a sequential unit."""
    if sol.status not in ("optimal", "feasible"):
        raise ValueError(f"cannot decode a {sol.status} solution")
    g, cfg = arts.graph, arts.cfg
    vals = sol.values
    for vid, var in enumerate(arts.model.vars):
        if var.kind != CONTINUOUS and abs(vals[vid] - round(vals[vid])) > 1e-5:
            raise AssertionError(f"fractional integer value for {var.name}")
    decisions = {}
    gate_delays = {}
    for name, vid in arts.d.items():
        gate_delays[name] = vals[vid]
    hot = set()
    for name in arts.delta:
        if vals[arts.delta_p[name]] - vals[arts.delta[name]] > pad_eps:
            hot.add(name)
    for name, x in arts.x.items():
        if vals[x] > 0.5:
            hot.add(name)
    unit_info = {}
    for name, sv in arts.site.items():
        case = [i for i, c in enumerate(sv["cases"]) if vals[c] > 0.5][0]
        if case == 0:
            continue
        phase_i = [i for i, y in enumerate(sv["phases"]) if vals[y] > 0.5][0]
        unit_info[name] = ("flipflop" if case == 1 else "latch",
                           int(round(vals[sv["N"]])), cfg.phases[phase_i])
        hot.add(name)
    for e in g.edges:
        k = edge_key(e)
        dec = EdgeDecision(xi=max(0.0, vals[arts.xi[k]]))
        src = e.src
        if src in unit_info:
            kind, n_cycle, phi = unit_info[src]
            dec.unit, dec.n_cycle, dec.phi = kind, n_cycle, phi
        if src in arts.delta:
            dec.delta = vals[arts.delta[src]]
            dec.delta_prime = vals[arts.delta_p[src]]
        decisions[k] = dec
    placed = OptimizedCircuit(g, decisions=decisions,
                              gate_delays=gate_delays)
    return placed, PlacementSet(hot)
