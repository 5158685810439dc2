"""Circuit data model, netlist parser/serializer, and gate graph construction.

The netlist text format is line oriented (one statement per line, `#`
comments):

    circuit <name>
    clock period=<float> duty=<float>
    ffparams tcq=<float> tsu=<float> th=<float> tdq=<float>
    input <name>
    output <name> from=<node>
    ff <name> from=<node> [boundary]
    gate <name> fn=<label> delay=<float> [lib=<f1,f2,...>] in=<node>[,...]

A gate's output net shares the gate's name.  Primary inputs and outputs
are modeled as boundary flip-flops sharing the circuit's FlipFlopParams.
"""

from dataclasses import dataclass, field, replace


class NetlistError(ValueError):
    """Raised for syntax or semantic errors; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class FlipFlopParams:
    t_cq: float = 3.0
    t_su: float = 1.0
    t_h: float = 1.0
    t_dq: float = 1.0

    def validate(self, T=None):
        if min(self.t_cq, self.t_su, self.t_h, self.t_dq) < 0:
            raise ValueError("flip-flop parameters must be nonnegative")
        if T is not None and self.t_su + self.t_h >= T:
            raise ValueError(f"t_su + t_h must be < clock period {T}")


@dataclass(frozen=True)
class Config:
    """All knobs of the optimization flow.

    Defaults follow the experimental settings: guard bands 1.1/0.9,
    phases at quarter periods, delay bound starting at 7T/8 and stepping
    down by T/8, t_stable equal to one buffer delay.
    """

    T: float
    duty: float = 0.5
    r_u: float = 1.1
    r_l: float = 0.9
    phases: tuple = None
    t_stable: float = None
    alpha: float = 100.0
    beta: float = 10.0
    gamma: float = 10.0
    dth_schedule: tuple = None
    big_M: float = None
    eps: float = 1e-9
    buffer_delay: float = 1.0
    replace_threshold: float = None
    milp_nodes: int = 200000
    milp_time_ms: int = 120000

    def __post_init__(self):
        T = self.T
        if self.phases is None:
            object.__setattr__(self, "phases", (0.0, T / 4, T / 2, 3 * T / 4))
        if self.t_stable is None:
            object.__setattr__(self, "t_stable", self.buffer_delay)
        if self.dth_schedule is None:
            sched = tuple(k * T / 8 for k in range(7, 0, -1)) + (0.0,)
            object.__setattr__(self, "dth_schedule", sched)
        if self.big_M is None:
            object.__setattr__(self, "big_M", 8 * T)
        if self.replace_threshold is None:
            object.__setattr__(self, "replace_threshold", 0.5 * T)
        self.validate()

    def validate(self):
        if self.T <= 0:
            raise ValueError("clock period must be positive")
        if not (0 < self.duty < 1):
            raise ValueError("duty cycle must be in (0,1)")
        if not (self.r_u >= 1 >= self.r_l > 0):
            raise ValueError("guard bands must satisfy r_u >= 1 >= r_l > 0")
        for phi in self.phases:
            if not (0 <= phi < self.T):
                raise ValueError("phases must lie in [0, T)")
        if any(b >= a for a, b in zip(self.dth_schedule, self.dth_schedule[1:])):
            raise ValueError("dth_schedule must be strictly decreasing")
        if self.dth_schedule[-1] < 0:
            raise ValueError("dth_schedule entries must be >= 0")
        if self.big_M < 4 * self.T:
            raise ValueError("big_M must be at least 4*T")

    def with_period(self, T):
        """Same configuration at a different clock period; knobs that are
        fractions of T (phases, delay-bound schedule, big_M, replacement
        threshold) scale along, absolute delays stay put."""
        k = T / self.T
        return Config(T=T, duty=self.duty, r_u=self.r_u, r_l=self.r_l,
                      phases=tuple(p * k for p in self.phases),
                      t_stable=self.t_stable, alpha=self.alpha,
                      beta=self.beta, gamma=self.gamma,
                      dth_schedule=tuple(d * k for d in self.dth_schedule),
                      big_M=self.big_M * k, eps=self.eps,
                      buffer_delay=self.buffer_delay,
                      replace_threshold=self.replace_threshold * k,
                      milp_nodes=self.milp_nodes,
                      milp_time_ms=self.milp_time_ms)


@dataclass(frozen=True)
class Gate:
    name: str
    fn: str
    d: float
    lib: tuple
    inputs: tuple

    def validate(self):
        if self.d <= 0:
            raise ValueError(f"gate {self.name}: delay must be positive")
        if not self.lib or any(x <= 0 for x in self.lib):
            raise ValueError(f"gate {self.name}: lib must be nonempty and positive")


@dataclass(frozen=True)
class FlipFlop:
    name: str
    src: str
    boundary: bool = False


@dataclass
class Circuit:
    name: str
    T: float
    duty: float
    ff_params: FlipFlopParams
    gates: dict
    ffs: dict
    inputs: list
    outputs: list  # (name, src) pairs

    def node_kind(self, name):
        if name in self.gates:
            return "gate"
        if name in self.ffs:
            return "ff"
        if name in self.inputs:
            return "input"
        return None

    def readers(self):
        """Map driver name -> list of (reader name, input pin index)."""
        out = {}
        for g in self.gates.values():
            for i, src in enumerate(g.inputs):
                out.setdefault(src, []).append((g.name, i))
        for f in self.ffs.values():
            out.setdefault(f.src, []).append((f.name, 0))
        for name, src in self.outputs:
            out.setdefault(src, []).append((name, 0))
        return out

    def validate(self):
        self.ff_params.validate(self.T)
        names = list(self.gates) + list(self.ffs) + list(self.inputs)
        names += [n for n, _ in self.outputs]
        seen = set()
        for n in names:
            if n in seen:
                raise NetlistError(f"duplicate name {n!r}")
            seen.add(n)
        refs = []
        for g in self.gates.values():
            g.validate()
            refs.extend(g.inputs)
        refs.extend(f.src for f in self.ffs.values())
        refs.extend(src for _, src in self.outputs)
        drivers = set(self.gates) | set(self.ffs) | set(self.inputs)
        for r in refs:
            if r not in drivers:
                raise NetlistError(f"undefined node reference {r!r}")
        self._check_combinational_loops()

    def _check_combinational_loops(self):
        # DFS over gate-to-gate connections only; any cycle among gates
        # is a cycle with zero flip-flops.
        color = {}

        def visit(g, stack):
            color[g] = 1
            for src in self.gates[g].inputs:
                if src in self.gates:
                    if color.get(src) == 1:
                        cyc = stack[stack.index(src):] if src in stack else [src]
                        raise NetlistError(
                            "combinational loop through " + " -> ".join(cyc + [src]))
                    if color.get(src) is None:
                        visit(src, stack + [src])
            color[g] = 2

        for g in self.gates:
            if color.get(g) is None:
                visit(g, [g])


def _parse_kv(tokens, line):
    kv = {}
    for tok in tokens:
        if "=" not in tok:
            raise NetlistError(f"expected key=value, got {tok!r}", line)
        k, v = tok.split("=", 1)
        kv[k] = v
    return kv


def _floats(s, line):
    try:
        return tuple(float(x) for x in s.split(","))
    except ValueError:
        raise NetlistError(f"bad number list {s!r}", line)


def parse_netlist(text):
    """Parse the line format into a validated Circuit."""
    name = None
    T, duty = None, 0.5
    ffp = FlipFlopParams()
    gates, ffs, inputs, outputs = {}, {}, [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        stmt = tokens[0]
        if stmt == "circuit":
            if len(tokens) != 2:
                raise NetlistError("circuit takes exactly one name", lineno)
            name = tokens[1]
        elif stmt == "clock":
            kv = _parse_kv(tokens[1:], lineno)
            try:
                T = float(kv["period"])
                duty = float(kv.get("duty", "0.5"))
            except (KeyError, ValueError):
                raise NetlistError("clock needs period=<float> [duty=<float>]", lineno)
        elif stmt == "ffparams":
            kv = _parse_kv(tokens[1:], lineno)
            try:
                ffp = FlipFlopParams(float(kv["tcq"]), float(kv["tsu"]),
                                     float(kv["th"]), float(kv["tdq"]))
            except (KeyError, ValueError):
                raise NetlistError("ffparams needs tcq= tsu= th= tdq=", lineno)
        elif stmt == "input":
            if len(tokens) != 2:
                raise NetlistError("input takes exactly one name", lineno)
            inputs.append(tokens[1])
        elif stmt == "output":
            kv = _parse_kv(tokens[2:], lineno)
            if len(tokens) < 3 or "from" not in kv:
                raise NetlistError("output needs a name and from=<node>", lineno)
            outputs.append((tokens[1], kv["from"]))
        elif stmt == "ff":
            boundary = tokens[-1] == "boundary"
            kv_toks = tokens[2:-1] if boundary else tokens[2:]
            kv = _parse_kv(kv_toks, lineno)
            if len(tokens) < 3 or "from" not in kv:
                raise NetlistError("ff needs a name and from=<node>", lineno)
            ffs[tokens[1]] = FlipFlop(tokens[1], kv["from"], boundary)
        elif stmt == "gate":
            if len(tokens) < 3:
                raise NetlistError("gate needs a name and attributes", lineno)
            kv = _parse_kv(tokens[2:], lineno)
            try:
                d = float(kv["delay"])
                fn = kv["fn"]
                ins = tuple(kv["in"].split(","))
            except (KeyError, ValueError):
                raise NetlistError("gate needs fn= delay= in=", lineno)
            lib = tuple(sorted(_floats(kv["lib"], lineno))) if "lib" in kv else (d,)
            gates[tokens[1]] = Gate(tokens[1], fn, d, lib, ins)
        else:
            raise NetlistError(f"unknown statement {stmt!r}", lineno)
    if name is None:
        raise NetlistError("no circuit declared")
    if T is None:
        raise NetlistError("no clock declared")
    c = Circuit(name, T, duty, ffp, gates, ffs, inputs, outputs)
    c.validate()
    return c


def _fmt(x):
    return repr(round(float(x), 9))


def serialize(c):
    """Render a Circuit back to netlist text (stable statement order)."""
    out = [f"circuit {c.name}",
           f"clock period={_fmt(c.T)} duty={_fmt(c.duty)}",
           "ffparams tcq={} tsu={} th={} tdq={}".format(
               _fmt(c.ff_params.t_cq), _fmt(c.ff_params.t_su),
               _fmt(c.ff_params.t_h), _fmt(c.ff_params.t_dq))]
    for n in c.inputs:
        out.append(f"input {n}")
    for g in c.gates.values():
        line = f"gate {g.name} fn={g.fn} delay={_fmt(g.d)}"
        if g.lib != (g.d,):
            line += " lib=" + ",".join(_fmt(x) for x in g.lib)
        line += " in=" + ",".join(g.inputs)
        out.append(line)
    for f in c.ffs.values():
        line = f"ff {f.name} from={f.src}"
        if f.boundary:
            line += " boundary"
        out.append(line)
    for n, src in c.outputs:
        out.append(f"output {n} from={src}")
    return "\n".join(out) + "\n"


# -- gate graph -------------------------------------------------------------

@dataclass(frozen=True)
class GGEdge:
    """Connection in the collapsed graph; w counts removable flip-flops
    that sat on this connection, dst_pin is the input pin index at dst
    (0 for flip-flop / output data pins)."""
    src: str
    dst: str
    w: int
    dst_pin: int


@dataclass
class GateGraph:
    circuit: Circuit
    gates: dict          # name -> Gate, combinational nodes
    terminals: dict      # name -> kind in {"input", "output", "bff"}
    edges: list          # GGEdge list

    def nodes(self):
        return list(self.gates) + list(self.terminals)

    def in_edges(self, node):
        return [e for e in self.edges if e.dst == node]

    def out_edges(self, node):
        return [e for e in self.edges if e.src == node]

    def sources(self):
        """Terminals that launch signals into the region."""
        return [n for n, k in self.terminals.items() if k in ("input", "bff")]

    def sinks(self):
        """Terminals that capture signals."""
        return [n for n, k in self.terminals.items() if k in ("output", "bff")]

    def total_weight(self):
        return sum(e.w for e in self.edges)

    def topo_gates(self):
        """Gates in topological order over zero-weight edges
        (edges with w >= 1 carry at least one sequential element and do
        not constrain combinational ordering)."""
        order, state = [], {}

        def visit(n):
            state[n] = 1
            for e in self.edges:
                if e.dst == n and e.w == 0 and e.src in self.gates:
                    if state.get(e.src) == 1:
                        raise NetlistError("zero-weight cycle through " + e.src)
                    if state.get(e.src) is None:
                        visit(e.src)
            state[n] = 2
            order.append(n)

        for n in sorted(self.gates):
            if state.get(n) is None:
                visit(n)
        return order

    def validate(self):
        removable = sum(1 for f in self.circuit.ffs.values() if not f.boundary)
        if self.total_weight() != removable:
            raise NetlistError("collapsed weights do not match removable FF count")
        self.topo_gates()  # raises on a cycle with zero total weight


def to_gate_graph(c):
    """Collapse removable (non-boundary) flip-flops into edge weights."""
    gates = dict(c.gates)
    terminals = {}
    for n in c.inputs:
        terminals[n] = "input"
    for n, _ in c.outputs:
        terminals[n] = "output"
    for f in c.ffs.values():
        if f.boundary:
            terminals[f.name] = "bff"

    def resolve(ref):
        w = 0
        while ref in c.ffs and not c.ffs[ref].boundary:
            w += 1
            ref = c.ffs[ref].src
        return ref, w

    edges = []
    for g in c.gates.values():
        for pin, src in enumerate(g.inputs):
            root, w = resolve(src)
            edges.append(GGEdge(root, g.name, w, pin))
    for f in c.ffs.values():
        if f.boundary:
            root, w = resolve(f.src)
            edges.append(GGEdge(root, f.name, w, 0))
    for n, src in c.outputs:
        root, w = resolve(src)
        edges.append(GGEdge(root, n, w, 0))
    gg = GateGraph(c, gates, terminals, edges)
    gg.validate()
    return gg


def select_critical_part(c, t_spec):
    """Mark source/sink flip-flops of too-slow combinational paths.

    Returns (removable set, boundary set, included gate set).  A path is
    too slow when t_cq + gate delays + t_su exceeds t_spec.  All
    flip-flops (and I/O terminals, which are never removable) touching
    such a path are selected; gates reaching or reached by the selection
    are included.
    """
    if t_spec <= 0:
        raise ValueError("t_spec must be positive")
    p = c.ff_params
    readers = c.readers()
    removable, included = set(), set()

    def walk(node, delay, path):
        for reader, _ in readers.get(node, ()):
            if reader in c.gates:
                walk(reader, delay + c.gates[reader].d, path + [reader])
            else:
                total = p.t_cq + delay + p.t_su
                if total > t_spec + 1e-12:
                    for end in (path[0], reader):
                        if end in c.ffs:
                            removable.add(end)
                    included.update(n for n in path if n in c.gates)

    for launch in list(c.ffs) + list(c.inputs):
        walk(launch, 0.0, [launch])
    boundary = set(c.ffs) - removable
    return removable, boundary, included


def apply_selection(c, removable):
    """Return a copy of the circuit with boundary flags set so that
    exactly the given flip-flops are removable."""
    ffs = {n: replace(f, boundary=n not in removable) for n, f in c.ffs.items()}
    return Circuit(c.name, c.T, c.duty, c.ff_params, dict(c.gates), ffs,
                   list(c.inputs), list(c.outputs))
