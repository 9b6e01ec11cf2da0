"""Deterministic fixed-step Euler engine for stock/flow models.

A model is a collection of named elements (constants, piecewise-linear
tables, auxiliaries, stocks, first-order smooths and third-order delays).
Stateless elements are evaluated every step in a frozen topological order;
stateful elements read their previous-step state and advance at step end,
so a run is bit-reproducible for identical inputs.

For speed the stateless pass is compiled once per model into a single
Python function; a slower tree-walking evaluator is kept both as the
independent oracle in tests and to pin the offending element when a step
fails (e.g. division by zero).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union


# --------------------------------------------------------------------------
# errors

class ModelError(Exception):
    """Base class for model construction and runtime errors."""


class UnresolvedReference(ModelError):
    def __init__(self, name: str, element: str):
        self.name = name
        self.element = element
        super().__init__(f"element '{element}' references unknown name '{name}'")


class DuplicateName(ModelError):
    def __init__(self, name: str, lines: Sequence[int] = ()):
        self.name = name
        self.lines = tuple(lines)
        where = f" (lines {', '.join(map(str, lines))})" if lines else ""
        super().__init__(f"duplicate element name '{name}'{where}")


class AlgebraicLoop(ModelError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("algebraic loop: " + " -> ".join(self.cycle))


class InitializationLoop(ModelError):
    """A smooth/delay3 initial value depends on itself at t0.

    Break the loop by giving the stateful element an explicit `init`.
    """

    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__(
            "initialization loop: " + " -> ".join(self.cycle)
            + " (add an explicit init to one of the stateful elements)"
        )


class RuntimeEvalError(ModelError):
    def __init__(self, time: float, element: str, cause: str):
        self.time = time
        self.element = element
        self.cause = cause
        super().__init__(f"at t={time}, element '{element}': {cause}")


class OverrideUnknown(ModelError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"override targets unknown constant '{name}'")


class NonpositiveAveragingTime(ModelError):
    pass


class NonpositiveDelayTime(ModelError):
    pass


class BadTable(ModelError):
    pass


# --------------------------------------------------------------------------
# expressions

@dataclass(frozen=True)
class Lit:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Lit, Var, Neg, BinOp, Call]

#: builtin name -> arity
BUILTINS = {
    "min": 2,
    "max": 2,
    "exp": 1,
    "ln": 1,
    "step": 2,   # step(height, start_time)
    "clip": 4,   # clip(val_if_true, val_if_false, t, threshold)
    "lookup": 2, # lookup(table_name, arg)
}

#: the simulation clock, readable from any expression
TIME = "time"


def expr_refs(expr: Expr) -> set:
    """All names referenced by an expression, including lookup targets."""
    out: set = set()
    _collect_refs(expr, out)
    return out


def _collect_refs(expr: Expr, out: set) -> None:
    if isinstance(expr, Var):
        out.add(expr.name)
    elif isinstance(expr, Neg):
        _collect_refs(expr.operand, out)
    elif isinstance(expr, BinOp):
        _collect_refs(expr.left, out)
        _collect_refs(expr.right, out)
    elif isinstance(expr, Call):
        if expr.func == "lookup":
            table = expr.args[0]
            if not isinstance(table, Var):
                raise ModelError("lookup() first argument must be a table name")
            out.add(table.name)
            _collect_refs(expr.args[1], out)
        else:
            for a in expr.args:
                _collect_refs(a, out)


# --------------------------------------------------------------------------
# table functions

class TableFunction:
    """Piecewise-linear lookup with clamp-to-endpoint out-of-bounds policy.

    Out-of-bounds queries are not errors: the endpoint value is returned
    and, when a warning sink is supplied, a LOOKUP_BOUNDS record is
    appended (one per query).
    """

    __slots__ = ("xs", "ys", "warnings_emitted")

    def __init__(self, knots: Iterable[tuple]):
        knots = [(float(x), float(y)) for x, y in knots]
        if len(knots) < 2:
            raise BadTable("table needs at least 2 knots")
        xs = [x for x, _ in knots]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise BadTable(f"table x values must be strictly increasing: {xs}")
        self.xs = tuple(xs)
        self.ys = tuple(y for _, y in knots)
        self.warnings_emitted = 0

    @property
    def knots(self) -> tuple:
        return tuple(zip(self.xs, self.ys))

    def __call__(self, x: float, warn: Optional[Callable[[str], None]] = None) -> float:
        xs, ys = self.xs, self.ys
        if x <= xs[0]:
            if x < xs[0]:
                self.warnings_emitted += 1
                if warn is not None:
                    warn(f"input {x!r} below table range [{xs[0]!r}, {xs[-1]!r}]")
            return ys[0]
        if x >= xs[-1]:
            if x > xs[-1]:
                self.warnings_emitted += 1
                if warn is not None:
                    warn(f"input {x!r} above table range [{xs[0]!r}, {xs[-1]!r}]")
            return ys[-1]
        # binary search for the bracketing segment
        lo, hi = 0, len(xs) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xs[mid] <= x:
                lo = mid
            else:
                hi = mid
        x0, x1 = xs[lo], xs[lo + 1]
        y0, y1 = ys[lo], ys[lo + 1]
        value = y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        # rounding in the lerp can leave the segment's range by an ulp
        if y0 <= y1:
            return min(max(value, y0), y1)
        return min(max(value, y1), y0)

    def __eq__(self, other):
        return isinstance(other, TableFunction) and self.knots == other.knots

    def __repr__(self):
        return f"TableFunction({list(self.knots)!r})"


def lookup_eval(table: TableFunction, x: float,
                warnings: Optional[list] = None,
                time: float = 0.0, element: str = "") -> float:
    """Evaluate a table, recording a LOOKUP_BOUNDS warning on clamping."""
    warn = None
    if warnings is not None:
        warn = lambda msg: warnings.append((time, element, "LOOKUP_BOUNDS", msg))
    return table(x, warn)


# --------------------------------------------------------------------------
# stateful primitives

def smooth_eval(state: float, input: float, averaging_time: float, dt: float):
    """One Euler step of first-order exponential smoothing.

    Returns ``(new_state, output)`` with ``output = new_state``.
    """
    if averaging_time <= 0:
        raise NonpositiveAveragingTime(f"averaging_time={averaging_time}")
    new = state + dt * (input - state) / averaging_time
    return new, new


def delay3_eval(state, input: float, delay_time: float, dt: float):
    """One Euler step of a third-order material delay.

    ``state`` holds the three stage levels. The returned output is the
    outflow used during this step (computed from the incoming state), so
    total inflow minus total outflow telescopes exactly to the change in
    stored material.
    """
    if delay_time <= 0:
        raise NonpositiveDelayTime(f"delay_time={delay_time}")
    dl = delay_time / 3.0
    s1, s2, s3 = state
    r1 = s1 / dl
    r2 = s2 / dl
    out = s3 / dl
    new = (s1 + dt * (input - r1), s2 + dt * (r1 - r2), s3 + dt * (r2 - out))
    return new, out


def delay3_steady_state(input: float, delay_time: float):
    """Stage levels that make a delay3 output equal its input immediately."""
    if delay_time <= 0:
        raise NonpositiveDelayTime(f"delay_time={delay_time}")
    dl = delay_time / 3.0
    return (input * dl, input * dl, input * dl)


# --------------------------------------------------------------------------
# elements and model spec

STATELESS_KINDS = ("constant", "table", "auxiliary")
STATEFUL_KINDS = ("stock", "smooth", "delay3")


@dataclass(frozen=True)
class Element:
    name: str
    kind: str
    # constant
    value: Optional[float] = None
    # table
    table: Optional[TableFunction] = None
    input: Optional[Expr] = None          # table input, smooth/delay3 input
    # auxiliary
    expr: Optional[Expr] = None
    # stock
    init: Optional[Expr] = None           # also optional on smooth/delay3
    inflow: Optional[Expr] = None
    outflow: Optional[Expr] = None
    # smooth / delay3
    time_const: Optional[Expr] = None
    # metadata
    unit: str = ""
    sector: str = ""
    line: int = field(default=0, compare=False)

    @property
    def stateless(self) -> bool:
        return self.kind in STATELESS_KINDS

    def refs(self) -> set:
        """Names referenced when evaluating this element each step."""
        out: set = set()
        for e in self._step_exprs():
            out |= expr_refs(e)
        return out

    def _step_exprs(self):
        if self.kind == "table":
            return (self.input,)
        if self.kind == "auxiliary":
            return (self.expr,)
        if self.kind == "stock":
            return (self.inflow, self.outflow)
        if self.kind in ("smooth", "delay3"):
            return (self.input, self.time_const)
        return ()

    def init_refs(self) -> set:
        if self.kind == "stock":
            return expr_refs(self.init)
        if self.kind in ("smooth", "delay3"):
            if self.init is not None:
                return expr_refs(self.init)
            return expr_refs(self.input) | expr_refs(self.time_const)
        return set()


@dataclass(frozen=True)
class ModelSpec:
    """Validated, immutable collection of named model elements."""

    elements: Mapping[str, Element]
    name: str = ""
    version: str = "0.0.0"
    comments: tuple = ()
    eval_order: tuple = ()
    init_order: tuple = ()

    def element(self, name: str) -> Element:
        return self.elements[name]

    def stateless(self):
        return (e for e in self.elements.values() if e.stateless)

    def stateful(self):
        return (e for e in self.elements.values() if not e.stateless)

    def with_elements(self, elements: Mapping[str, Element]) -> "ModelSpec":
        """Replacement constructor; re-runs validation."""
        return build_dependency_graph(
            ModelSpec(elements=dict(elements), name=self.name,
                      version=self.version, comments=self.comments))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (dict(self.elements) == dict(other.elements)
                and self.name == other.name and self.version == other.version)


@dataclass(frozen=True)
class SimConfig:
    t_start: float = 1900.0
    t_end: float = 2100.0
    dt: float = 0.5
    overrides: Mapping[str, float] = field(default_factory=dict)
    record_all: bool = True

    def n_steps(self) -> int:
        if self.t_end <= self.t_start:
            raise ModelError("t_end must be greater than t_start")
        if self.dt <= 0:
            raise ModelError("dt must be positive")
        ratio = (self.t_end - self.t_start) / self.dt
        n = round(ratio)
        if abs(ratio - n) > 1e-9:
            raise ModelError(
                f"(t_end - t_start)/dt = {ratio} is not an integer")
        return n


@dataclass
class RunResult:
    times: list
    series: dict                      # name -> list of values, len == len(times)
    warnings: list                    # (time, element, kind, message)
    config_echo: SimConfig
    scenario: str = ""

    def at(self, name: str, year: float) -> float:
        """Value of a series at the grid point nearest to ``year``."""
        cfg = self.config_echo
        idx = round((year - cfg.t_start) / cfg.dt)
        if not 0 <= idx < len(self.times):
            raise ModelError(f"year {year} outside run range")
        return self.series[name][idx]


# --------------------------------------------------------------------------
# validation / dependency graph

def _toposort(nodes: Sequence[str], deps: Mapping[str, set]) -> list:
    """Deterministic Kahn topological sort, lexicographic tie-break."""
    nodeset = set(nodes)
    indeg = {n: 0 for n in nodes}
    users: dict = {n: [] for n in nodes}
    for n in nodes:
        for d in deps[n]:
            if d in nodeset:
                indeg[n] += 1
                users[d].append(n)
    ready = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for u in users[n]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    if len(order) < len(nodes):
        raise AlgebraicLoop(_find_cycle(nodeset - set(order), deps))
    return order


def _find_cycle(remaining: set, deps: Mapping[str, set]) -> list:
    """Walk dependencies inside the unresolved subgraph until a repeat."""
    start = min(remaining)
    path, seen = [], {}
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = min(d for d in deps[node] if d in remaining)
    return path[seen[node]:] + [node]


def build_dependency_graph(spec: ModelSpec) -> ModelSpec:
    """Validate references, reject algebraic loops, freeze evaluation order.

    Returns a new spec with ``eval_order`` (stateless elements) and
    ``init_order`` (t0 initialization over stateless plus default-
    initialized stateful elements) populated.
    """
    elements = dict(spec.elements)
    known = set(elements) | {TIME}
    for el in elements.values():
        for ref in el.refs() | el.init_refs():
            if ref not in known:
                raise UnresolvedReference(ref, el.name)
        if el.kind == "table" or (el.kind == "auxiliary"):
            _check_lookup_targets(el, elements)
    # stock init expressions may only reach constants and other stocks,
    # so initial conditions never depend on the first stateless pass
    for el in elements.values():
        if el.kind == "stock":
            for ref in el.init_refs():
                if ref != TIME and elements[ref].kind not in ("constant", "stock"):
                    raise ModelError(
                        f"stock '{el.name}' init references '{ref}' "
                        "(only constants and stocks are allowed)")
        if el.kind in ("smooth", "delay3") and el.init is not None:
            for ref in expr_refs(el.init):
                if ref != TIME and elements[ref].kind not in ("constant", "stock"):
                    raise ModelError(
                        f"{el.kind} '{el.name}' init references '{ref}' "
                        "(only constants and stocks are allowed)")

    stateless = sorted(n for n, e in elements.items() if e.stateless)
    deps = {n: elements[n].refs() - {TIME} for n in stateless}
    try:
        eval_order = _toposort(stateless, deps)
    except AlgebraicLoop:
        raise
    # t0 order: default-initialized stateful elements behave like
    # auxiliaries of their input expression
    init_nodes = list(stateless)
    init_deps = dict(deps)
    for n, el in elements.items():
        if not el.stateless and el.kind != "stock" and el.init is None:
            init_nodes.append(n)
            init_deps[n] = {
                r for r in el.init_refs() - {TIME}
                if elements[r].stateless
                or (elements[r].kind in ("smooth", "delay3")
                    and elements[r].init is None)
            }
    init_nodes.sort()
    try:
        init_order = _toposort(init_nodes, init_deps)
    except AlgebraicLoop as exc:
        raise InitializationLoop(exc.cycle) from None

    return ModelSpec(elements=elements, name=spec.name, version=spec.version,
                     comments=spec.comments,
                     eval_order=tuple(eval_order), init_order=tuple(init_order))


def _check_lookup_targets(el: Element, elements: Mapping[str, Element]) -> None:
    def walk(expr):
        if isinstance(expr, Call):
            if expr.func == "lookup":
                name = expr.args[0].name
                target = elements.get(name)
                if target is not None and target.kind != "table":
                    raise ModelError(
                        f"element '{el.name}': lookup target '{name}' is not a table")
                walk(expr.args[1])
            else:
                for a in expr.args:
                    walk(a)
        elif isinstance(expr, Neg):
            walk(expr.operand)
        elif isinstance(expr, BinOp):
            walk(expr.left)
            walk(expr.right)

    for e in el._step_exprs():
        if e is not None:
            walk(e)


# --------------------------------------------------------------------------
# interpreted evaluation (oracle / error localization)

def eval_expr(expr: Expr, env: Mapping[str, float], time: float,
              tables: Mapping[str, TableFunction],
              warn: Optional[Callable] = None) -> float:
    """Tree-walking evaluator mirroring the compiled code operation-for-
    operation, so results are bit-identical to the compiled pass."""
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        if expr.name == TIME:
            return time
        return env[expr.name]
    if isinstance(expr, Neg):
        return -eval_expr(expr.operand, env, time, tables, warn)
    if isinstance(expr, BinOp):
        a = eval_expr(expr.left, env, time, tables, warn)
        b = eval_expr(expr.right, env, time, tables, warn)
        op = expr.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        if op == "^":
            return _pow(a, b)
        raise ModelError(f"unknown operator {op!r}")
    if isinstance(expr, Call):
        f = expr.func
        if f == "lookup":
            table = tables[expr.args[0].name]
            x = eval_expr(expr.args[1], env, time, tables, warn)
            w = None if warn is None else (lambda msg: warn(expr.args[0].name, msg))
            return table(x, w)
        args = [eval_expr(a, env, time, tables, warn) for a in expr.args]
        if f == "min":
            return min(args[0], args[1])
        if f == "max":
            return max(args[0], args[1])
        if f == "exp":
            return math.exp(args[0])
        if f == "ln":
            return math.log(args[0])
        if f == "step":
            return args[0] if time >= args[1] else 0.0
        if f == "clip":
            return args[0] if args[2] >= args[3] else args[1]
        raise ModelError(f"unknown builtin {f!r}")
    raise ModelError(f"bad expression node {expr!r}")


def _pow(a: float, b: float) -> float:
    r = a ** b
    if isinstance(r, complex):
        raise ValueError(f"complex result from {a} ^ {b}")
    return r


# --------------------------------------------------------------------------
# compilation

class _RunContext:
    """Per-run mutable state visible to compiled table closures."""

    __slots__ = ("time", "warnings")

    def __init__(self):
        self.time = 0.0
        self.warnings = []


def _compile_expr(expr: Expr, slot: Mapping[str, int],
                  table_fn: Mapping[str, str]) -> str:
    if isinstance(expr, Lit):
        return repr(expr.value)
    if isinstance(expr, Var):
        if expr.name == TIME:
            return "t"
        return f"v[{slot[expr.name]}]"
    if isinstance(expr, Neg):
        return f"(-{_compile_expr(expr.operand, slot, table_fn)})"
    if isinstance(expr, BinOp):
        a = _compile_expr(expr.left, slot, table_fn)
        b = _compile_expr(expr.right, slot, table_fn)
        if expr.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {expr.op} {b})"
    if isinstance(expr, Call):
        f = expr.func
        if f == "lookup":
            arg = _compile_expr(expr.args[1], slot, table_fn)
            return f"{table_fn[expr.args[0].name]}({arg}, ctx)"
        args = [_compile_expr(a, slot, table_fn) for a in expr.args]
        if f in ("min", "max"):
            return f"{f}({args[0]}, {args[1]})"
        if f == "exp":
            return f"_exp({args[0]})"
        if f == "ln":
            return f"_log({args[0]})"
        if f == "step":
            return f"(({args[0]}) if t >= ({args[1]}) else 0.0)"
        if f == "clip":
            return f"(({args[0]}) if ({args[2]}) >= ({args[3]}) else ({args[1]}))"
    raise ModelError(f"bad expression node {expr!r}")


class CompiledModel:
    """A model spec lowered to one Python function per step.

    ``slot`` maps element name to its index in the value vector; hidden
    slots at the tail of the vector hold flow/input/time-constant values
    needed to advance stateful elements.
    """

    def __init__(self, spec: ModelSpec):
        if not spec.eval_order and any(True for _ in spec.stateless()):
            raise ModelError("spec not validated; run build_dependency_graph first")
        self.spec = spec
        names = sorted(spec.elements)
        self.slot = {n: i for i, n in enumerate(names)}
        self.names = names
        self.n_named = len(names)

        table_fn: dict = {}
        glb = {"_exp": math.exp, "_log": math.log, "_pow": _pow,
               "min": min, "max": max, "__builtins__": {}}
        for n in names:
            el = spec.elements[n]
            if el.kind == "table":
                fname = f"_tbl_{self.slot[n]}"
                glb[fname] = _make_table_closure(el.table, n)
                table_fn[n] = fname

        lines = ["def _step(v, t, ctx):"]
        for n in spec.eval_order:
            el = spec.elements[n]
            if el.kind == "constant":
                continue  # constants are filled once before the run
            if el.kind == "table":
                arg = _compile_expr(el.input, self.slot, table_fn)
                lines.append(f"    v[{self.slot[n]}] = {table_fn[n]}({arg}, ctx)")
            else:
                rhs = _compile_expr(el.expr, self.slot, table_fn)
                lines.append(f"    v[{self.slot[n]}] = {rhs}")

        # hidden slots: stock flows, stateful inputs and time constants
        self.hidden: dict = {}
        idx = self.n_named
        hidden_lines = []
        for n in sorted(spec.elements):
            el = spec.elements[n]
            if el.stateless:
                continue
            if el.kind == "stock":
                exprs = {"inflow": el.inflow, "outflow": el.outflow}
            else:
                exprs = {"input": el.input, "time_const": el.time_const}
            slots = {}
            for key, e in exprs.items():
                rhs = _compile_expr(e, self.slot, table_fn)
                hidden_lines.append(f"    v[{idx}] = {rhs}")
                slots[key] = idx
                idx += 1
            self.hidden[n] = slots
        lines += hidden_lines
        lines.append("    return None")
        self.n_slots = idx
        self.source = "\n".join(lines)
        ns: dict = {}
        exec(compile(self.source, "<model>", "exec"), glb, ns)
        self.step_fn = ns["_step"]


def _make_table_closure(table: TableFunction, element: str):
    def call(x, ctx, _table=table, _element=element):
        t = ctx.time
        warnings = ctx.warnings
        return _table(x, lambda msg: warnings.append((t, _element, "LOOKUP_BOUNDS", msg)))
    return call


# --------------------------------------------------------------------------
# integration

def integrate_run(spec: ModelSpec, config: SimConfig = SimConfig(),
                  compiled: Optional[CompiledModel] = None) -> RunResult:
    """Run the model forward with explicit Euler at fixed step ``config.dt``.

    For every stock S and step n, ``S[n+1] = S[n] + dt*(inflow - outflow)``
    exactly, with flows evaluated from current-step values. Output is
    bit-identical across repeated runs with identical inputs.
    """
    n_steps = config.n_steps()
    if compiled is None:
        compiled = CompiledModel(spec)
    elements = spec.elements
    slot = compiled.slot
    dt = config.dt
    ctx = _RunContext()
    v = [0.0] * compiled.n_slots

    # constants, with overrides
    for name, value in config.overrides.items():
        el = elements.get(name)
        if el is None or el.kind != "constant":
            raise OverrideUnknown(name)
    for name, el in elements.items():
        if el.kind == "constant":
            v[slot[name]] = float(config.overrides.get(name, el.value))

    tables = {n: e.table for n, e in elements.items() if e.kind == "table"}
    t0 = config.t_start
    env = _EnvView(v, slot)

    def warn_sink(element, msg):
        ctx.warnings.append((ctx.time, element, "LOOKUP_BOUNDS", msg))

    ctx.time = t0
    # initial conditions: stocks first (constants/stocks only), then the
    # interleaved stateless + default-init stateful pass
    delay_states: dict = {}
    try:
        for name in _stock_init_order(spec):
            el = elements[name]
            v[slot[name]] = eval_expr(el.init, env, t0, tables)
        for name in spec.init_order:
            el = elements[name]
            if el.kind == "constant":
                continue
            v[slot[name]] = _eval_element_step(el, env, t0, tables,
                                               lambda el_name, msg: warn_sink(name, msg))
            if el.kind == "smooth":
                pass  # state is the recorded value itself
            elif el.kind == "delay3":
                tc = eval_expr(el.time_const, env, t0, tables)
                delay_states[name] = delay3_steady_state(v[slot[name]], tc)
        for name, el in sorted(elements.items()):
            if el.kind in ("smooth", "delay3") and el.init is not None:
                init = eval_expr(el.init, env, t0, tables)
                v[slot[name]] = init
                if el.kind == "delay3":
                    tc = eval_expr(el.time_const, env, t0, tables)
                    delay_states[name] = delay3_steady_state(init, tc)
        # hidden slots at t0
        for name, slots in compiled.hidden.items():
            el = elements[name]
            if el.kind == "stock":
                v[slots["inflow"]] = eval_expr(el.inflow, env, t0, tables, warn_sink)
                v[slots["outflow"]] = eval_expr(el.outflow, env, t0, tables, warn_sink)
            else:
                v[slots["input"]] = eval_expr(el.input, env, t0, tables, warn_sink)
                v[slots["time_const"]] = eval_expr(el.time_const, env, t0, tables, warn_sink)
    except ZeroDivisionError as exc:
        raise RuntimeEvalError(t0, "<initialization>", f"division by zero ({exc})")
    except (ValueError, OverflowError) as exc:
        raise RuntimeEvalError(t0, "<initialization>", str(exc))

    recorded = (compiled.names if config.record_all
                else sorted(n for n, e in elements.items() if not e.stateless))
    series = {n: [v[slot[n]]] for n in recorded}
    times = [t0]

    stateful = [(n, elements[n], compiled.hidden[n]) for n in sorted(compiled.hidden)]
    step_fn = compiled.step_fn
    try:
        for n in range(1, n_steps + 1):
            # advance state using flows evaluated at t_{n-1}
            for name, el, slots in stateful:
                i = slot[name]
                if el.kind == "stock":
                    v[i] = v[i] + dt * (v[slots["inflow"]] - v[slots["outflow"]])
                elif el.kind == "smooth":
                    v[i], _ = smooth_eval(v[i], v[slots["input"]],
                                          v[slots["time_const"]], dt)
                else:
                    tc = v[slots["time_const"]]
                    new, _ = delay3_eval(delay_states[name], v[slots["input"]], tc, dt)
                    delay_states[name] = new
                    v[i] = new[2] / (tc / 3.0)
            t = t0 + n * dt
            ctx.time = t
            try:
                step_fn(v, t, ctx)
            except (ZeroDivisionError, ValueError, OverflowError):
                _locate_step_error(spec, v, slot, t, tables)
                raise
            for name in recorded:
                series[name].append(v[slot[name]])
            times.append(t)
    except ZeroDivisionError as exc:
        raise RuntimeEvalError(ctx.time, "<unknown>", f"division by zero ({exc})")
    except (ValueError, OverflowError) as exc:
        raise RuntimeEvalError(ctx.time, "<unknown>", str(exc))

    return RunResult(times=times, series=series, warnings=ctx.warnings,
                     config_echo=config)


class _EnvView:
    """Mapping façade over the slot vector for the tree-walking evaluator."""

    __slots__ = ("v", "slot")

    def __init__(self, v, slot):
        self.v = v
        self.slot = slot

    def __getitem__(self, name):
        return self.v[self.slot[name]]


def _stock_init_order(spec: ModelSpec) -> list:
    stocks = sorted(n for n, e in spec.elements.items() if e.kind == "stock")
    deps = {n: {r for r in spec.elements[n].init_refs()
                if r in spec.elements and spec.elements[r].kind == "stock"}
            for n in stocks}
    return _toposort(stocks, deps)


def _eval_element_step(el: Element, env, time, tables, warn=None) -> float:
    if el.kind == "table":
        x = eval_expr(el.input, env, time, tables, warn)
        w = None if warn is None else (lambda msg: warn(el.name, msg))
        return el.table(x, w)
    if el.kind == "auxiliary":
        return eval_expr(el.expr, env, time, tables, warn)
    if el.kind in ("smooth", "delay3"):
        return eval_expr(el.input, env, time, tables, warn)
    raise ModelError(f"cannot evaluate element kind {el.kind!r}")


def _locate_step_error(spec: ModelSpec, v, slot, t, tables) -> None:
    """Re-run the failing step interpreted to name the offending element."""
    env = _EnvView(list(v), slot)
    for name in spec.eval_order:
        el = spec.elements[name]
        if el.kind == "constant":
            continue
        try:
            env.v[slot[name]] = _eval_element_step(el, env, t, tables)
        except ZeroDivisionError:
            raise RuntimeEvalError(t, name, "division by zero")
        except (ValueError, OverflowError) as exc:
            raise RuntimeEvalError(t, name, str(exc))
    for name in sorted(spec.elements):
        el = spec.elements[name]
        if el.stateless:
            continue
        try:
            for e in el._step_exprs():
                eval_expr(e, env, t, tables)
        except ZeroDivisionError:
            raise RuntimeEvalError(t, name, "division by zero")
        except (ValueError, OverflowError) as exc:
            raise RuntimeEvalError(t, name, str(exc))
