"""Lowering: checked routines to executable IR.

Task mode applies the continuation-split transform: segment code runs to
completion and then replaces its frame with child frames, so any code that
depends on a child's output moves into a generated successor routine
(`name$h1`, `name$h2`, ...) spawned beneath the children. A value produced
by one child and consumed by a later sibling lives in the consumer's own
slot when the consumer is the last frame to touch it (the producer holds a
reference to that slot); otherwise it lives in a skip-guarded payload cell
beneath the frames, and extra `_dup` frames copy it into any earlier
by-value consumers. Local arrays always live in payload regions guarded by
`_skip` frames.

Activation mode keeps a routine in one frame with alternate entry points:
each call site pushes the child frame above the activation frame, records
the next entry index and yields to the executor. Local arrays extend the
frame itself when created (the frame is topmost then, so nothing can hold
a reference into it yet).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import syntax as ast
from .checker import (ArrayArg, CallInfo, CheckedProgram, CheckedRoutine,
                      ScalarRefArg, ValueArg)
from .errors import ArrayEscapes, LoopContainsCall, LowerError
from .ir import (ActBody, AGrow, ArrayUse, AStmt, IrModule, IrRoutine,
                 PArrayCreate, PayloadItem, PStmt, RefForward, RefOwnSlot,
                 RefPayload, RefSlot, SegBody, SegCond, SegLeaf, SIHome,
                 SIRef, SIValue, Slot, SpawnPlan, StateBlock, TCond, TGoto,
                 TPop, TYield, builtin_routines, FIRST_USER_ID)
from .ready import analyze_ready
from .syntax import expr_key, expr_vars


# --- bindings: how a name is reachable inside one IR routine ---

@dataclass(frozen=True)
class Binding:
    kind: str            # 'inval' | 'ref' | 'local' | 'payload' | 'slotval'
    slot: str | None = None
    is_array: bool = False
    writable: bool = True
    cls: str = "local"   # original item class, drives forwarding/analysis


def _stmt_vars(s, acc: set[str] | None = None) -> set[str]:
    """Names read or written by a statement subtree, array bases included."""
    if acc is None:
        acc = set()
    if isinstance(s, _ContMarker):
        acc.update(n for n, _ in s.spec.live)
        return acc
    if isinstance(s, ast.LocalDecl):
        if s.init is not None:
            expr_vars(s.init, acc)
        if s.length is not None:
            expr_vars(s.length, acc)
    elif isinstance(s, ast.Assign):
        expr_vars(s.value, acc)
        if isinstance(s.target, ast.Var):
            acc.add(s.target.name)
        else:
            acc.add(s.target.base)
            expr_vars(s.target.index, acc)
    elif isinstance(s, ast.Call):
        for section in (s.args.ins, s.args.inouts, s.args.outs):
            for a in section:
                expr_vars(a, acc)
    elif isinstance(s, ast.If):
        expr_vars(s.cond, acc)
        _stmt_vars(s.then, acc)
        if s.orelse is not None:
            _stmt_vars(s.orelse, acc)
    elif isinstance(s, ast.While):
        expr_vars(s.cond, acc)
        _stmt_vars(s.body, acc)
    elif isinstance(s, ast.Block):
        for inner in s.body:
            _stmt_vars(inner, acc)
    return acc


def _contains_call(s) -> bool:
    if isinstance(s, ast.Call):
        return True
    if isinstance(s, ast.If):
        return (_contains_call(s.then)
                or (s.orelse is not None and _contains_call(s.orelse)))
    if isinstance(s, ast.While):
        return _contains_call(s.body)
    if isinstance(s, ast.Block):
        return any(_contains_call(x) for x in s.body)
    return False


def _loop_with_call(s) -> ast.While | None:
    if isinstance(s, ast.While):
        return s if _contains_call(s.body) else None
    if isinstance(s, ast.If):
        found = _loop_with_call(s.then)
        if found is None and s.orelse is not None:
            found = _loop_with_call(s.orelse)
        return found
    if isinstance(s, ast.Block):
        for inner in s.body:
            found = _loop_with_call(inner)
            if found is not None:
                return found
    return None


def needs_activation(routine: CheckedRoutine) -> bool:
    """True when task mode cannot lower the body (a loop contains a call)."""
    if routine.decl.body is None:
        return False
    return _loop_with_call(routine.decl.body) is not None


def _calls_in(s, acc: list[ast.Call]) -> None:
    if isinstance(s, ast.Call):
        acc.append(s)
    elif isinstance(s, ast.If):
        _calls_in(s.then, acc)
        if s.orelse is not None:
            _calls_in(s.orelse, acc)
    elif isinstance(s, ast.While):
        _calls_in(s.body, acc)
    elif isinstance(s, ast.Block):
        for inner in s.body:
            _calls_in(inner, acc)


def _param_slots(sig: ast.Signature) -> list[Slot]:
    slots = []
    for section, cls in (("ins", "in"), ("inouts", "inout"), ("outs", "out")):
        for p in sig.section(section):
            kind = "val" if (cls == "in" and p.kind == "scalar") else "ref"
            slots.append(Slot(p.name, kind, cls, p.kind == "array"))
    return slots


def param_bindings(sig: ast.Signature) -> dict[str, Binding]:
    out = {}
    for section, cls in (("ins", "in"), ("inouts", "inout"), ("outs", "out")):
        for p in sig.section(section):
            if cls == "in" and p.kind == "scalar":
                out[p.name] = Binding("inval", p.name, cls=cls)
            else:
                out[p.name] = Binding("ref", p.name, p.kind == "array",
                                      writable=cls != "in", cls=cls)
    return out


# --- raw (pre home-resolution) spawn argument records ---

@dataclass
class RawArg:
    kind: str                 # 'val'|'bare_in'|'item_ref'|'fwd'|'payload'
    expr: ast.Expr | None = None
    item: str | None = None
    slot: str | None = None
    offset: ast.Expr | None = None
    length: ast.Expr | None = None
    is_array: bool = False
    writes: bool = False
    reads: bool = False
    via_dup: str | None = None


@dataclass
class RawSpawn:
    callee: str
    args: list[RawArg]
    effects: ast.Effects
    pos: ast.Pos = (0, 0)


@dataclass
class _ContSpec:
    routine: IrRoutine
    live: list[tuple[str, Binding]]   # item name, binding in the parent


@dataclass
class _ContMarker:
    """Pseudo-statement: spawn this already-built continuation and stop."""
    spec: _ContSpec


class _Builder:
    """Accumulates the IrModule across per-routine lowerings."""

    def __init__(self, checked: CheckedProgram, mode: str,
                 overrides: dict[str, str]):
        self.checked = checked
        self.mode = mode
        self.overrides = dict(overrides)
        self.routines: dict[str, IrRoutine] = {}
        self.order: list[IrRoutine] = []
        self.cont_counters: dict[str, itertools.count] = {}
        self.dup_counter = itertools.count(1)
        for b in builtin_routines():
            self.routines[b.name] = b
            self.order.append(b)

    def register(self, routine: IrRoutine) -> None:
        self.routines[routine.name] = routine
        self.order.append(routine)

    def routine_mode(self, name: str) -> str:
        forced = self.overrides.get(name)
        if forced is not None:
            return forced
        if self.mode in ("task", "activation"):
            return self.mode
        r = self.checked.routines.get(name)
        if r is not None and not r.is_builtin and needs_activation(r):
            return "activation"
        return "task"

    def next_cont_name(self, origin: str) -> str:
        counter = self.cont_counters.setdefault(origin, itertools.count(1))
        return f"{origin}$h{next(counter)}"

    def finish(self) -> IrModule:
        next_id = FIRST_USER_ID
        for r in self.order:
            if r.mode != "builtin":
                r.rid = next_id
                next_id += 1
        by_id: list[IrRoutine | None] = [None] * len(self.order)
        for r in self.order:
            by_id[r.rid] = r
        return IrModule(self.routines, by_id, self.mode, self.overrides)


class _TaskLowerer:
    """Lowers one body (source routine or generated continuation)."""

    def __init__(self, builder: _Builder, origin: str,
                 bindings: dict[str, Binding], calls: dict[int, CallInfo]):
        self.b = builder
        self.origin = origin
        self.bindings = dict(bindings)
        self.calls = calls

    def err(self, exc, msg: str, pos) -> None:
        raise exc(f"in routine '{self.origin}': {msg}", pos)

    def binding(self, name: str, pos) -> Binding:
        b = self.bindings.get(name)
        if b is None:
            self.err(LowerError,
                     f"'{name}' is not available here (created on another "
                     f"branch?)", pos)
        return b

    def _flatten(self, stmts) -> list:
        out = []
        for s in stmts:
            if isinstance(s, ast.Block):
                out.extend(self._flatten(s.body))
            else:
                out.append(s)
        return out

    @staticmethod
    def _spawnable(e: ast.Expr | None, pending: set[str]) -> bool:
        return e is None or not (expr_vars(e) & pending)

    # -- main walk --

    def lower(self, stmts: list) -> SegBody:
        return self._lower_seq(self._flatten(stmts))

    def _lower_seq(self, stmts: list) -> SegBody:
        body = SegBody()
        raw_spawns: list[RawSpawn] = []
        pending: set[str] = set()
        touched: set[str] = set()

        def split(rest: list, pos) -> SegBody:
            spec = self._build_cont(rest, pos)
            plan = self._spawn_for_cont(spec, pending)
            return self._finish_leaf(body, raw_spawns, plan)

        for idx, s in enumerate(stmts):
            rest = stmts[idx + 1:]
            if isinstance(s, _ContMarker):
                return self._finish_leaf(body, raw_spawns,
                                         self._spawn_for_cont(s.spec,
                                                              pending))
            if isinstance(s, ast.Call):
                raw = self._try_spawn(s, pending, body.prelude)
                if raw is None:
                    return split([s] + rest, s.pos)
                raw_spawns.append(raw)
                for a in raw.args:
                    if a.item is not None:
                        touched.add(a.item)
                        if a.writes:
                            pending.add(a.item)
                continue
            if isinstance(s, ast.While) and _contains_call(s):
                self.err(LoopContainsCall,
                         "a loop containing calls cannot execute as a task "
                         "frame; use tail recursion or activation mode",
                         s.pos)
            if isinstance(s, ast.If) and _contains_call(s):
                if raw_spawns:
                    return split([s] + rest, s.pos)
                then_stmts: list = [s.then]
                else_stmts: list = [s.orelse] if s.orelse is not None else []
                if rest:
                    if len(rest) == 1 and isinstance(rest[0], _ContMarker):
                        marker = rest[0]
                    else:
                        marker = _ContMarker(self._build_cont(rest, s.pos))
                    then_stmts = then_stmts + [marker]
                    else_stmts = else_stmts + [marker]
                saved = dict(self.bindings)
                then_body = self._lower_seq(self._flatten(then_stmts))
                self.bindings = dict(saved)
                else_body = self._lower_seq(self._flatten(else_stmts))
                self.bindings = saved
                body.ending = SegCond(s.cond, then_body, else_body)
                return body
            # plain statement (call-free)
            if raw_spawns and (_stmt_vars(s) & (touched | pending)):
                return split([s] + rest, s.pos)
            if isinstance(s, ast.LocalDecl):
                if s.length is not None:
                    payload = PayloadItem(s.name, s.length, pos=s.pos)
                    body.prelude.append(PArrayCreate(payload))
                    self.bindings[s.name] = Binding("payload", is_array=True,
                                                    cls="local")
                    continue
                self.bindings[s.name] = Binding("local", cls="local")
            body.prelude.append(PStmt(s))
        return self._finish_leaf(body, raw_spawns, None)

    # -- spawn attempt --

    def _try_spawn(self, call: ast.Call, pending: set[str],
                   prelude: list) -> RawSpawn | None:
        info = self.calls[id(call)]
        sections = (("ins", False, True), ("inouts", True, True),
                    ("outs", True, False))
        # Dry run: the call stays in this segment only if every argument
        # can be materialized at spawn time.
        for section, writes, reads in sections:
            for ann in info.section(section):
                if isinstance(ann, ValueArg):
                    e = ann.expr
                    if isinstance(e, ast.Var) and e.name in pending:
                        continue  # becomes a deferred home slot
                    if not self._spawnable(e, pending):
                        return None
                elif isinstance(ann, ArrayArg):
                    if not self._spawnable(ann.offset, pending):
                        return None
                    if ann.creates and not self._spawnable(ann.length,
                                                           pending):
                        return None
                else:
                    if not self._spawnable(ann.index, pending):
                        return None
        args: list[RawArg] = []
        for section, writes, reads in sections:
            for ann in info.section(section):
                if isinstance(ann, ValueArg):
                    e = ann.expr
                    if isinstance(e, ast.Var) and e.name in pending:
                        args.append(RawArg("bare_in", item=e.name,
                                           reads=True))
                    else:
                        args.append(RawArg("val", expr=e))
                elif isinstance(ann, ArrayArg):
                    args.append(self._array_arg(ann, call, writes, reads,
                                                prelude))
                else:
                    args.append(self._scalar_ref_arg(ann, call, writes,
                                                     reads))
        return RawSpawn(call.callee, args, info.sig.effects, call.pos)

    def _array_arg(self, ann: ArrayArg, call: ast.Call, writes: bool,
                   reads: bool, prelude: list) -> RawArg:
        if ann.creates:
            if ann.length is None:
                self.err(LowerError,
                         f"cannot size implicit array '{ann.base}'",
                         call.pos)
            payload = PayloadItem(ann.base, ann.length, pos=call.pos)
            prelude.append(PArrayCreate(payload))
            self.bindings[ann.base] = Binding("payload", is_array=True,
                                              cls="implicit")
        binding = self.binding(ann.base, call.pos)
        if writes and call.callee == self.origin and binding.kind == "payload":
            self.err(ArrayEscapes,
                     f"local array '{ann.base}' passed as an inout/out of "
                     f"the routine itself", call.pos)
        kind = "fwd" if binding.kind == "ref" else "payload"
        return RawArg(kind, item=ann.base, slot=binding.slot,
                      offset=ann.offset, length=ann.length, is_array=True,
                      writes=writes, reads=reads)

    def _scalar_ref_arg(self, ann: ScalarRefArg, call: ast.Call,
                        writes: bool, reads: bool) -> RawArg:
        if ann.index is not None:
            binding = self.binding(ann.base, call.pos)
            kind = "fwd" if binding.kind == "ref" else "payload"
            return RawArg(kind, item=ann.base, slot=binding.slot,
                          offset=ann.index, is_array=True, writes=writes,
                          reads=reads)
        if ann.creates:
            self.bindings[ann.base] = Binding("local", cls="implicit")
        binding = self.binding(ann.base, call.pos)
        if binding.kind == "ref":
            return RawArg("fwd", item=ann.base, slot=binding.slot,
                          writes=writes, reads=reads)
        return RawArg("item_ref", item=ann.base, writes=writes, reads=reads)

    # -- continuations --

    def _build_cont(self, rest: list, pos) -> _ContSpec:
        flat = self._flatten(rest)
        live_names: set[str] = set()
        for s in flat:
            _stmt_vars(s, live_names)
        live = sorted((n, self.bindings[n]) for n in live_names
                      if n in self.bindings)
        slots: list[Slot] = []
        cont_bindings: dict[str, Binding] = {}
        for n, b in live:
            if b.kind in ("local", "inval"):
                slots.append(Slot(n, "val", "in"))
                cont_bindings[n] = Binding("inval", n, cls="in")
            else:
                section = b.cls if b.cls in ("in", "inout", "out") else "inout"
                slots.append(Slot(n, "ref", section, b.is_array))
                cont_bindings[n] = Binding("ref", n, b.is_array,
                                           writable=b.writable, cls=b.cls)
        effects = self._effects_of(flat)
        name = self.b.next_cont_name(self.origin)
        sig = ast.Signature(
            ins=tuple(ast.Param(s.name, "scalar") for s in slots
                      if s.kind == "val"),
            effects=effects)
        cont = IrRoutine(name, "task", sig, slots, None, origin=self.origin)
        self.b.register(cont)
        sub = _TaskLowerer(self.b, self.origin, cont_bindings, self.calls)
        cont.body = sub.lower(flat)
        return _ContSpec(cont, live)

    def _effects_of(self, flat: list) -> ast.Effects:
        ins: set[str] = set()
        inouts: set[str] = set()
        outs: set[str] = set()
        found: list[ast.Call] = []
        for s in flat:
            if isinstance(s, _ContMarker):
                eff = s.spec.routine.sig.effects
                ins.update(eff.ins)
                inouts.update(eff.inouts)
                outs.update(eff.outs)
            else:
                _calls_in(s, found)
        for c in found:
            eff = self.calls[id(c)].sig.effects
            ins.update(eff.ins)
            inouts.update(eff.inouts)
            outs.update(eff.outs)
        return ast.Effects(tuple(sorted(ins - inouts)),
                           tuple(sorted(inouts)),
                           tuple(sorted(outs - inouts)))

    def _spawn_for_cont(self, spec: _ContSpec,
                        pending: set[str]) -> RawSpawn:
        args: list[RawArg] = []
        for n, b in spec.live:
            if b.kind in ("local", "inval"):
                if n in pending:
                    args.append(RawArg("bare_in", item=n, reads=True))
                else:
                    args.append(RawArg("val", expr=ast.Var(n)))
            elif b.kind == "ref":
                args.append(RawArg("fwd", item=n, slot=b.slot,
                                   is_array=b.is_array, writes=b.writable,
                                   reads=True))
            else:
                args.append(RawArg("payload", item=n, is_array=True,
                                   writes=b.writable, reads=True))
        return RawSpawn(spec.routine.name, args,
                        spec.routine.sig.effects)

    # -- leaf finalization: homes, duplication frames, ready flags --

    def _finish_leaf(self, body: SegBody, raw_spawns: list[RawSpawn],
                     cont_plan: RawSpawn | None) -> SegBody:
        raws = list(raw_spawns)
        if cont_plan is not None:
            raws.append(cont_plan)
        leaf = SegLeaf()
        body.ending = leaf
        if not raws:
            return body

        # Home cells: the last toucher keeps the item in its own slot when
        # it consumes by value; otherwise the item gets a payload cell.
        touches: dict[str, list[tuple[int, int]]] = {}
        for i, rs in enumerate(raws):
            for j, a in enumerate(rs.args):
                if a.kind in ("item_ref", "bare_in"):
                    touches.setdefault(a.item, []).append((i, j))
        homes: dict[str, tuple[int, int] | None] = {}
        for item, tl in touches.items():
            li, lj = tl[-1]
            if raws[li].args[lj].kind == "bare_in":
                homes[item] = (li, lj)
            else:
                homes[item] = None
                leaf.scalar_cells.append(
                    PayloadItem(item, None, self._home_init(item)))

        # Interleave _dup frames before by-value consumers that are not the
        # home, then renumber.
        order: list[tuple[str, object]] = []
        new_index: dict[int, int] = {}
        for i, rs in enumerate(raws):
            for j, a in enumerate(rs.args):
                if a.kind == "bare_in" and homes[a.item] != (i, j):
                    tag = f"%dup{next(self.b.dup_counter)}"
                    a.via_dup = tag
                    order.append(("dup", (a.item, i, j, tag)))
            new_index[i] = len(order)
            order.append(("spawn", i))

        def home_ref(item: str) -> SIRef:
            home = homes[item]
            if home is None:
                return SIRef(RefPayload(item))
            hi, hj = home
            return SIRef(RefSlot(new_index[hi], hj))

        plans: list[SpawnPlan] = []
        for kind, data in order:
            if kind == "dup":
                item, ci, cj, tag = data
                plan = SpawnPlan("_dup", [
                    home_ref(item),
                    SIRef(RefSlot(new_index[ci], cj)),
                ])
                plan.reads = {item}
                plan.writes = {tag}
                plans.append(plan)
                continue
            rs = raws[data]
            plan = SpawnPlan(rs.callee, [])
            for j, a in enumerate(rs.args):
                if a.kind == "val":
                    plan.args.append(SIValue(a.expr))
                elif a.kind == "bare_in":
                    plan.reads.add(a.item)
                    if a.via_dup is not None:
                        plan.reads.add(a.via_dup)
                        plan.args.append(SIHome(a.item, None))
                    elif homes[a.item] == (data, j):
                        plan.args.append(
                            SIHome(a.item, self._home_init(a.item)))
                    else:
                        plan.args.append(SIHome(a.item, None))
                elif a.kind == "item_ref":
                    plan.args.append(home_ref(a.item))
                    self._track(plan, a)
                elif a.kind == "fwd":
                    plan.args.append(SIRef(RefForward(a.slot, a.offset)))
                    self._track(plan, a)
                else:  # payload
                    plan.args.append(SIRef(RefPayload(a.item, a.offset)))
                    self._track(plan, a)
            for tok in rs.effects.ins:
                plan.reads.add("!" + tok)
            for tok in rs.effects.inouts:
                plan.reads.add("!" + tok)
                plan.writes.add("!" + tok)
            for tok in rs.effects.outs:
                plan.writes.add("!" + tok)
            plans.append(plan)
        analyze_ready(plans)
        leaf.spawns = plans
        return body

    def _track(self, plan: SpawnPlan, a: RawArg) -> None:
        if a.is_array:
            plan.array_uses.append(ArrayUse(
                a.item,
                expr_key(a.offset) if a.offset is not None else "#0",
                expr_key(a.length) if a.length is not None else None,
                a.writes))
            return
        if a.reads:
            plan.reads.add(a.item)
        if a.writes:
            plan.writes.add(a.item)

    def _home_init(self, item: str) -> ast.Expr | None:
        binding = self.bindings.get(item)
        if binding is None or binding.cls == "implicit":
            return None
        return ast.Var(item)


class _ActLowerer:
    """Lowers one routine body to an activation-mode state machine."""

    def __init__(self, routine: CheckedRoutine,
                 bindings: dict[str, Binding]):
        self.r = routine
        self.bindings = bindings
        self.states: list[StateBlock] = []
        self.next_resume = 1

    def new_state(self) -> int:
        self.states.append(StateBlock())
        return len(self.states) - 1

    def lower(self) -> tuple[ActBody, int]:
        calls: list[ast.Call] = []
        _calls_in(self.r.decl.body, calls)
        entry_count = 1 + len(calls)
        for _ in range(entry_count):
            self.new_state()
        final = self._lower_stmt(self.r.decl.body, 0)
        self.states[final].term = TPop()
        return ActBody(self.states), entry_count

    def _lower_stmt(self, s, state: int) -> int:
        blk = self.states[state]
        if isinstance(s, ast.Block):
            for inner in s.body:
                state = self._lower_stmt(inner, state)
            return state
        if isinstance(s, ast.Call):
            plan = self._push_plan(s, self.states[state])
            resume = self.next_resume
            self.next_resume += 1
            self.states[state].term = TYield(plan, resume)
            return resume
        if isinstance(s, ast.If) and _contains_call(s):
            then_state = self.new_state()
            else_state = self.new_state()
            join = self.new_state()
            blk.term = TCond(s.cond, then_state, else_state)
            end_then = self._lower_stmt(s.then, then_state)
            self.states[end_then].term = TGoto(join)
            if s.orelse is not None:
                end_else = self._lower_stmt(s.orelse, else_state)
                self.states[end_else].term = TGoto(join)
            else:
                self.states[else_state].term = TGoto(join)
            return join
        if isinstance(s, ast.While) and _contains_call(s):
            head = self.new_state()
            body_state = self.new_state()
            after = self.new_state()
            blk.term = TGoto(head)
            self.states[head].term = TCond(s.cond, body_state, after)
            end_body = self._lower_stmt(s.body, body_state)
            self.states[end_body].term = TGoto(head)
            return after
        if isinstance(s, ast.LocalDecl) and s.length is not None:
            blk.instrs.append(AGrow(s.name, s.length, s.pos))
            return state
        blk.instrs.append(AStmt(s))
        return state

    def _push_plan(self, call: ast.Call, blk: StateBlock) -> SpawnPlan:
        info = self.r.calls[id(call)]
        plan = SpawnPlan(call.callee, [], ready=1)
        for section in ("ins", "inouts", "outs"):
            for ann in info.section(section):
                if isinstance(ann, ValueArg):
                    plan.args.append(SIValue(ann.expr))
                elif isinstance(ann, ArrayArg):
                    if ann.creates:
                        if ann.length is None:
                            raise LowerError(
                                f"in routine '{self.r.name}': cannot size "
                                f"implicit array '{ann.base}'", call.pos)
                        blk.instrs.append(AGrow(ann.base, ann.length,
                                                call.pos))
                    binding = self.bindings[ann.base]
                    plan.args.append(SIRef(RefForward(binding.slot,
                                                      ann.offset)))
                else:
                    binding = self.bindings[ann.base]
                    if ann.index is not None:
                        plan.args.append(SIRef(RefForward(binding.slot,
                                                          ann.index)))
                    elif binding.kind == "ref":
                        plan.args.append(SIRef(RefForward(binding.slot)))
                    else:
                        plan.args.append(SIRef(RefOwnSlot(binding.slot)))
        return plan


def lower_task(builder: _Builder, routine: CheckedRoutine) -> IrRoutine:
    """Split a routine at its call sites into task segments."""
    loop = _loop_with_call(routine.decl.body)
    if loop is not None:
        raise LoopContainsCall(
            f"in routine '{routine.name}': a loop containing calls cannot "
            f"execute as a task frame; use tail recursion or activation "
            f"mode", loop.pos)
    slots = _param_slots(routine.sig)
    ir = IrRoutine(routine.name, "task", routine.sig, slots, None,
                   origin=routine.name)
    builder.register(ir)
    lowerer = _TaskLowerer(builder, routine.name,
                           param_bindings(routine.sig), routine.calls)
    ir.body = lowerer.lower(routine.decl.body.body)
    return ir


def lower_activation_ir(builder: _Builder,
                        routine: CheckedRoutine) -> IrRoutine:
    slots = _param_slots(routine.sig)
    bindings = param_bindings(routine.sig)
    own_arrays: list[str] = []
    for name, item in routine.items.items():
        if item.cls in ("in", "inout", "out"):
            continue
        if item.kind == "array":
            slots.append(Slot(name, "ref", "local", True))
            bindings[name] = Binding("ref", name, True, cls="local")
            own_arrays.append(name)
        else:
            slots.append(Slot(name, "val", "local"))
            bindings[name] = Binding("slotval", name, cls=item.cls)
    ir = IrRoutine(routine.name, "activation", routine.sig, slots, None,
                   origin=routine.name, own_array_slots=own_arrays)
    builder.register(ir)
    act = _ActLowerer(routine, bindings)
    ir.body, ir.entry_count = act.lower()
    return ir


def split_continuations(checked: CheckedProgram,
                        routine: str) -> list[IrRoutine]:
    """Lower one routine in task mode; returns it plus any generated
    continuation routines (`name$h1`, ...)."""
    b = _Builder(checked, "task", {})
    before = len(b.order)
    lower_task(b, checked.routines[routine])
    return list(b.order[before:])


def lower_activation(checked: CheckedProgram, routine: str) -> IrRoutine:
    """Lower one routine in activation mode."""
    b = _Builder(checked, "activation", {})
    return lower_activation_ir(b, checked.routines[routine])


def compile_program(checked: CheckedProgram, mode: str = "task",
                    overrides: dict[str, str] | None = None) -> IrModule:
    """Lower every user routine and assemble the module.

    ``mode`` selects the default lowering; ``overrides`` forces a mode per
    routine. ``mixed`` picks task lowering except where only activation
    mode can express the body (loops containing calls).
    """
    if mode not in ("task", "activation", "mixed"):
        raise LowerError(f"unknown mode '{mode}'")
    for name, forced in (overrides or {}).items():
        if forced not in ("task", "activation"):
            raise LowerError(f"unknown mode '{forced}' for '{name}'")
    b = _Builder(checked, mode, overrides or {})
    for name in checked.order:
        r = checked.routines[name]
        if r.decl.body is None:
            continue
        if b.routine_mode(name) == "activation":
            lower_activation_ir(b, r)
        else:
            lower_task(b, r)
    return b.finish()
