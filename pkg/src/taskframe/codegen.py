"""Compiles IR routines into Python functions executed by the frame machine.

Each routine becomes one function ``f(st, b, sb) -> int`` where ``st`` is
the executing stack's cell list, ``b`` the frame's cell index and ``sb``
the stack id shifted into reference position. The return value is the new
top cell index after the frame popped, replaced itself, or pushed frames.

Two variants exist per module: ``fast`` (no checks) and ``checked`` (item
references are liveness-checked on every read and write through ``_rd`` /
``_wr``, which the machine may extend with invariant validation). Values
wrap to signed 64 bits whenever they are stored into a cell.
"""

from __future__ import annotations

from . import syntax as ast
from .ir import (ActBody, AGrow, AStmt, HEADER_CELLS, IrModule, IrRoutine,
                 PArrayCreate, PStmt, RefForward, RefOwnSlot, RefPayload,
                 RefSlot, SegBody, SegCond, SegLeaf, SIHome, SIRef, SIValue,
                 SKIP_ID, TCond, TGoto, TPop, TYield)

I64_MAX = 2**63 - 1
I64_MIN = -(2**63)
U64 = 2**64


def wrap64(v: int) -> int:
    if v > I64_MAX or v < I64_MIN:
        v = ((v + 2**63) & (U64 - 1)) - 2**63
    return v


class _Emitter:
    def __init__(self):
        self.lines: list[str] = []
        self.depth = 0

    def emit(self, text: str) -> None:
        self.lines.append("    " * self.depth + text)

    def source(self) -> str:
        return "\n".join(self.lines) + "\n"


class _Access:
    """How one name is reachable inside a generated body."""

    def __init__(self, kind: str, ident: str | int, is_array: bool = False):
        self.kind = kind      # 'pyvar' | 'refvar' | 'payload' | 'slot' | 'refslot'
        self.ident = ident    # variable name or slot cell index
        self.is_array = is_array


class _FnGen:
    def __init__(self, module: IrModule, routine: IrRoutine, checked: bool):
        self.m = module
        self.r = routine
        self.checked = checked
        self.e = _Emitter()
        self.env: dict[str, _Access] = {}
        self.tmp = 0
        self.has_cursor = False

    # -- small helpers --

    def fresh(self, stem: str = "_t") -> str:
        self.tmp += 1
        return f"{stem}{self.tmp}"

    def deref(self, ref_code: str) -> str:
        if self.checked:
            return f"_rd({ref_code})"
        return f"STACKS[({ref_code}) >> 40][({ref_code}) & _M]"

    def emit_ref_store(self, ref_code: str, value_code: str) -> None:
        if self.checked:
            self.e.emit(f"_wr({ref_code}, {value_code})")
        else:
            self.e.emit(f"STACKS[({ref_code}) >> 40][({ref_code}) & _M] "
                        f"= {value_code}")

    def emit_wrapped(self, value_expr: ast.Expr, store) -> None:
        """Evaluate, wrap to 64 bits, then hand the code to ``store``."""
        code = self.expr(value_expr)
        if isinstance(value_expr, ast.IntLit) and \
                I64_MIN <= value_expr.value <= I64_MAX:
            store(code)
            return
        v = self.fresh("_v")
        self.e.emit(f"{v} = {code}")
        self.e.emit(f"if {v} > {I64_MAX} or {v} < {I64_MIN}: "
                    f"{v} = (({v} + {2**63}) & {U64 - 1}) - {2**63}")
        store(v)

    # -- expressions --

    def expr(self, e: ast.Expr) -> str:
        if isinstance(e, ast.IntLit):
            return repr(e.value)
        if isinstance(e, ast.Var):
            a = self.env[e.name]
            if a.kind == "pyvar":
                return a.ident
            if a.kind == "slot":
                return f"st[b + {a.ident}]"
            if a.kind == "refvar":
                return self.deref(a.ident)
            if a.kind == "refslot":
                return self.deref(f"st[b + {a.ident}]")
            raise AssertionError(f"array {e.name} read as scalar")
        if isinstance(e, ast.Index):
            a = self.env[e.base]
            idx = self.expr(e.index)
            if a.kind == "payload":
                return f"st[{a.ident} + ({idx})]"
            if a.kind == "refvar":
                return self.deref(f"{a.ident} + ({idx})")
            if a.kind == "refslot":
                return self.deref(f"st[b + {a.ident}] + ({idx})")
            raise AssertionError(f"{e.base} is not an array")
        if isinstance(e, ast.Unary):
            return f"(-({self.expr(e.operand)}))"
        lhs, rhs = self.expr(e.left), self.expr(e.right)
        if e.op == "/":
            return f"_div({lhs}, {rhs}, {self.r.name!r})"
        if e.op == "%":
            return f"_mod({lhs}, {rhs}, {self.r.name!r})"
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            return f"(1 if ({lhs}) {e.op} ({rhs}) else 0)"
        return f"(({lhs}) {e.op} ({rhs}))"

    def cond(self, e: ast.Expr) -> str:
        if isinstance(e, ast.Binary) and e.op in ("==", "!=", "<", "<=",
                                                  ">", ">="):
            return f"({self.expr(e.left)}) {e.op} ({self.expr(e.right)})"
        return f"({self.expr(e)}) != 0"

    # -- statements (call-free) --

    def stmt(self, s: ast.Stmt) -> None:
        if isinstance(s, ast.LocalDecl):
            init = s.init if s.init is not None else ast.IntLit(0)
            a = self.env.get(s.name)
            if a is not None and a.kind == "slot":
                self.emit_wrapped(init,
                                  lambda c: self.e.emit(f"st[b + {a.ident}] "
                                                        f"= {c}"))
            else:
                self.env[s.name] = _Access("pyvar", f"u_{s.name}")
                self.e.emit(f"u_{s.name} = {self.expr(init)}")
            return
        if isinstance(s, ast.Assign):
            value = s.value
            if s.op in ("+=", "-="):
                base = (s.target if isinstance(s.target, ast.Var)
                        else ast.Index(s.target.base, s.target.index))
                value = ast.Binary(s.op[0], base, s.value)
            self.assign(s.target, value)
            return
        if isinstance(s, ast.If):
            self.e.emit(f"if {self.cond(s.cond)}:")
            self.e.depth += 1
            self.stmt(s.then)
            self.e.depth -= 1
            if s.orelse is not None:
                self.e.emit("else:")
                self.e.depth += 1
                self.stmt(s.orelse)
                self.e.depth -= 1
            return
        if isinstance(s, ast.While):
            self.e.emit(f"while {self.cond(s.cond)}:")
            self.e.depth += 1
            self.stmt(s.body)
            self.e.depth -= 1
            return
        if isinstance(s, ast.Block):
            if not s.body:
                self.e.emit("pass")
            for inner in s.body:
                self.stmt(inner)
            return
        raise AssertionError(f"cannot compile {type(s).__name__} here")

    def assign(self, target, value: ast.Expr) -> None:
        if isinstance(target, ast.Var):
            a = self.env[target.name]
            if a.kind == "pyvar":
                self.e.emit(f"{a.ident} = {self.expr(value)}")
                return
            if a.kind == "slot":
                self.emit_wrapped(value,
                                  lambda c: self.e.emit(f"st[b + {a.ident}] "
                                                        f"= {c}"))
                return
            if a.kind == "refvar":
                self.emit_wrapped(value,
                                  lambda c: self.emit_ref_store(a.ident, c))
                return
            if a.kind == "refslot":
                self.emit_wrapped(
                    value,
                    lambda c: self.emit_ref_store(f"st[b + {a.ident}]", c))
                return
            raise AssertionError("assignment to array")
        a = self.env[target.base]
        idx = self.expr(target.index)
        if a.kind == "payload":
            self.emit_wrapped(value,
                              lambda c: self.e.emit(f"st[{a.ident} + ({idx})]"
                                                    f" = {c}"))
        elif a.kind == "refvar":
            self.emit_wrapped(
                value, lambda c: self.emit_ref_store(f"{a.ident} + ({idx})",
                                                     c))
        elif a.kind == "refslot":
            self.emit_wrapped(
                value,
                lambda c: self.emit_ref_store(f"st[b + {a.ident}] + ({idx})",
                                              c))
        else:
            raise AssertionError(f"{target.base} is not an array")

    # -- payload allocation --

    def array_create(self, item: str, cells_expr: ast.Expr, where: str) -> None:
        n = self.fresh("_n")
        self.e.emit(f"{n} = {self.expr(cells_expr)}")
        self.e.emit(f"if {n} < 0: _neglen({self.r.name!r})")
        self.e.emit(f"CUR = CUR - {n} - 5")
        self.e.emit(f"if CUR < 0: _ovf({self.r.name!r}, ({n} + 5) * 8, "
                    f"(CUR + {n} + 5) * 8)")
        self.e.emit(f"st[CUR] = {SKIP_ID}; st[CUR + 1] = 40; "
                    f"st[CUR + 2] = 0; st[CUR + 3] = 0; "
                    f"st[CUR + 4] = {n} * 8")
        self.e.emit(f"p_{item} = CUR + 5")
        self.e.emit(f"st[p_{item}:p_{item} + {n}] = [0] * {n}")
        self.env[item] = _Access("payload", f"p_{item}", True)

    # -- spawn machinery --

    def ref_code(self, ref, bases: dict[int, str]) -> str:
        if isinstance(ref, RefSlot):
            return f"(sb | ({bases[ref.spawn]} + {HEADER_CELLS + ref.slot}))"
        if isinstance(ref, RefPayload):
            a = self.env[ref.item]
            if ref.offset is None:
                return f"(sb | {a.ident})"
            return f"(sb | ({a.ident} + ({self.expr(ref.offset)})))"
        if isinstance(ref, RefForward):
            a = self.env[ref.slot_name]
            base = a.ident if a.kind == "refvar" else f"st[b + {a.ident}]"
            if ref.offset is None:
                return f"{base}" if a.kind == "refvar" else f"({base})"
            return f"({base} + ({self.expr(ref.offset)}))"
        if isinstance(ref, RefOwnSlot):
            idx = self.r.slot_index(ref.slot_name)
            return f"(sb | (b + {idx}))"
        raise AssertionError(ref)

    def emit_frame(self, plan, base_code: str, bases: dict[int, str]) -> None:
        callee = self.m.routine(plan.callee)
        self.e.emit(f"st[{base_code}] = {callee.rid}; "
                    f"st[{base_code} + 1] = {callee.frame_bytes}; "
                    f"st[{base_code} + 2] = 0; "
                    f"st[{base_code} + 3] = {plan.ready}")
        for j, arg in enumerate(plan.args):
            tgt = f"st[{base_code} + {HEADER_CELLS + j}]"
            if isinstance(arg, SIValue):
                self.emit_wrapped(arg.expr,
                                  lambda c, t=tgt: self.e.emit(f"{t} = {c}"))
            elif isinstance(arg, SIHome):
                if arg.init is None:
                    self.e.emit(f"{tgt} = 0")
                else:
                    self.emit_wrapped(
                        arg.init, lambda c, t=tgt: self.e.emit(f"{t} = {c}"))
            else:
                self.e.emit(f"{tgt} = {self.ref_code(arg.ref, bases)}")
        extra = callee.frame_cells - HEADER_CELLS - len(plan.args)
        if extra > 0:
            lo = f"{base_code} + {HEADER_CELLS + len(plan.args)}"
            self.e.emit(f"st[{lo}:{base_code} + {callee.frame_cells}] "
                        f"= [0] * {extra}")

    def emit_leaf(self, leaf: SegLeaf) -> None:
        cur = "CUR" if self.has_cursor else f"(b + {self.r.frame_cells})"
        if leaf.scalar_cells:
            k = len(leaf.scalar_cells)
            self.e.emit(f"CUR = CUR - {k + 5}")
            self.e.emit(f"if CUR < 0: _ovf({self.r.name!r}, {(k + 5) * 8}, "
                        f"(CUR + {k + 5}) * 8)")
            self.e.emit(f"st[CUR] = {SKIP_ID}; st[CUR + 1] = 40; "
                        f"st[CUR + 2] = 0; st[CUR + 3] = 0; "
                        f"st[CUR + 4] = {k * 8}")
            for i, cell in enumerate(leaf.scalar_cells):
                self.env[cell.item] = _Access("payload", f"q_{cell.item}")
                self.e.emit(f"q_{cell.item} = CUR + {5 + i}")
                if cell.init is None:
                    self.e.emit(f"st[q_{cell.item}] = 0")
                else:
                    self.emit_wrapped(
                        cell.init,
                        lambda c, it=cell.item: self.e.emit(
                            f"st[q_{it}] = {c}"))
            cur = "CUR"
        if not leaf.spawns:
            self.e.emit(f"return {cur}")
            return
        callees = [self.m.routine(p.callee) for p in leaf.spawns]
        total = sum(c.frame_cells for c in callees)
        # In-place replacement: a single equally-sized spawn with no
        # payloads reuses the executing frame's bytes.
        if (len(leaf.spawns) == 1 and not self.has_cursor
                and not leaf.scalar_cells
                and callees[0].frame_cells == self.r.frame_cells):
            plan = leaf.spawns[0]
            bases = {0: "b"}
            if callees[0].rid != self.r.rid:
                self.e.emit(f"st[b] = {callees[0].rid}; "
                            f"st[b + 3] = {plan.ready}")
            for j, arg in enumerate(plan.args):
                tgt = f"st[b + {HEADER_CELLS + j}]"
                if isinstance(arg, SIValue):
                    self.emit_wrapped(
                        arg.expr, lambda c, t=tgt: self.e.emit(f"{t} = {c}"))
                elif isinstance(arg, SIHome):
                    code = "0" if arg.init is None else None
                    if code is None:
                        self.emit_wrapped(
                            arg.init,
                            lambda c, t=tgt: self.e.emit(f"{t} = {c}"))
                    else:
                        self.e.emit(f"{tgt} = 0")
                else:
                    self.e.emit(f"{tgt} = {self.ref_code(arg.ref, bases)}")
            self.e.emit("return b")
            return
        self.e.emit(f"t = {cur} - {total}")
        self.e.emit(f"if t < 0: _ovf({self.r.name!r}, {total * 8}, "
                    f"(t + {total}) * 8)")
        bases: dict[int, str] = {}
        off = 0
        for i, c in enumerate(callees):
            bases[i] = f"t + {off}" if off else "t"
            off += c.frame_cells
        for i, plan in enumerate(leaf.spawns):
            self.emit_frame(plan, bases[i], bases)
        self.e.emit("return t")

    # -- task bodies --

    def gen_task(self) -> str:
        self.e.emit(f"def _body(st, b, sb):")
        self.e.depth += 1
        for i, slot in enumerate(self.r.slots):
            cell = HEADER_CELLS + i
            if slot.kind == "val":
                self.env[slot.name] = _Access("pyvar", f"u_{slot.name}")
                self.e.emit(f"u_{slot.name} = st[b + {cell}]")
            else:
                self.env[slot.name] = _Access("refvar", f"r_{slot.name}",
                                              slot.is_array)
                self.e.emit(f"r_{slot.name} = st[b + {cell}]")
        self.has_cursor = self._body_has_payload(self.r.body)
        if self.has_cursor:
            self.e.emit(f"CUR = b + {self.r.frame_cells}")
        self.gen_seg(self.r.body)
        return self.e.source()

    def _body_has_payload(self, body: SegBody) -> bool:
        if any(isinstance(p, PArrayCreate) for p in body.prelude):
            return True
        if isinstance(body.ending, SegCond):
            return (self._body_has_payload(body.ending.then)
                    or self._body_has_payload(body.ending.orelse))
        return bool(body.ending.scalar_cells)

    def gen_seg(self, body: SegBody) -> None:
        for p in body.prelude:
            if isinstance(p, PStmt):
                self.stmt(p.stmt)
            else:
                self.array_create(p.payload.item, p.payload.cells_expr,
                                  "prelude")
        if isinstance(body.ending, SegCond):
            saved = dict(self.env)
            self.e.emit(f"if {self.cond(body.ending.cond)}:")
            self.e.depth += 1
            self.gen_seg(body.ending.then)
            self.e.depth -= 1
            self.env = dict(saved)
            self.e.emit("else:")
            self.e.depth += 1
            self.gen_seg(body.ending.orelse)
            self.e.depth -= 1
            self.env = saved
        else:
            self.emit_leaf(body.ending)

    # -- activation bodies --

    def gen_activation(self) -> str:
        body: ActBody = self.r.body
        for i, slot in enumerate(self.r.slots):
            cell = HEADER_CELLS + i
            if slot.kind == "val":
                self.env[slot.name] = _Access("slot", cell)
            else:
                self.env[slot.name] = _Access("refslot", cell, slot.is_array)
        self.e.emit(f"def _body(st, b, sb):")
        self.e.depth += 1
        self.e.emit("e = st[b + 2]")
        self.e.emit("while 1:")
        self.e.depth += 1
        for idx, state in enumerate(body.states):
            self.e.emit(f"if e == {idx}:")
            self.e.depth += 1
            if idx == 0 and self.r.entry_count > 1:
                self.e.emit("st[b + 3] = 0")
            for instr in state.instrs:
                if isinstance(instr, AStmt):
                    self.stmt(instr.stmt)
                else:
                    self.gen_grow(instr)
            self.gen_term(state.term)
            self.e.depth -= 1
        self.e.emit(f"_badent({self.r.name!r})")
        return self.e.source()

    def gen_grow(self, instr: AGrow) -> None:
        n = self.fresh("_n")
        self.e.emit(f"{n} = {self.expr(instr.cells_expr)}")
        self.e.emit(f"if {n} < 0: _neglen({self.r.name!r})")
        slot_cells = [self.r.slot_index(s) for s in self.r.own_array_slots]
        target = self.r.slot_index(instr.item)
        self.e.emit(f"b = _grow(st, b, {n}, sb, {slot_cells!r}, {target}, "
                    f"{self.r.name!r})")

    def gen_term(self, term) -> None:
        if isinstance(term, TPop):
            if self.r.own_array_slots:
                self.e.emit("return b + (st[b + 1] >> 3)")
            else:
                self.e.emit(f"return b + {self.r.frame_cells}")
            return
        if isinstance(term, TGoto):
            self.e.emit(f"e = {term.state}")
            self.e.emit("continue")
            return
        if isinstance(term, TCond):
            self.e.emit(f"e = {term.then_state} if {self.cond(term.cond)} "
                        f"else {term.else_state}")
            self.e.emit("continue")
            return
        # TYield: push one child above this frame and suspend.
        callee = self.m.routine(term.push.callee)
        self.e.emit(f"t = b - {callee.frame_cells}")
        self.e.emit(f"if t < 0: _ovf({self.r.name!r}, "
                    f"{callee.frame_bytes}, b * 8)")
        self.emit_frame(term.push, "t", {})
        self.e.emit(f"st[b + 2] = {term.next_state}")
        self.e.emit("return t")


def _div(a: int, b: int, name: str):
    from .errors import DivideByZero
    if b == 0:
        raise DivideByZero("division by zero", name)
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _mod(a: int, b: int, name: str):
    from .errors import DivideByZero
    if b == 0:
        raise DivideByZero("modulo by zero", name)
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def _grow(st: list, b: int, n: int, sb: int, arr_slots: list[int],
          target_slot: int, name: str) -> int:
    """Relocate the topmost frame down by n cells to append an array area.

    Safe because nothing holds a reference into the topmost frame while it
    executes; the frame's own array refs shift with it.
    """
    from .errors import StackOverflow
    nb = b - n
    if nb < 0:
        raise StackOverflow(n * 8, b * 8, name)
    length = st[b + 1] >> 3
    st[nb:nb + length] = st[b:b + length]
    st[nb + length:nb + length + n] = [0] * n
    st[nb + 1] = (length + n) * 8
    for cell in arr_slots:
        if cell == target_slot:
            continue
        ref = st[nb + cell]
        if ref:
            st[nb + cell] = ref - n
    st[nb + target_slot] = sb | (nb + length)
    return nb


def compile_module(module: IrModule, stacks: list[list[int]],
                   tops: list[int], checked: bool, helpers: dict):
    """Build the callable table for one module against one stack set.

    ``helpers`` must provide the error raisers and, in checked mode, the
    ``_rd``/``_wr`` reference accessors. Builtins (`_skip`, `putc`, ...)
    are installed by the machine, not here.
    """
    table: list = [None] * len(module.by_id)
    g = {
        "STACKS": stacks,
        "TOPS": tops,
        "_M": (1 << 40) - 1,
        "_div": _div,
        "_mod": _mod,
        "_grow": _grow,
    }
    g.update(helpers)
    for r in module.by_id:
        if r is None or r.mode == "builtin":
            continue
        gen = _FnGen(module, r, checked)
        if r.mode == "task":
            src = gen.gen_task()
        else:
            src = gen.gen_activation()
        code = compile(src, f"<taskframe:{r.name}>", "exec")
        ns = dict(g)
        exec(code, ns)
        table[r.rid] = ns["_body"]
    return table
