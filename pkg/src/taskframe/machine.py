"""The frame machine: stacks, compiled bodies, and the executor loop.

``xtop`` repeatedly executes the topmost frame until the stack is empty.
A frame's body runs to completion without yielding mid-statement; it pops
its frame, replaces it in place, or replaces it with the frames it spawns,
and the loop continues with the new topmost frame.

Checking levels:

* fast: no checks (benchmarks);
* checked (default): item reference reads/writes are liveness-checked;
* validate: additionally asserts stack tiling after every step, forbids
  writes into ready frames, and records trace events.
"""

from __future__ import annotations

import itertools

from .codegen import compile_module, wrap64
from .entry import EntryCall
from .errors import (BadRef, EntryError, InvalidEntry, MachineError,
                     NegativeArrayLength, StackOverflow, TsiaRuntimeError)
from .frames import (DEFAULT_STACK_BYTES, FrameStack, ItemRef, check_tiling,
                     enclosing_frame, init_stack, pack_ref, snapshot,
                     walk_frames, REF_MASK, REF_SHIFT)
from .ir import (CELL, COP_ID, DUP_ID, HEADER_CELLS, IrModule, PUTC_ID,
                 PUTI_ID, SKIP_FRAME_CELLS, SKIP_ID, THIEF_ID)
from .trace import Trace


def _eval_const(e, env: dict[str, int], where: str) -> int:
    from . import syntax as ast
    if isinstance(e, ast.IntLit):
        return e.value
    if isinstance(e, ast.Var):
        if e.name not in env:
            raise EntryError(f"array length of '{where}' needs in "
                             f"'{e.name}'")
        return env[e.name]
    if isinstance(e, ast.Unary):
        return -_eval_const(e.operand, env, where)
    if isinstance(e, ast.Binary):
        a = _eval_const(e.left, env, where)
        b = _eval_const(e.right, env, where)
        ops = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
               "==": lambda: int(a == b), "!=": lambda: int(a != b),
               "<": lambda: int(a < b), "<=": lambda: int(a <= b),
               ">": lambda: int(a > b), ">=": lambda: int(a >= b)}
        if e.op == "/":
            if b == 0:
                raise EntryError("division by zero in length expression")
            q = abs(a) // abs(b)
            return -q if (a < 0) != (b < 0) else q
        if e.op == "%":
            if b == 0:
                raise EntryError("modulo by zero in length expression")
            r = abs(a) % abs(b)
            return -r if a < 0 else r
        return ops[e.op]()
    raise EntryError(f"cannot evaluate length expression for '{where}'")


class ResultSpec:
    """Where one inout/out of the entry call lives in the arena."""

    def __init__(self, name: str, base_cell: int, length: int | None):
        self.name = name
        self.base_cell = base_cell
        self.length = length  # None for scalars


class Machine:
    def __init__(self, module: IrModule,
                 stack_bytes: int = DEFAULT_STACK_BYTES,
                 workers: int = 1, checked: bool = True,
                 tracing: bool = False, validate: bool = False):
        if validate:
            checked = True
            tracing = True
        self.module = module
        self.workers = workers
        self.checked = checked
        self.validate = validate
        self.arena_id = workers
        self.stacks = [init_stack(stack_bytes, sid=i)
                       for i in range(workers)]
        self.arena_cells: list[int] = []
        self.cell_lists = [s.cells for s in self.stacks] + [self.arena_cells]
        self.tops = [len(s.cells) for s in self.stacks] + [0]
        self.output: list[str] = []
        self.trace: Trace | None = Trace(workers) if tracing else None
        self._arena_next = 0
        self.table = compile_module(module, self.cell_lists, self.tops,
                                    checked, self._helpers())
        self._install_builtins()

    # -- construction helpers --

    def _helpers(self) -> dict:
        def _ovf(name: str, need: int, have: int):
            raise StackOverflow(need, max(have, 0), name)

        def _neglen(name: str):
            raise NegativeArrayLength("array length is negative", name)

        def _badent(name: str):
            raise InvalidEntry("bad entry index", name)

        helpers = {"_ovf": _ovf, "_neglen": _neglen, "_badent": _badent}
        if self.checked:
            stacks = self.cell_lists
            tops = self.tops

            def _rd(r: int) -> int:
                s, c = r >> REF_SHIFT, r & REF_MASK
                if c < tops[s]:
                    raise BadRef(f"read of dead cell @s{s}+{c * CELL}")
                return stacks[s][c]

            if self.validate:
                def _wr(r: int, v: int) -> None:
                    s, c = r >> REF_SHIFT, r & REF_MASK
                    if c < tops[s]:
                        raise BadRef(f"write to dead cell @s{s}+{c * CELL}")
                    if s != self.arena_id:
                        hit = enclosing_frame(self.stacks[s], c)
                        if hit is not None:
                            at, _rid = hit
                            if self.stacks[s].cells[at + 3] == 1 \
                                    and at != self.tops[s]:
                                raise AssertionError(
                                    f"write into ready frame at "
                                    f"@s{s}+{at * CELL}")
                    stacks[s][c] = v
            else:
                def _wr(r: int, v: int) -> None:
                    s, c = r >> REF_SHIFT, r & REF_MASK
                    if c < tops[s]:
                        raise BadRef(f"write to dead cell @s{s}+{c * CELL}")
                    stacks[s][c] = v

            helpers["_rd"] = _rd
            helpers["_wr"] = _wr
        return helpers

    def _install_builtins(self) -> None:
        out = self.output
        trace = self.trace

        def f_skip(st, b, sb):
            return b + SKIP_FRAME_CELLS + (st[b + 4] >> 3)

        def f_putc(st, b, sb):
            v = st[b + 4]
            out.append(chr(v & 0xFF))
            if trace is not None:
                trace.emit(sb >> REF_SHIFT, "effect", "stdout", v)
            return b + 5

        def f_puti(st, b, sb):
            v = st[b + 4]
            out.append(str(v))
            if trace is not None:
                trace.emit(sb >> REF_SHIFT, "effect", "stdout", v)
            return b + 5

        stacks = self.cell_lists

        def f_dup(st, b, sb):
            r = st[b + 4]
            v = stacks[r >> REF_SHIFT][r & REF_MASK]
            d = st[b + 5]
            stacks[d >> REF_SHIFT][d & REF_MASK] = v
            return b + 6

        def f_scheduler_only(st, b, sb):
            raise MachineError("thief/cop frame reached the sequential "
                               "executor")

        self.table[SKIP_ID] = f_skip
        self.table[PUTC_ID] = f_putc
        self.table[PUTI_ID] = f_puti
        self.table[DUP_ID] = f_dup
        self.table[THIEF_ID] = f_scheduler_only
        self.table[COP_ID] = f_scheduler_only

    # -- arena --

    def arena_alloc(self, n: int) -> int:
        base = self._arena_next
        self.arena_cells.extend([0] * n)
        self._arena_next += n
        return base

    def arena_ref(self, cell: int) -> int:
        return pack_ref(self.arena_id, cell)

    # -- item references (public byte-offset API) --

    def read_ref(self, ref: ItemRef) -> int:
        if self.checked and ref.offset // CELL < self.tops[ref.stack]:
            raise BadRef(f"read of dead cell @s{ref.stack}+{ref.offset}")
        return self.cell_lists[ref.stack][ref.offset // CELL]

    def write_ref(self, ref: ItemRef, value: int) -> None:
        if self.checked and ref.offset // CELL < self.tops[ref.stack]:
            raise BadRef(f"write to dead cell @s{ref.stack}+{ref.offset}")
        self.cell_lists[ref.stack][ref.offset // CELL] = wrap64(value)

    # -- seeding --

    def seed(self, entry: EntryCall, worker: int = 0) -> list[ResultSpec]:
        r = self.module.routines.get(entry.routine)
        if r is None:
            raise EntryError(f"no routine named '{entry.routine}'")
        sig = r.sig
        results: list[ResultSpec] = []
        slot_values: list[int] = []
        env: dict[str, int] = {}

        def want(section, got, n):
            if len(got) != n:
                raise EntryError(
                    f"'{entry.routine}' takes {n} {section}, got {len(got)}")

        want("ins", entry.ins, len(sig.ins))
        want("inouts", entry.inouts, len(sig.inouts))
        want("outs", entry.outs, len(sig.outs))
        for p, lit in zip(sig.ins, entry.ins):
            if p.kind == "array":
                if not isinstance(lit, list):
                    raise EntryError(f"in '{p.name}' needs an array literal")
                base = self.arena_alloc(len(lit))
                for i, v in enumerate(lit):
                    self.arena_cells[base + i] = wrap64(v)
                slot_values.append(self.arena_ref(base))
            else:
                if isinstance(lit, list):
                    raise EntryError(f"in '{p.name}' is a scalar")
                env[p.name] = lit
                slot_values.append(wrap64(lit))
        for p, (name, lit) in zip(sig.inouts, entry.inouts):
            if p.kind == "array":
                if not isinstance(lit, list):
                    raise EntryError(f"inout '{p.name}' needs an array "
                                     f"literal")
                base = self.arena_alloc(len(lit))
                for i, v in enumerate(lit):
                    self.arena_cells[base + i] = wrap64(v)
                results.append(ResultSpec(name, base, len(lit)))
            else:
                if isinstance(lit, list):
                    raise EntryError(f"inout '{p.name}' is a scalar")
                base = self.arena_alloc(1)
                self.arena_cells[base] = wrap64(lit)
                results.append(ResultSpec(name, base, None))
            slot_values.append(self.arena_ref(base))
        for p, name in zip(sig.outs, entry.outs):
            if p.kind == "array":
                length = _eval_const(p.length, env, p.name)
                if length < 0:
                    raise EntryError(f"out array '{p.name}' has negative "
                                     f"length")
                base = self.arena_alloc(length)
                results.append(ResultSpec(name, base, length))
            else:
                base = self.arena_alloc(1)
                results.append(ResultSpec(name, base, None))
            slot_values.append(self.arena_ref(base))
        slot_values.extend(
            [0] * (r.frame_cells - HEADER_CELLS - len(slot_values)))
        stack = self.stacks[worker]
        from .frames import push_frame
        push_frame(stack, r.rid, 0, 1, slot_values, r.name)
        self.tops[worker] = stack.top
        return results

    def collect(self, results: list[ResultSpec]) -> dict[str, int | list]:
        out: dict[str, int | list] = {}
        for spec in results:
            if spec.length is None:
                out[spec.name] = self.arena_cells[spec.base_cell]
            else:
                out[spec.name] = self.arena_cells[
                    spec.base_cell:spec.base_cell + spec.length]
        return out

    # -- executor loops --

    def xtop(self, worker: int = 0) -> None:
        """Execute topmost frames until the stack is empty."""
        if self.validate:
            self._loop_validate(worker)
        elif self.checked:
            self._loop_checked(worker)
        else:
            self._loop_fast(worker)

    def _loop_fast(self, w: int) -> None:
        st = self.cell_lists[w]
        cap = len(st)
        sb = w << REF_SHIFT
        table = self.table
        top = self.stacks[w].top
        try:
            while top < cap:
                top = table[st[top]](st, top, sb)
        finally:
            self.stacks[w].top = top
            self.tops[w] = top

    def _loop_checked(self, w: int) -> None:
        st = self.cell_lists[w]
        cap = len(st)
        sb = w << REF_SHIFT
        table = self.table
        tops = self.tops
        top = self.stacks[w].top
        try:
            while top < cap:
                tops[w] = top
                top = table[st[top]](st, top, sb)
        finally:
            self.stacks[w].top = top
            self.tops[w] = top

    def _loop_validate(self, w: int) -> None:
        st = self.cell_lists[w]
        cap = len(st)
        sb = w << REF_SHIFT
        stack = self.stacks[w]
        while stack.top < cap:
            self.exec_top(w)

    def exec_top(self, worker: int = 0) -> bool:
        """Execute exactly one topmost frame; False when already empty."""
        stack = self.stacks[worker]
        st = stack.cells
        if stack.top >= len(st):
            return False
        top = stack.top
        self.tops[worker] = top
        rid = st[top]
        if self.trace is not None:
            self.trace.emit(worker, "exec", self.module.by_id[rid].name,
                            st[top + 2], top * CELL)
        stack.top = self.table[rid](st, top, worker << REF_SHIFT)
        self.tops[worker] = stack.top
        if self.validate:
            check_tiling(stack, self.module)
        return True

    def xtop_metrics(self, worker: int = 0) -> tuple[int, int]:
        """Run to empty; returns (frames executed, peak occupied bytes)."""
        st = self.cell_lists[worker]
        cap = len(st)
        sb = worker << REF_SHIFT
        table = self.table
        top = self.stacks[worker].top
        steps = 0
        min_top = top
        try:
            while top < cap:
                self.tops[worker] = top
                top = table[st[top]](st, top, sb)
                steps += 1
                if top < min_top:
                    min_top = top
        finally:
            self.stacks[worker].top = top
            self.tops[worker] = top
        return steps, (cap - min_top) * CELL

    def xtop_stepped(self, hook, worker: int = 0) -> None:
        """Run to empty, calling ``hook(machine)`` before every step."""
        while self.stacks[worker].top < len(self.cell_lists[worker]):
            hook(self)
            self.exec_top(worker)

    # -- conveniences --

    def run(self, entry: EntryCall) -> dict[str, int | list]:
        results = self.seed(entry)
        self.xtop()
        return self.collect(results)

    def snapshot_text(self) -> str:
        return snapshot(self.stacks, self.module,
                        which=0 if self.workers == 1 else None)

    def output_text(self) -> str:
        return "".join(self.output)
