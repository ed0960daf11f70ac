"""Static validation: names, arities, kinds, effects, array lengths.

Produces a CheckedProgram whose side tables drive lowering:

* every routine gets an item table (params, locals, and the implicit
  items introduced by binding a fresh name in an out position);
* every call gets per-argument annotations (value / array designator /
  scalar reference designator), with array lengths instantiated from the
  callee's signature into caller expressions;
* nonlocal-effect tokens are checked for propagation up the call chain.

Validation never mutates the input AST; running it twice on the same tree
yields the same verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import syntax as ast
from .errors import (ArityMismatch, DuplicateName, EffectNotPropagated,
                     UndeclaredVariable, UndefinedRoutine, ValidationError)

BUILTIN_SIGS: dict[str, ast.Signature] = {
    "putc": ast.Signature(ins=(ast.Param("c", "scalar"),),
                          effects=ast.Effects(inouts=("stdout",))),
    "puti": ast.Signature(ins=(ast.Param("v", "scalar"),),
                          effects=ast.Effects(inouts=("stdout",))),
}


@dataclass
class ItemInfo:
    """One named value owned by a routine body."""
    name: str
    kind: str                  # 'scalar' | 'array'
    cls: str                   # 'in' | 'inout' | 'out' | 'local' | 'implicit'
    length: ast.Expr | None = None   # arrays: length expr in caller terms
    pos: ast.Pos = (0, 0)


@dataclass
class ValueArg:
    """Scalar in argument: an expression evaluated by the parent."""
    expr: ast.Expr


@dataclass
class ArrayArg:
    """Array argument: base item plus optional element offset."""
    base: str
    offset: ast.Expr | None    # None means the whole array from element 0
    length: ast.Expr | None    # callee-declared length, caller terms
    creates: bool = False      # True when this out binding created the item


@dataclass
class ScalarRefArg:
    """Scalar inout/out argument: a writable cell designator."""
    base: str
    index: ast.Expr | None     # set when the designator is an array cell
    creates: bool = False


ArgInfo = ValueArg | ArrayArg | ScalarRefArg


@dataclass
class CallInfo:
    callee: str
    sig: ast.Signature
    ins: list[ArgInfo] = field(default_factory=list)
    inouts: list[ArgInfo] = field(default_factory=list)
    outs: list[ArgInfo] = field(default_factory=list)

    def section(self, which: str) -> list[ArgInfo]:
        return getattr(self, which)


@dataclass
class CheckedRoutine:
    decl: ast.Routine
    items: dict[str, ItemInfo]
    calls: dict[int, CallInfo]        # keyed by id(Call node)
    is_builtin: bool = False

    @property
    def name(self) -> str:
        return self.decl.name

    @property
    def sig(self) -> ast.Signature:
        return self.decl.sig


@dataclass
class CheckedProgram:
    routines: dict[str, CheckedRoutine]
    order: list[str]                  # user routines in source order
    source: ast.Program


def _subst(e: ast.Expr, mapping: dict[str, ast.Expr]) -> ast.Expr:
    """Substitute variables by expressions (used to instantiate signature
    array lengths at a call site)."""
    if isinstance(e, ast.IntLit):
        return e
    if isinstance(e, ast.Var):
        return mapping.get(e.name, e)
    if isinstance(e, ast.Index):
        # Length expressions are scalar-only; an Index here cannot appear
        # in a well-formed signature, but substitute defensively.
        return ast.Index(e.base, _subst(e.index, mapping), e.pos)
    if isinstance(e, ast.Unary):
        return ast.Unary(e.op, _subst(e.operand, mapping), e.pos)
    return ast.Binary(e.op, _subst(e.left, mapping),
                      _subst(e.right, mapping), e.pos)


class _RoutineChecker:
    def __init__(self, routine: ast.Routine, table: dict[str, ast.Routine],
                 bodyless: set[str]):
        self.routine = routine
        self.table = table
        self.bodyless = bodyless
        self.items: dict[str, ItemInfo] = {}
        self.calls: dict[int, CallInfo] = {}

    def error(self, exc_type, msg: str, pos: ast.Pos):
        raise exc_type(f"in routine '{self.routine.name}': {msg}", pos)

    # --- declarations ---

    def declare(self, info: ItemInfo):
        if info.name in self.items:
            self.error(DuplicateName,
                       f"duplicate declaration of '{info.name}'", info.pos)
        self.items[info.name] = info

    def check_signature(self):
        sig = self.routine.sig
        seen_ins: list[str] = []
        for section, cls in (("ins", "in"), ("inouts", "inout"),
                             ("outs", "out")):
            for p in sig.section(section):
                if p.kind == "array" and p.length is not None:
                    for v in ast.expr_vars(p.length):
                        if v not in seen_ins:
                            self.error(
                                ValidationError,
                                f"array length for '{p.name}' references "
                                f"'{v}', which is not an earlier in", p.pos)
                self.declare(ItemInfo(p.name, p.kind, cls, p.length, p.pos))
                if cls == "in":
                    seen_ins.append(p.name)

    # --- expressions ---

    def check_expr(self, e: ast.Expr, *, as_scalar: bool = True):
        if isinstance(e, ast.IntLit):
            return
        if isinstance(e, ast.Var):
            info = self.items.get(e.name)
            if info is None:
                self.error(UndeclaredVariable,
                           f"'{e.name}' is not declared", e.pos)
            if as_scalar and info.kind == "array":
                self.error(ValidationError,
                           f"array '{e.name}' used where a scalar is "
                           f"required", e.pos)
            return
        if isinstance(e, ast.Index):
            info = self.items.get(e.base)
            if info is None:
                self.error(UndeclaredVariable,
                           f"'{e.base}' is not declared", e.pos)
            if info.kind != "array":
                self.error(ValidationError,
                           f"'{e.base}' is not an array", e.pos)
            self.check_expr(e.index)
            return
        if isinstance(e, ast.Unary):
            self.check_expr(e.operand)
            return
        self.check_expr(e.left)
        self.check_expr(e.right)

    # --- call arguments ---

    def _array_designator(self, arg: ast.Expr, length: ast.Expr | None,
                          writable: bool, may_create: bool) -> ArrayArg:
        if isinstance(arg, ast.Var):
            info = self.items.get(arg.name)
            if info is None:
                if may_create:
                    created = ItemInfo(arg.name, "array", "implicit",
                                       length, arg.pos)
                    self.declare(created)
                    return ArrayArg(arg.name, None, length, creates=True)
                self.error(UndeclaredVariable,
                           f"'{arg.name}' is not declared", arg.pos)
            if info.kind != "array":
                self.error(ArityMismatch,
                           f"'{arg.name}' is a scalar but an array "
                           f"argument is required", arg.pos)
            if writable and info.cls == "in":
                self.error(ValidationError,
                           f"in array '{arg.name}' cannot be written",
                           arg.pos)
            return ArrayArg(arg.name, None, length)
        if isinstance(arg, ast.Index):
            info = self.items.get(arg.base)
            if info is None:
                self.error(UndeclaredVariable,
                           f"'{arg.base}' is not declared", arg.pos)
            if info.kind != "array":
                self.error(ArityMismatch,
                           f"'{arg.base}' is not an array", arg.pos)
            if writable and info.cls == "in":
                self.error(ValidationError,
                           f"in array '{arg.base}' cannot be written",
                           arg.pos)
            self.check_expr(arg.index)
            return ArrayArg(arg.base, arg.index, length)
        self.error(ArityMismatch,
                   "an array argument must be a name or name[offset]",
                   getattr(arg, "pos", (0, 0)))

    def _scalar_ref(self, arg: ast.Expr, may_create: bool) -> ScalarRefArg:
        if isinstance(arg, ast.Var):
            info = self.items.get(arg.name)
            if info is None:
                if may_create:
                    self.declare(ItemInfo(arg.name, "scalar", "implicit",
                                          None, arg.pos))
                    return ScalarRefArg(arg.name, None, creates=True)
                self.error(UndeclaredVariable,
                           f"'{arg.name}' is not declared", arg.pos)
            if info.kind != "scalar":
                self.error(ArityMismatch,
                           f"'{arg.name}' is an array but a scalar "
                           f"argument is required", arg.pos)
            return ScalarRefArg(arg.name, None)
        if isinstance(arg, ast.Index):
            info = self.items.get(arg.base)
            if info is None:
                self.error(UndeclaredVariable,
                           f"'{arg.base}' is not declared", arg.pos)
            if info.kind != "array":
                self.error(ArityMismatch,
                           f"'{arg.base}' is not an array", arg.pos)
            if info.cls == "in":
                self.error(ValidationError,
                           f"in array '{arg.base}' cannot be written",
                           arg.pos)
            self.check_expr(arg.index)
            return ScalarRefArg(arg.base, arg.index)
        self.error(ArityMismatch,
                   "an inout/out argument must name a writable item",
                   getattr(arg, "pos", (0, 0)))

    def check_call(self, call: ast.Call):
        target = self.table.get(call.callee)
        if target is None:
            self.error(UndefinedRoutine,
                       f"call to undefined routine '{call.callee}'", call.pos)
        if target.body is None and call.callee in self.bodyless:
            self.error(UndefinedRoutine,
                       f"routine '{call.callee}' is declared but has no "
                       f"body", call.pos)
        sig = target.sig
        info = CallInfo(call.callee, sig)
        in_map: dict[str, ast.Expr] = {}
        for section, writable, may_create in (
                ("ins", False, False), ("inouts", True, False),
                ("outs", True, True)):
            params = sig.section(section)
            args = call.args.section(section)
            if len(params) != len(args):
                self.error(ArityMismatch,
                           f"'{call.callee}' takes {len(params)} {section}, "
                           f"got {len(args)}", call.pos)
            for p, a in zip(params, args):
                length = (_subst(p.length, in_map)
                          if p.length is not None else None)
                if p.kind == "array":
                    ann = self._array_designator(a, length, writable,
                                                 may_create)
                elif section == "ins":
                    self.check_expr(a)
                    ann = ValueArg(a)
                else:
                    ann = self._scalar_ref(a, may_create)
                info.section(section).append(ann)
                if section == "ins" and p.kind == "scalar":
                    in_map[p.name] = a
        # Effect propagation: every callee token must be declared here.
        mine = self.routine.sig.effects
        pairs = ((sig.effects.ins, mine.ins + mine.inouts),
                 (sig.effects.inouts, mine.inouts),
                 (sig.effects.outs, mine.outs + mine.inouts))
        for tokens, allowed in pairs:
            for tok in tokens:
                if tok not in allowed:
                    raise EffectNotPropagated(self.routine.name, tok,
                                              call.pos)
        self.calls[id(call)] = info

    # --- statements ---

    def check_stmt(self, s: ast.Stmt):
        if isinstance(s, ast.LocalDecl):
            if s.length is not None:
                self.check_expr(s.length)
                self.declare(ItemInfo(s.name, "array", "local", s.length,
                                      s.pos))
            else:
                if s.init is not None:
                    self.check_expr(s.init)
                self.declare(ItemInfo(s.name, "scalar", "local", None, s.pos))
            return
        if isinstance(s, ast.Assign):
            self.check_expr(s.value)
            t = s.target
            if isinstance(t, ast.Var):
                info = self.items.get(t.name)
                if info is None:
                    self.error(UndeclaredVariable,
                               f"'{t.name}' is not declared", t.pos)
                if info.kind != "scalar":
                    self.error(ValidationError,
                               f"cannot assign to array '{t.name}'", t.pos)
            else:
                info = self.items.get(t.base)
                if info is None:
                    self.error(UndeclaredVariable,
                               f"'{t.base}' is not declared", t.pos)
                if info.kind != "array":
                    self.error(ValidationError,
                               f"'{t.base}' is not an array", t.pos)
                if info.cls == "in":
                    self.error(ValidationError,
                               f"in array '{t.base}' cannot be written",
                               t.pos)
                self.check_expr(t.index)
            return
        if isinstance(s, ast.Call):
            self.check_call(s)
            return
        if isinstance(s, ast.If):
            self.check_expr(s.cond)
            self.check_stmt(s.then)
            if s.orelse is not None:
                self.check_stmt(s.orelse)
            return
        if isinstance(s, ast.While):
            self.check_expr(s.cond)
            self.check_stmt(s.body)
            return
        for inner in s.body:
            self.check_stmt(inner)

    def run(self) -> CheckedRoutine:
        self.check_signature()
        if self.routine.body is not None:
            self.check_stmt(self.routine.body)
        return CheckedRoutine(self.routine, self.items, self.calls)


def _sig_compatible(a: ast.Signature, b: ast.Signature) -> bool:
    for section in ("ins", "inouts", "outs"):
        pa, pb = a.section(section), b.section(section)
        if len(pa) != len(pb) or any(x.kind != y.kind for x, y in zip(pa, pb)):
            return False
    return True


def validate(program: ast.Program) -> CheckedProgram:
    """Check a parsed program and return it with analysis side tables."""
    table: dict[str, ast.Routine] = {}
    bodyless: set[str] = set()
    order: list[str] = []
    for name, sig in BUILTIN_SIGS.items():
        table[name] = ast.Routine(name, sig, None)
    for r in program.routines:
        existing = table.get(r.name)
        if existing is not None:
            if not _sig_compatible(existing.sig, r.sig):
                raise DuplicateName(
                    f"conflicting declarations of '{r.name}'", r.pos)
            if existing.body is not None and r.body is not None:
                raise DuplicateName(
                    f"routine '{r.name}' is defined twice", r.pos)
            if r.body is None:
                continue  # redundant declaration of an existing routine
            if r.name in BUILTIN_SIGS:
                raise DuplicateName(
                    f"'{r.name}' is a builtin and cannot be redefined", r.pos)
            order.remove(r.name)
        table[r.name] = r
        if r.name not in BUILTIN_SIGS:
            order.append(r.name)
        if r.body is None and r.name not in BUILTIN_SIGS:
            bodyless.add(r.name)
        else:
            bodyless.discard(r.name)
    checked: dict[str, CheckedRoutine] = {}
    for name, sig in BUILTIN_SIGS.items():
        checked[name] = CheckedRoutine(table[name], {}, {}, is_builtin=True)
    for name in order:
        r = table[name]
        if r.body is None:
            checked[name] = CheckedRoutine(r, {}, {})
            continue
        checked[name] = _RoutineChecker(r, table, bodyless).run()
    return CheckedProgram(checked, order, program)
