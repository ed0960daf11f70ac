"""Abstract syntax: expressions, statements, routines, signatures.

Nodes carry the position of their first token so later passes can report
errors against the source. The pretty-printer emits source that reparses
to a structurally identical tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Pos = tuple[int, int]


# --- expressions ---

@dataclass(frozen=True)
class IntLit:
    value: int
    pos: Pos = (0, 0)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = (0, 0)


@dataclass(frozen=True)
class Index:
    base: str
    index: "Expr"
    pos: Pos = (0, 0)


@dataclass(frozen=True)
class Unary:
    op: str  # '-'
    operand: "Expr"
    pos: Pos = (0, 0)


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / % == != < <= > >=
    left: "Expr"
    right: "Expr"
    pos: Pos = (0, 0)


Expr = IntLit | Var | Index | Unary | Binary


# --- statements ---

@dataclass
class LocalDecl:
    name: str
    init: Expr | None
    length: Expr | None  # non-None for `int v[e];`
    pos: Pos = (0, 0)


@dataclass
class Assign:
    target: Var | Index
    op: str  # '=', '+=', '-='
    value: Expr
    pos: Pos = (0, 0)


@dataclass
class CallArgs:
    """The three comma-separated sections of a call: ins; inouts; outs."""
    ins: list[Expr] = field(default_factory=list)
    inouts: list[Expr] = field(default_factory=list)
    outs: list[Expr] = field(default_factory=list)

    def section(self, which: str) -> list[Expr]:
        return getattr(self, which)


@dataclass
class Call:
    callee: str
    args: CallArgs
    pos: Pos = (0, 0)


@dataclass
class If:
    cond: Expr
    then: "Stmt"
    orelse: "Stmt | None"
    pos: Pos = (0, 0)


@dataclass
class While:
    cond: Expr
    body: "Stmt"
    pos: Pos = (0, 0)


@dataclass
class Block:
    body: list["Stmt"] = field(default_factory=list)
    pos: Pos = (0, 0)


Stmt = LocalDecl | Assign | Call | If | While | Block


# --- signatures and routines ---

@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # 'scalar' | 'array'
    length: Expr | None = None  # arrays only; references earlier ins
    pos: Pos = (0, 0)


@dataclass(frozen=True)
class Effects:
    """Nonlocal effect tokens, as a signature-shaped triple of bare names."""
    ins: tuple[str, ...] = ()
    inouts: tuple[str, ...] = ()
    outs: tuple[str, ...] = ()

    def all_tokens(self) -> tuple[str, ...]:
        return self.ins + self.inouts + self.outs

    def is_empty(self) -> bool:
        return not (self.ins or self.inouts or self.outs)


@dataclass(frozen=True)
class Signature:
    ins: tuple[Param, ...] = ()
    inouts: tuple[Param, ...] = ()
    outs: tuple[Param, ...] = ()
    effects: Effects = Effects()

    def section(self, which: str) -> tuple[Param, ...]:
        return getattr(self, which)

    def all_params(self) -> tuple[Param, ...]:
        return self.ins + self.inouts + self.outs


@dataclass
class Routine:
    name: str
    sig: Signature
    body: Block | None  # None for a bare declaration (builtin/header form)
    pos: Pos = (0, 0)


@dataclass
class Program:
    routines: list[Routine] = field(default_factory=list)


# --- pretty printing ---

_PREC = {"==": 1, "!=": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
         "+": 2, "-": 2, "*": 3, "/": 3, "%": 3}


def fmt_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.base}[{fmt_expr(e.index)}]"
    if isinstance(e, Unary):
        return f"-{fmt_expr(e.operand, 4)}"
    prec = _PREC[e.op]
    s = f"{fmt_expr(e.left, prec)}{e.op}{fmt_expr(e.right, prec + 1)}"
    return f"({s})" if prec < parent_prec else s


def _fmt_params(params: tuple[Param, ...]) -> str:
    out = []
    for p in params:
        if p.kind == "array":
            out.append(f"int {p.name}[{fmt_expr(p.length)}]")
        else:
            out.append(f"int {p.name}")
    return ", ".join(out)


def fmt_signature(name: str, sig: Signature) -> str:
    text = (f"{name}({_fmt_params(sig.ins)};"
            f"{_fmt_params(sig.inouts)};{_fmt_params(sig.outs)})")
    eff = sig.effects
    if not eff.is_empty():
        text += (f"({','.join(eff.ins)};{','.join(eff.inouts)};"
                 f"{','.join(eff.outs)})")
    return text


def fmt_stmt(s: Stmt, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(s, LocalDecl):
        if s.length is not None:
            return f"{pad}int {s.name}[{fmt_expr(s.length)}];"
        init = f" = {fmt_expr(s.init)}" if s.init is not None else ""
        return f"{pad}int {s.name}{init};"
    if isinstance(s, Assign):
        tgt = s.target.name if isinstance(s.target, Var) else fmt_expr(s.target)
        return f"{pad}{tgt} {s.op} {fmt_expr(s.value)};"
    if isinstance(s, Call):
        sections = [", ".join(fmt_expr(a) for a in s.args.section(w))
                    for w in ("ins", "inouts", "outs")]
        return f"{pad}{s.callee}({';'.join(sections)});"
    if isinstance(s, If):
        text = f"{pad}if ({fmt_expr(s.cond)})\n{fmt_stmt(s.then, indent + 1)}"
        if s.orelse is not None:
            text += f"\n{pad}else\n{fmt_stmt(s.orelse, indent + 1)}"
        return text
    if isinstance(s, While):
        return f"{pad}while ({fmt_expr(s.cond)})\n{fmt_stmt(s.body, indent + 1)}"
    lines = [f"{pad}{{"]
    lines += [fmt_stmt(inner, indent + 1) for inner in s.body]
    lines.append(f"{pad}}}")
    return "\n".join(lines)


def pretty(program: Program) -> str:
    """Render a program back to parseable source."""
    parts = []
    for r in program.routines:
        head = fmt_signature(r.name, r.sig)
        if r.body is None:
            parts.append(head)
        else:
            parts.append(f"{head}\n{fmt_stmt(r.body)}")
    return "\n\n".join(parts) + "\n"


def expr_key(e: Expr) -> str:
    """Canonical structural key for syntactic-equality comparisons."""
    if isinstance(e, IntLit):
        return f"#{e.value}"
    if isinstance(e, Var):
        return f"v:{e.name}"
    if isinstance(e, Index):
        return f"ix:{e.base}[{expr_key(e.index)}]"
    if isinstance(e, Unary):
        return f"(-{expr_key(e.operand)})"
    return f"({expr_key(e.left)}{e.op}{expr_key(e.right)})"


def expr_vars(e: Expr, acc: set[str] | None = None) -> set[str]:
    """All variable names read by an expression (array bases included)."""
    if acc is None:
        acc = set()
    if isinstance(e, Var):
        acc.add(e.name)
    elif isinstance(e, Index):
        acc.add(e.base)
        expr_vars(e.index, acc)
    elif isinstance(e, Unary):
        expr_vars(e.operand, acc)
    elif isinstance(e, Binary):
        expr_vars(e.left, acc)
        expr_vars(e.right, acc)
    return acc
