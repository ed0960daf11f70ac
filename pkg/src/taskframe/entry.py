"""Entry calls: the frame seeded to start an execution.

Text form mirrors a call statement: ``tsum(1,100,0;;a)``. In arguments
are literals (ints, ``'c'`` characters, or ``[1,2,3]`` arrays), inouts
take their initial value as ``name=literal``, outs are bare result names.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EntryError
from .lexer import tokenize

Literal = int | list


@dataclass
class EntryCall:
    routine: str
    ins: list[Literal] = field(default_factory=list)
    inouts: list[tuple[str, Literal]] = field(default_factory=list)
    outs: list[str] = field(default_factory=list)


class _P:
    def __init__(self, text: str):
        try:
            self.toks = tokenize(text)
        except Exception as exc:
            raise EntryError(f"bad entry call: {exc}") from exc
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, kind: str):
        t = self.peek()
        if t is None or t.kind != kind:
            raise EntryError(f"bad entry call: expected {kind}, got "
                             f"{t.kind if t else 'end'}")
        self.i += 1
        return t

    def at(self, kind: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind

    def literal(self) -> Literal:
        if self.at("LBRACKET"):
            self.take("LBRACKET")
            values: list[int] = []
            while not self.at("RBRACKET"):
                values.append(self.int_literal())
                if self.at("COMMA"):
                    self.take("COMMA")
            self.take("RBRACKET")
            return values
        return self.int_literal()

    def int_literal(self) -> int:
        neg = False
        if self.at("MINUS"):
            self.take("MINUS")
            neg = True
        t = self.take("INT")
        return -t.value if neg else t.value


def parse_entry(text: str) -> EntryCall:
    p = _P(text)
    name = p.take("IDENT")
    p.take("LPAREN")
    call = EntryCall(str(name.value))
    while not p.at("SEMI"):
        call.ins.append(p.literal())
        if p.at("COMMA"):
            p.take("COMMA")
    p.take("SEMI")
    while not p.at("SEMI"):
        n = p.take("IDENT")
        p.take("ASSIGN")
        call.inouts.append((str(n.value), p.literal()))
        if p.at("COMMA"):
            p.take("COMMA")
    p.take("SEMI")
    while not p.at("RPAREN"):
        call.outs.append(str(p.take("IDENT").value))
        if p.at("COMMA"):
            p.take("COMMA")
    p.take("RPAREN")
    if p.peek() is not None:
        raise EntryError("bad entry call: trailing tokens")
    return call
