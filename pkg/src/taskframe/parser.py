"""Recursive-descent parser for the TSIA surface language.

Grammar sketch:

    program   := routine*
    routine   := IDENT '(' params ';' params ';' params ')' effects? (block)?
    effects   := '(' names ';' names ';' names ')'
    param     := ('int'|'char') IDENT ('[' expr ']')?
    block     := '{' stmt* '}'
    stmt      := 'int' IDENT ('=' expr | '[' expr ']')? ';'
               | designator ('='|'+='|'-=') expr ';'
               | call ';'?                      -- trailing ';' optional
               | 'if' '(' expr ')' stmt ('else' stmt)?
               | 'while' '(' expr ')' stmt
               | block
    call      := IDENT '(' args ';' args ';' args ')'

Calls keep their three argument sections; all arguments parse as
expressions and the validator enforces designator shape where required.
"""

from __future__ import annotations

from .errors import ParseError
from .lexer import Token, tokenize
from . import syntax as ast


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, offset: int = 0) -> Token | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def at(self, *kinds: str) -> bool:
        t = self.peek()
        return t is not None and t.kind in kinds

    def pos(self) -> tuple[int, int]:
        t = self.peek()
        if t is not None:
            return t.pos
        return self.tokens[-1].pos if self.tokens else (1, 1)

    def take(self, kind: str) -> Token:
        t = self.peek()
        if t is None or t.kind != kind:
            got = t.kind if t else "end of input"
            raise ParseError(f"unexpected {got}", self.pos(), expected=(kind,))
        self.i += 1
        return t

    def accept(self, kind: str) -> Token | None:
        if self.at(kind):
            return self.take(kind)
        return None

    # --- expressions (precedence climbing) ---

    def expr(self) -> ast.Expr:
        return self.comparison()

    def comparison(self) -> ast.Expr:
        left = self.additive()
        while self.at("EQ", "NE", "LT", "LE", "GT", "GE"):
            op = self.take(self.peek().kind)
            right = self.additive()
            left = ast.Binary(str(op.value), left, right, op.pos)
        return left

    def additive(self) -> ast.Expr:
        left = self.multiplicative()
        while self.at("PLUS", "MINUS"):
            op = self.take(self.peek().kind)
            right = self.multiplicative()
            left = ast.Binary(str(op.value), left, right, op.pos)
        return left

    def multiplicative(self) -> ast.Expr:
        left = self.unary()
        while self.at("STAR", "SLASH", "PERCENT"):
            op = self.take(self.peek().kind)
            right = self.unary()
            left = ast.Binary(str(op.value), left, right, op.pos)
        return left

    def unary(self) -> ast.Expr:
        if self.at("MINUS"):
            t = self.take("MINUS")
            return ast.Unary("-", self.unary(), t.pos)
        return self.primary()

    def primary(self) -> ast.Expr:
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input", self.pos())
        if t.kind == "INT":
            self.take("INT")
            return ast.IntLit(int(t.value), t.pos)
        if t.kind == "IDENT":
            self.take("IDENT")
            if self.accept("LBRACKET"):
                idx = self.expr()
                self.take("RBRACKET")
                return ast.Index(str(t.value), idx, t.pos)
            return ast.Var(str(t.value), t.pos)
        if t.kind == "LPAREN":
            self.take("LPAREN")
            e = self.expr()
            self.take("RPAREN")
            return e
        raise ParseError(f"unexpected {t.kind}", t.pos,
                         expected=("INT", "IDENT", "LPAREN", "MINUS"))

    # --- statements ---

    def block(self) -> ast.Block:
        lb = self.take("LBRACE")
        body: list[ast.Stmt] = []
        while not self.at("RBRACE"):
            body.append(self.stmt())
        self.take("RBRACE")
        return ast.Block(body, lb.pos)

    def stmt(self) -> ast.Stmt:
        if self.at("LBRACE"):
            return self.block()
        if self.at("KW_IF"):
            t = self.take("KW_IF")
            self.take("LPAREN")
            cond = self.expr()
            self.take("RPAREN")
            then = self.stmt()
            orelse = self.stmt() if self.accept("KW_ELSE") else None
            return ast.If(cond, then, orelse, t.pos)
        if self.at("KW_WHILE"):
            t = self.take("KW_WHILE")
            self.take("LPAREN")
            cond = self.expr()
            self.take("RPAREN")
            return ast.While(cond, self.stmt(), t.pos)
        if self.at("KW_INT", "KW_CHAR"):
            t = self.take(self.peek().kind)
            name = self.take("IDENT")
            if self.accept("LBRACKET"):
                length = self.expr()
                self.take("RBRACKET")
                self.take("SEMI")
                return ast.LocalDecl(str(name.value), None, length, t.pos)
            init = self.expr() if self.accept("ASSIGN") else None
            self.take("SEMI")
            return ast.LocalDecl(str(name.value), init, None, t.pos)
        if self.at("IDENT"):
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == "LPAREN":
                call = self.call_form()
                self.accept("SEMI")
                return call
            name = self.take("IDENT")
            target: ast.Var | ast.Index
            if self.accept("LBRACKET"):
                idx = self.expr()
                self.take("RBRACKET")
                target = ast.Index(str(name.value), idx, name.pos)
            else:
                target = ast.Var(str(name.value), name.pos)
            opt = self.peek()
            if opt is None or opt.kind not in ("ASSIGN", "PLUSEQ", "MINUSEQ"):
                raise ParseError("expected assignment", self.pos(),
                                 expected=("ASSIGN", "PLUSEQ", "MINUSEQ"))
            self.take(opt.kind)
            op = {"ASSIGN": "=", "PLUSEQ": "+=", "MINUSEQ": "-="}[opt.kind]
            value = self.expr()
            self.take("SEMI")
            return ast.Assign(target, op, value, name.pos)
        raise ParseError(f"unexpected {self.peek().kind}", self.pos(),
                         expected=("statement",))

    def call_form(self) -> ast.Call:
        name = self.take("IDENT")
        self.take("LPAREN")
        args = ast.CallArgs()
        args.ins = self.arg_list()
        self.take("SEMI")
        args.inouts = self.arg_list()
        self.take("SEMI")
        args.outs = self.arg_list()
        self.take("RPAREN")
        return ast.Call(str(name.value), args, name.pos)

    def arg_list(self) -> list[ast.Expr]:
        if self.at("SEMI", "RPAREN"):
            return []
        out = [self.expr()]
        while self.accept("COMMA"):
            out.append(self.expr())
        return out

    # --- routines ---

    def param_list(self) -> tuple[ast.Param, ...]:
        if self.at("SEMI", "RPAREN"):
            return ()
        out = [self.param()]
        while self.accept("COMMA"):
            out.append(self.param())
        return tuple(out)

    def param(self) -> ast.Param:
        t = self.peek()
        if t is None or t.kind not in ("KW_INT", "KW_CHAR"):
            raise ParseError("expected parameter type", self.pos(),
                             expected=("KW_INT", "KW_CHAR"))
        self.take(t.kind)
        name = self.take("IDENT")
        if self.accept("LBRACKET"):
            length = self.expr()
            self.take("RBRACKET")
            return ast.Param(str(name.value), "array", length, name.pos)
        return ast.Param(str(name.value), "scalar", None, name.pos)

    def name_list(self) -> tuple[str, ...]:
        if self.at("SEMI", "RPAREN"):
            return ()
        out = [str(self.take("IDENT").value)]
        while self.accept("COMMA"):
            out.append(str(self.take("IDENT").value))
        return tuple(out)

    def routine(self) -> ast.Routine:
        name = self.take("IDENT")
        self.take("LPAREN")
        ins = self.param_list()
        self.take("SEMI")
        inouts = self.param_list()
        self.take("SEMI")
        outs = self.param_list()
        self.take("RPAREN")
        effects = ast.Effects()
        if self.at("LPAREN"):
            self.take("LPAREN")
            eff_ins = self.name_list()
            self.take("SEMI")
            eff_inouts = self.name_list()
            self.take("SEMI")
            eff_outs = self.name_list()
            self.take("RPAREN")
            effects = ast.Effects(eff_ins, eff_inouts, eff_outs)
        sig = ast.Signature(ins, inouts, outs, effects)
        body = self.block() if self.at("LBRACE") else None
        return ast.Routine(str(name.value), sig, body, name.pos)

    def program(self) -> ast.Program:
        routines = []
        while self.peek() is not None:
            routines.append(self.routine())
        return ast.Program(routines)


def parse(tokens: list[Token]) -> ast.Program:
    """Parse a token sequence into a Program."""
    return _Parser(tokens).program()


def parse_source(source: str) -> ast.Program:
    return parse(tokenize(source))
