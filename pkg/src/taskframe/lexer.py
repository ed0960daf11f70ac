"""Tokenizer for `.tsia` source text."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import LexError

KEYWORDS = {
    "int": "KW_INT",
    "char": "KW_CHAR",
    "if": "KW_IF",
    "else": "KW_ELSE",
    "while": "KW_WHILE",
}

# Longest match first.
PUNCT = [
    ("+=", "PLUSEQ"), ("-=", "MINUSEQ"),
    ("==", "EQ"), ("!=", "NE"), ("<=", "LE"), (">=", "GE"),
    ("<", "LT"), (">", "GT"), ("=", "ASSIGN"),
    ("(", "LPAREN"), (")", "RPAREN"),
    ("{", "LBRACE"), ("}", "RBRACE"),
    ("[", "LBRACKET"), ("]", "RBRACKET"),
    (";", "SEMI"), (",", "COMMA"),
    ("+", "PLUS"), ("-", "MINUS"), ("*", "STAR"),
    ("/", "SLASH"), ("%", "PERCENT"),
]


@dataclass(frozen=True)
class Token:
    kind: str
    value: str | int
    pos: tuple[int, int]  # (line, column), both 1-based

    def __repr__(self) -> str:
        return f"{self.kind}({self.value!r})@{self.pos[0]}:{self.pos[1]}"


def tokenize(source: str) -> list[Token]:
    """Lex source into tokens with positions; comments and whitespace vanish.

    Character literals like 'a' become INT tokens carrying the code point.
    Raises LexError on an illegal character or an unterminated comment.
    """
    tokens: list[Token] = []
    i = 0
    line, col = 1, 1
    n = len(source)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = source[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("/*", i):
            start = (line, col)
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance(1)
            if i >= n:
                raise LexError("unterminated comment", start)
            advance(2)
            continue
        pos = (line, col)
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("INT", int(source[i:j]), pos))
            advance(j - i)
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            tokens.append(Token(KEYWORDS.get(word, "IDENT"),
                                word if word not in KEYWORDS else word, pos))
            advance(j - i)
            continue
        if c == "'":
            # 'x' or '\n' style escapes
            if i + 2 < n and source[i + 1] == "\\" and source[i + 3:i + 4] == "'":
                esc = source[i + 2]
                table = {"n": 10, "t": 9, "0": 0, "\\": 92, "'": 39}
                if esc not in table:
                    raise LexError(f"unknown escape '\\{esc}'", pos)
                tokens.append(Token("INT", table[esc], pos))
                advance(4)
                continue
            if i + 2 < n and source[i + 2] == "'":
                tokens.append(Token("INT", ord(source[i + 1]), pos))
                advance(3)
                continue
            raise LexError("malformed character literal", pos)
        for text, kind in PUNCT:
            if source.startswith(text, i):
                tokens.append(Token(kind, text, pos))
                advance(len(text))
                break
        else:
            raise LexError(f"illegal character {c!r}", pos)
    return tokens
