"""Executable IR: routines lowered to frame layouts, segments and spawn plans.

Frame layout (frozen):

    byte 0   routine id
    byte 8   frame length in bytes
    byte 16  entry index (0 for task frames)
    byte 24  ready flag (0 or 1)
    byte 32+ argument/local slots, 8 bytes each

A slot holds either a 64-bit value or a packed item reference
``(stack_id << 40) | cell_index``. Which one is fixed per routine by the
slot table, so cells need no tags.

Task-mode bodies are segment trees: straight-line prelude instructions,
optionally a conditional fork, and leaves that replace the frame with a
spawn group (child frames, payload regions guarded by ``_skip`` frames,
and at most one continuation frame). Activation-mode bodies are state
machines whose yield points push one child frame and record the next
entry index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import syntax as ast
from .syntax import Signature

CELL = 8
HEADER_CELLS = 4
HEADER_BYTES = HEADER_CELLS * CELL

# Fixed builtin routine ids; user routines are numbered densely after these.
SKIP_ID = 0
PUTC_ID = 1
PUTI_ID = 2
THIEF_ID = 3
COP_ID = 4
DUP_ID = 5
FIRST_USER_ID = 6

BUILTIN_NAMES = {SKIP_ID: "_skip", PUTC_ID: "putc", PUTI_ID: "puti",
                 THIEF_ID: "_thief", COP_ID: "_cop", DUP_ID: "_dup"}

SKIP_FRAME_CELLS = HEADER_CELLS + 1        # header + byte count to skip
THIEF_FRAME_CELLS = HEADER_CELLS + 2       # header + skip byte count + label
COP_FRAME_CELLS = HEADER_CELLS + 3         # header + victim stack/offset/label
DUP_FRAME_CELLS = HEADER_CELLS + 2         # header + src ref + dst ref


@dataclass(frozen=True)
class Slot:
    name: str
    kind: str          # 'val' | 'ref'
    section: str       # 'in' | 'inout' | 'out' | 'local'
    is_array: bool = False


# --- references and slot initializers used by spawn plans ---

@dataclass(frozen=True)
class RefSlot:
    """Reference into a sibling frame written by the same spawn group."""
    spawn: int
    slot: int


@dataclass(frozen=True)
class RefPayload:
    """Reference into this segment's skip-guarded payload region."""
    item: str
    offset: ast.Expr | None = None  # element offset, arrays only


@dataclass(frozen=True)
class RefForward:
    """Copy of one of the executing frame's own ref slots, plus offset."""
    slot_name: str
    offset: ast.Expr | None = None


@dataclass(frozen=True)
class RefOwnSlot:
    """Reference to a slot cell of the executing frame itself.

    Only activation frames hand these out; the frame outlives its children.
    """
    slot_name: str


RefSpec = RefSlot | RefPayload | RefForward | RefOwnSlot


@dataclass(frozen=True)
class SIValue:
    expr: ast.Expr


@dataclass(frozen=True)
class SIHome:
    """This slot is the home cell of an item written later by a sibling."""
    item: str
    init: ast.Expr | None = None    # None zero-fills


@dataclass(frozen=True)
class SIRef:
    ref: RefSpec


SlotInit = SIValue | SIHome | SIRef


@dataclass
class ArrayUse:
    """How a spawn touches an array, for the independence analysis."""
    base: str
    offset_key: str      # canonical key; whole array uses "#0"
    length_key: str | None
    writes: bool


@dataclass
class SpawnPlan:
    callee: str
    args: list[SlotInit]
    ready: int = 1
    reads: set[str] = field(default_factory=set)
    writes: set[str] = field(default_factory=set)
    array_uses: list[ArrayUse] = field(default_factory=list)


@dataclass
class PayloadItem:
    """A skip-guarded stack region owned by one segment.

    Scalar homes use ``cells_expr=None`` (one cell each, grouped); arrays
    carry their element-count expression.
    """
    item: str
    cells_expr: ast.Expr | None
    init: ast.Expr | None = None   # scalar cells only
    pos: ast.Pos = (0, 0)


# --- task-mode segment tree ---

@dataclass
class PStmt:
    stmt: ast.Stmt


@dataclass
class PArrayCreate:
    payload: PayloadItem


PInstr = PStmt | PArrayCreate


@dataclass
class SegLeaf:
    spawns: list[SpawnPlan] = field(default_factory=list)
    scalar_cells: list[PayloadItem] = field(default_factory=list)


@dataclass
class SegCond:
    cond: ast.Expr
    then: "SegBody"
    orelse: "SegBody"


@dataclass
class SegBody:
    prelude: list[PInstr] = field(default_factory=list)
    ending: "SegLeaf | SegCond" = field(default_factory=SegLeaf)


# --- activation-mode state machine ---

@dataclass
class AStmt:
    stmt: ast.Stmt


@dataclass
class AGrow:
    """Extend the topmost frame downward to hold a local array payload."""
    item: str
    cells_expr: ast.Expr
    pos: ast.Pos = (0, 0)


@dataclass
class TYield:
    """Push one child frame, record the resumption entry, return."""
    push: SpawnPlan
    next_state: int


@dataclass
class TGoto:
    state: int


@dataclass
class TCond:
    cond: ast.Expr
    then_state: int
    else_state: int


@dataclass
class TPop:
    pass


Terminator = TYield | TGoto | TCond | TPop


@dataclass
class StateBlock:
    instrs: list[AStmt | AGrow] = field(default_factory=list)
    term: Terminator = field(default_factory=TPop)


@dataclass
class ActBody:
    states: list[StateBlock] = field(default_factory=list)


@dataclass
class IrRoutine:
    name: str
    mode: str                      # 'task' | 'activation' | 'builtin'
    sig: Signature
    slots: list[Slot]
    body: SegBody | ActBody | None
    rid: int = -1
    entry_count: int = 1
    origin: str | None = None      # source routine for continuations
    # Slots holding refs into the frame's own grown array areas; these move
    # with the frame when it relocates.
    own_array_slots: list[str] = field(default_factory=list)

    @property
    def frame_cells(self) -> int:
        # Steal targets must be able to hold a thief frame in place (header
        # plus skip count and label), so frames are at least 2 slots; the
        # scheduler-internal frames keep their exact layouts, and `_skip`
        # keeps its semantic 40-byte size.
        if self.name in ("_skip", "_thief", "_cop", "_dup"):
            return HEADER_CELLS + len(self.slots)
        return HEADER_CELLS + max(len(self.slots), 2)

    @property
    def frame_bytes(self) -> int:
        return self.frame_cells * CELL

    def slot_index(self, name: str) -> int:
        for i, s in enumerate(self.slots):
            if s.name == name:
                return HEADER_CELLS + i
        raise KeyError(name)


@dataclass
class IrModule:
    routines: dict[str, IrRoutine]
    by_id: list[IrRoutine]
    mode: str
    overrides: dict[str, str]

    def routine(self, name: str) -> IrRoutine:
        return self.routines[name]


def builtin_routines() -> list[IrRoutine]:
    """The machine-internal routines every module registers."""
    def mk(name, rid, slots, sig=None):
        return IrRoutine(name, "builtin", sig or Signature(), slots, None,
                         rid=rid)

    effectful = Signature(ins=(ast.Param("c", "scalar"),),
                          effects=ast.Effects(inouts=("stdout",)))
    return [
        mk("_skip", SKIP_ID, [Slot("n", "val", "in")]),
        mk("putc", PUTC_ID, [Slot("c", "val", "in")], effectful),
        mk("puti", PUTI_ID, [Slot("v", "val", "in")], effectful),
        mk("_thief", THIEF_ID,
           [Slot("n", "val", "in"), Slot("label", "val", "in")]),
        mk("_cop", COP_ID,
           [Slot("vstack", "val", "in"), Slot("voff", "val", "in"),
            Slot("label", "val", "in")]),
        mk("_dup", DUP_ID,
           [Slot("src", "ref", "in"), Slot("dst", "ref", "out")]),
    ]


def iter_leaves(body: SegBody):
    """Yield SegLeaf nodes in branch order (then before else)."""
    stack = [body]
    while stack:
        b = stack.pop(0)
        if isinstance(b.ending, SegLeaf):
            yield b.ending
        else:
            stack.insert(0, b.ending.orelse)
            stack.insert(0, b.ending.then)


def spawn_groups(routine: IrRoutine) -> list[list[SpawnPlan]]:
    """All spawn lists of a routine, in depth-first branch order."""
    if isinstance(routine.body, SegBody):
        return [leaf.spawns for leaf in iter_leaves(routine.body)
                if leaf.spawns]
    if isinstance(routine.body, ActBody):
        groups = []
        for state in routine.body.states:
            if isinstance(state.term, TYield):
                groups.append([state.term.push])
        return groups
    return []


def emit_ir(module: IrModule) -> str:
    """Stable one-line-per-routine dump used by golden tests.

    Spawn plans appear flattened in depth-first branch order as
    ``callee:readyflag``.
    """
    lines = [f"module routines={len(module.by_id)} mode={module.mode}"]
    for r in module.by_id:
        line = (f"routine {r.rid} name={r.name} mode={r.mode} "
                f"frame={r.frame_bytes} entries={r.entry_count}")
        if r.mode != "builtin":
            flat = [f"{p.callee}:{p.ready}"
                    for group in spawn_groups(r) for p in group]
            line += f" spawns=[{' '.join(flat)}]"
        lines.append(line)
    return "\n".join(lines) + "\n"
