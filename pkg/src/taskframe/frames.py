"""Byte-addressed frame stacks, item references, frame walking, snapshots.

A stack is a fixed-size region of 8-byte cells with a top cursor that
grows downward (pushing decrements the cursor). The public interface
speaks byte offsets; internally everything is cell-indexed.

Item references pack ``(stack_id, cell)`` into one integer:
``(stack_id << 40) | cell``. The per-run stack list places every worker
stack first and one host arena last; entry-call result cells and entry
arrays live in the arena, like locals of the embedding program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BadCapacity, BadRef, StackOverflow
from .ir import (CELL, HEADER_CELLS, IrModule, IrRoutine, SKIP_FRAME_CELLS,
                 SKIP_ID, THIEF_ID, COP_ID)

DEFAULT_STACK_BYTES = 2_000_000
MIN_STACK_BYTES = 4096
REF_SHIFT = 40
REF_MASK = (1 << REF_SHIFT) - 1


def pack_ref(stack_id: int, cell: int) -> int:
    return (stack_id << REF_SHIFT) | cell


@dataclass(frozen=True)
class ItemRef:
    """A stable reference to one 8-byte value cell."""
    stack: int
    offset: int  # bytes

    def packed(self) -> int:
        return pack_ref(self.stack, self.offset // CELL)

    @staticmethod
    def unpack(packed: int) -> "ItemRef":
        return ItemRef(packed >> REF_SHIFT, (packed & REF_MASK) * CELL)


@dataclass
class FrameStack:
    sid: int
    cells: list[int]
    top: int  # cell index; == len(cells) when empty

    @property
    def capacity_bytes(self) -> int:
        return len(self.cells) * CELL

    @property
    def top_offset(self) -> int:
        return self.top * CELL

    def is_empty(self) -> bool:
        return self.top == len(self.cells)

    def occupied_bytes(self) -> int:
        return (len(self.cells) - self.top) * CELL


def init_stack(capacity_bytes: int = DEFAULT_STACK_BYTES,
               sid: int = 0) -> FrameStack:
    """Create an empty stack; the top cursor sits at the capacity."""
    if capacity_bytes < MIN_STACK_BYTES or capacity_bytes % CELL:
        raise BadCapacity(
            f"capacity must be 8-byte aligned and at least "
            f"{MIN_STACK_BYTES}, got {capacity_bytes}")
    cells = [0] * (capacity_bytes // CELL)
    return FrameStack(sid, cells, len(cells))


def push_frame(stack: FrameStack, rid: int, entry: int, ready: int,
               slot_values: list[int], routine: str = "?") -> int:
    """Push one frame; returns its byte offset."""
    n = HEADER_CELLS + len(slot_values)
    t = stack.top - n
    if t < 0:
        raise StackOverflow(n * CELL, stack.top * CELL, routine)
    c = stack.cells
    c[t] = rid
    c[t + 1] = n * CELL
    c[t + 2] = entry
    c[t + 3] = ready
    c[t + HEADER_CELLS:t + n] = slot_values
    stack.top = t
    return t * CELL


def frame_extent_cells(cells: list[int], at: int) -> int:
    """Cells consumed by the frame at cell index ``at``, payload included.

    A ``_skip`` frame extends over its following payload; everything else
    is its header length. A dissolved thief keeps its original length in
    the header, and its skip count was sized so both rules agree.
    """
    if cells[at] == SKIP_ID:
        return SKIP_FRAME_CELLS + (cells[at + 4] >> 3)
    return cells[at + 1] >> 3


def walk_frames(stack: FrameStack):
    """Yield (cell_index, rid, extent_cells) from top to bottom."""
    at = stack.top
    end = len(stack.cells)
    c = stack.cells
    while at < end:
        ext = frame_extent_cells(c, at)
        yield at, c[at], ext
        at += ext


def check_tiling(stack: FrameStack, module: IrModule) -> None:
    """Assert the frame extents tile [top, capacity) exactly."""
    at = stack.top
    end = len(stack.cells)
    c = stack.cells
    while at < end:
        rid = c[at]
        if not (0 <= rid < len(module.by_id)):
            raise AssertionError(
                f"stack s{stack.sid}: invalid routine id {rid} at "
                f"offset {at * CELL}")
        ext = frame_extent_cells(c, at)
        if ext <= 0 or at + ext > end:
            raise AssertionError(
                f"stack s{stack.sid}: frame at {at * CELL} has extent "
                f"{ext * CELL} bytes, beyond the region")
        at += ext
    if at != end:
        raise AssertionError(f"stack s{stack.sid}: frames do not tile")


def enclosing_frame(stack: FrameStack, cell: int) -> tuple[int, int] | None:
    """(frame cell index, rid) of the frame containing ``cell``, if any."""
    for at, rid, ext in walk_frames(stack):
        if at <= cell < at + ext:
            return at, rid
    return None


def _fmt_ref(packed: int) -> str:
    return f"@s{packed >> REF_SHIFT}+{(packed & REF_MASK) * CELL}"


def _fmt_slots(routine: IrRoutine, cells: list[int], base: int):
    groups = {"in": [], "inout": [], "out": [], "local": []}
    for i, slot in enumerate(routine.slots):
        v = cells[base + HEADER_CELLS + i]
        text = f"{slot.name}={_fmt_ref(v) if slot.kind == 'ref' else v}"
        groups[slot.section].append(text)
    return groups


def snapshot(stacks: list[FrameStack], module: IrModule,
             which: int | None = None) -> str:
    """Render stack contents, one line per frame, ending with END.

    Byte-stable given equal layout: only offsets, names and cell values
    appear. Skip payload regions follow their ``_skip`` frame as a
    ``data(...)`` line. Call between executor steps only.
    """
    lines: list[str] = []
    targets = stacks if which is None else [stacks[which]]
    for stack in targets:
        if len(targets) > 1:
            lines.append(f"stack s{stack.sid}:")
        c = stack.cells
        for at, rid, ext in walk_frames(stack):
            r = module.by_id[rid]
            length = c[at + 1]
            entry = c[at + 2]
            ready = c[at + 3]
            groups = _fmt_slots(r, c, at)
            head = (f"{at * CELL}: {r.name}"
                    f"({','.join(groups['in'])};{','.join(groups['inout'])};"
                    f"{','.join(groups['out'])})")
            if groups["local"]:
                head += f"[{','.join(groups['local'])}]"
            lines.append(f"{head} entry={entry} ready={ready} len={length}")
            body_cells = length >> 3
            if rid == SKIP_ID and ext > body_cells:
                pay = at + SKIP_FRAME_CELLS
                n = ext - SKIP_FRAME_CELLS
                shown = ",".join(str(c[pay + i]) for i in range(min(n, 8)))
                if n > 8:
                    shown += ",.."
                lines.append(f"{pay * CELL}: data({shown}) len={n * CELL}")
    lines.append("END")
    return "\n".join(lines) + "\n"
