"""TPARX: the transparent parallel executor.

Each worker owns one stack and runs the executor loop over it. Worker 0
starts with the entry frame above one bootstrap cop per other worker;
every other worker starts with a bootstrap thief frame. A thief executing
as the topmost frame steals the bottommost ready frame from a randomly
chosen victim stack: the stolen frame moves to the thief's own stack above
a freshly pushed cop frame, and a new labelled thief frame of identical
length takes its place on the victim, acting as a barrier for the frames
below. When the stolen subtree has fully executed, the cop fires: it
overwrites its thief's routine-id word with the `_skip` id (the skip count
was stored at thief creation), and the victim's executor dissolves the
barrier.

Exclusion uses one lock per stack: an executor holds its own lock for the
duration of a step, a thief try-locks a victim for scan-and-replace and
never holds two locks at once. Publication by a cop is a single-word write
and needs no lock. Trading lock traffic on every step for protocol
simplicity is deliberate; a production scheduler would use an optimistic
collision protocol instead.
"""

from __future__ import annotations

import itertools
import threading
import time

from .entry import EntryCall
from .errors import Deadlock, StackOverflow
from .frames import CELL, check_tiling, walk_frames, REF_SHIFT
from .ir import (COP_FRAME_CELLS, COP_ID, IrModule, SKIP_ID,
                 THIEF_FRAME_CELLS, THIEF_ID)
from .machine import Machine

M64 = (1 << 64) - 1
POLL_ATTEMPTS = 64
STALL_ROUNDS_BEFORE_CHECK = 50


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return state, z ^ (z >> 31)


class VictimStream:
    """Deterministic per-worker victim choice: a pure function of
    (seed, worker index, draw count)."""

    def __init__(self, seed: int, worker: int, nworkers: int):
        self.state = (seed ^ (worker * 0xA5A5A5A5A5A5A5A5)) & M64
        self.others = [i for i in range(nworkers) if i != worker]

    def draw(self) -> int:
        self.state, value = _splitmix64(self.state)
        return self.others[value % len(self.others)]


class ParallelRun:
    def __init__(self, module: IrModule, workers: int, seed: int,
                 stack_bytes: int, checked: bool = True,
                 tracing: bool = False, validate: bool = False):
        self.machine = Machine(module, stack_bytes, workers=workers,
                               checked=checked, tracing=tracing,
                               validate=validate)
        self.module = module
        self.workers = workers
        self.guards = [threading.Lock() for _ in range(workers)]
        self.streams = [VictimStream(seed, w, workers)
                        for w in range(workers)]
        self.state = ["exec"] * workers
        self.progress = [0] * workers
        self.errors: list[BaseException] = []
        self.abort = threading.Event()
        self.labels = itertools.count(1)
        self._stalls = [0] * workers
        self._stall_progress = [-1] * workers
        cells = self.machine.cell_lists

        def f_cop(st, b, sb):
            # One-word publication: the thief's routine-id word becomes
            # _skip; its skip count was written at thief creation.
            cells[st[b + 4]][st[b + 5]] = SKIP_ID
            return b + COP_FRAME_CELLS

        self.machine.table[COP_ID] = f_cop

    # -- bootstrap layout --

    def seed_entry(self, entry: EntryCall) -> list:
        m = self.machine
        if self.workers > 1:
            # Worker 0: one cop per other worker, deepest pairs the highest
            # index. Other workers: a bootstrap thief each.
            for w in range(self.workers - 1, 0, -1):
                thief_stack = m.stacks[w]
                t = thief_stack.top - THIEF_FRAME_CELLS
                c = thief_stack.cells
                c[t] = THIEF_ID
                c[t + 1] = THIEF_FRAME_CELLS * CELL
                c[t + 2] = 0
                c[t + 3] = 0
                c[t + 4] = THIEF_FRAME_CELLS * CELL - 40
                c[t + 5] = w
                thief_stack.top = t
                m.tops[w] = t
                s0 = m.stacks[0]
                ct = s0.top - COP_FRAME_CELLS
                s0.cells[ct:ct + COP_FRAME_CELLS] = [
                    COP_ID, COP_FRAME_CELLS * CELL, 0, 0, w, t, w]
                s0.top = ct
                m.tops[0] = ct
        return m.seed(entry, worker=0)

    # -- worker loop --

    def _worker_loop(self, w: int) -> None:
        m = self.machine
        stack = m.stacks[w]
        st = stack.cells
        cap = len(st)
        sb = w << REF_SHIFT
        guard = self.guards[w]
        table = m.table
        trace = m.trace
        by_id = self.module.by_id
        try:
            while not self.abort.is_set():
                with guard:
                    top = stack.top
                    if top >= cap:
                        return
                    rid = st[top]
                    if rid != THIEF_ID:
                        self.state[w] = "exec"
                        m.tops[w] = top
                        if trace is not None:
                            trace.emit(w, "exec", by_id[rid].name,
                                       st[top + 2], top * CELL)
                        if rid == COP_ID and trace is not None:
                            trace.emit(w, "cop-fire", st[top + 4],
                                       st[top + 5] * CELL)
                        stack.top = table[rid](st, top, sb)
                        m.tops[w] = stack.top
                        self.progress[w] += 1
                        if m.validate:
                            check_tiling(stack, self.module)
                        continue
                self.state[w] = "thief"
                self._thief_step(w)
        except BaseException as exc:
            self.errors.append(exc)
            self.abort.set()
        finally:
            self.state[w] = "done"

    # -- stealing --

    def _thief_step(self, w: int) -> None:
        m = self.machine
        stack = m.stacks[w]
        st = stack.cells
        trace = m.trace
        for _ in range(POLL_ATTEMPTS):
            if self.abort.is_set():
                return
            top = stack.top
            if st[top] != THIEF_ID:
                return  # dissolved into a _skip by our cop
            victim = self.streams[w].draw()
            g = self.guards[victim]
            if not g.acquire(blocking=False):
                if trace is not None:
                    trace.emit(w, "thief-retry", victim, "busy")
                continue
            try:
                got = self._scan_and_take(w, victim)
            finally:
                g.release()
            if got is None:
                if trace is not None:
                    trace.emit(w, "thief-retry", victim, "no-ready")
                continue
            buf, vbase, label = got
            with self.guards[w]:
                t = stack.top
                nt = t - COP_FRAME_CELLS - len(buf)
                if nt < 0:
                    raise StackOverflow((COP_FRAME_CELLS + len(buf)) * CELL,
                                        t * CELL, "_thief")
                cop_at = nt + len(buf)
                st[cop_at:cop_at + COP_FRAME_CELLS] = [
                    COP_ID, COP_FRAME_CELLS * CELL, 0, 0, victim, vbase,
                    label]
                st[nt:nt + len(buf)] = buf
                stack.top = nt
                m.tops[w] = nt
            self.progress[w] += 1
            self._stalls[w] = 0
            return
        self._stall_round(w)

    def _scan_and_take(self, w: int, victim: int):
        """Under the victim's guard: take its bottommost ready frame."""
        m = self.machine
        vstack = m.stacks[victim]
        vc = vstack.cells
        best = None
        for at, rid, ext in walk_frames(vstack):
            if vc[at + 3] == 1:
                best = (at, ext)
        if best is None:
            return None
        at, ext = best
        assert vc[at + 3] == 1
        length = vc[at + 1]
        if m.validate and length != ext * CELL:
            raise AssertionError("stole a frame with payload extent")
        buf = vc[at:at + ext]
        label = next(self.labels)
        # Write the replacement thief in place: same length, ready 0, skip
        # count prepared so the cop's one-word publication suffices.
        vc[at + 2] = 0
        vc[at + 3] = 0
        vc[at + 4] = length - 40
        vc[at + 5] = label
        vc[at] = THIEF_ID
        if m.trace is not None:
            m.trace.emit(w, "steal", victim, at * CELL, length, label)
        return buf, at, label

    # -- deadlock detection --

    def _stall_round(self, w: int) -> None:
        total = sum(self.progress)
        if total != self._stall_progress[w]:
            self._stall_progress[w] = total
            self._stalls[w] = 0
        else:
            self._stalls[w] += 1
            if self._stalls[w] >= STALL_ROUNDS_BEFORE_CHECK:
                self._full_deadlock_check(w)
                self._stalls[w] = 0
        time.sleep(0.0002)

    def _full_deadlock_check(self, w: int) -> None:
        """All workers thieving, frames remain, none ready: a ready-flag
        analysis bug. Scans stack by stack under each guard in turn."""
        m = self.machine
        for other in range(self.workers):
            if other != w and self.state[other] == "exec":
                return
        frames_left = False
        for sid in range(self.workers):
            with self.guards[sid]:
                for at, rid, ext in walk_frames(m.stacks[sid]):
                    if m.stacks[sid].cells[at + 3] == 1:
                        return
                    if rid not in (THIEF_ID, COP_ID, SKIP_ID):
                        frames_left = True
        for other in range(self.workers):
            if other != w and self.state[other] == "exec":
                return
        if frames_left:
            raise Deadlock(
                "all workers are thieving with no ready frames while "
                "application frames remain")

    # -- drive --

    def run(self, entry: EntryCall) -> dict[str, int | list]:
        results = self.seed_entry(entry)
        if self.workers == 1:
            self._worker_loop(0)
        else:
            threads = [threading.Thread(target=self._worker_loop, args=(w,),
                                        name=f"tparx-w{w}", daemon=True)
                       for w in range(self.workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if self.errors:
            raise self.errors[0]
        return self.machine.collect(results)


def run_parallel(module: IrModule, entry: EntryCall, workers: int = 1,
                 seed: int = 0, stack_bytes: int | None = None,
                 checked: bool = True, tracing: bool = False,
                 validate: bool = False) -> tuple[dict, ParallelRun]:
    """Execute an entry call on ``workers`` stacks; returns (outs, run).

    Out values match the sequential executor for every seed and worker
    count; the trace records every steal.
    """
    from .frames import DEFAULT_STACK_BYTES
    run = ParallelRun(module, workers, seed,
                      stack_bytes or DEFAULT_STACK_BYTES, checked=checked,
                      tracing=tracing, validate=validate)
    outs = run.run(entry)
    return outs, run
