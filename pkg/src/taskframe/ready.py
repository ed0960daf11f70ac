"""Static readiness analysis for spawn groups.

Under strict evaluation the first child frame of a segment is always ready.
A later child is ready exactly when it is independent of every earlier
sibling: no earlier write may meet its reads or writes, and it may not
write anything an earlier sibling reads. Reads and writes cover scalar
items, declared nonlocal-effect tokens, and arrays.

Arrays conflict as whole objects, with one carve-out: two uses of the same
base are treated as disjoint when one covers the leading elements
``[0, e)`` and the other starts at element ``e`` for syntactically equal
``e`` (the divide-at-one-index pattern). Anything else involving a writer
is a conflict.
"""

from __future__ import annotations

from .ir import ArrayUse, SpawnPlan

ZERO_KEYS = {"#0"}


def arrays_disjoint(a: ArrayUse, b: ArrayUse) -> bool:
    if a.base != b.base:
        return True
    for lo, hi in ((a, b), (b, a)):
        if (lo.offset_key in ZERO_KEYS and lo.length_key is not None
                and lo.length_key == hi.offset_key):
            return True
    return False


def conflicts(earlier: SpawnPlan, later: SpawnPlan) -> bool:
    if earlier.writes & (later.reads | later.writes):
        return True
    if later.writes & earlier.reads:
        return True
    for ua in earlier.array_uses:
        for ub in later.array_uses:
            if ua.base != ub.base:
                continue
            if not (ua.writes or ub.writes):
                continue
            if not arrays_disjoint(ua, ub):
                return True
    return False


def analyze_ready(spawns: list[SpawnPlan]) -> list[int]:
    """Assign each plan's ready flag in place and return the flag list."""
    flags: list[int] = []
    for k, plan in enumerate(spawns):
        ready = 1
        for j in range(k):
            if conflicts(spawns[j], plan):
                ready = 0
                break
        plan.ready = ready
        flags.append(ready)
    return flags
