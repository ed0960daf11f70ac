"""Exception hierarchy for the compiler and the frame machine.

Compile-time errors carry a source position (line, column); runtime errors
name the routine that was executing when the fault occurred.
"""

from __future__ import annotations


class TaskframeError(Exception):
    """Base class for every error this package raises deliberately."""


class CompileError(TaskframeError):
    """Base for errors produced while turning source into an IrModule."""

    def __init__(self, message: str, pos: tuple[int, int] | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{pos[0]}:{pos[1]}: {message}"
        super().__init__(message)


class LexError(CompileError):
    pass


class ParseError(CompileError):
    def __init__(self, message: str, pos: tuple[int, int] | None = None,
                 expected: tuple[str, ...] = ()):
        self.expected = expected
        if expected:
            message = f"{message} (expected one of: {', '.join(expected)})"
        super().__init__(message, pos)


class ValidationError(CompileError):
    pass


class UndefinedRoutine(ValidationError):
    pass


class ArityMismatch(ValidationError):
    pass


class UndeclaredVariable(ValidationError):
    pass


class DuplicateName(ValidationError):
    pass


class EffectNotPropagated(ValidationError):
    def __init__(self, routine: str, token: str, pos: tuple[int, int] | None = None):
        self.routine = routine
        self.token = token
        super().__init__(
            f"routine '{routine}' calls a routine with nonlocal effect "
            f"'{token}' but does not declare it", pos)


class LowerError(CompileError):
    pass


class LoopContainsCall(LowerError):
    pass


class ArrayEscapes(LowerError):
    pass


class MachineError(TaskframeError):
    """Base for faults raised while frames execute."""


class BadCapacity(MachineError):
    pass


class StackOverflow(MachineError):
    def __init__(self, needed: int, available: int, routine: str = "?"):
        self.needed = needed
        self.available = available
        self.routine = routine
        super().__init__(
            f"stack overflow in '{routine}': need {needed} bytes, "
            f"{available} available")


class BadRef(MachineError):
    """An item reference targeted a cell outside the live stack region.

    Indicates a lowering bug, never a user error; only raised when debug
    checking is enabled.
    """


class TsiaRuntimeError(MachineError):
    """A fault attributable to the executing program."""

    def __init__(self, message: str, routine: str = "?"):
        self.routine = routine
        super().__init__(f"in routine '{routine}': {message}")


class DivideByZero(TsiaRuntimeError):
    pass


class NegativeArrayLength(TsiaRuntimeError):
    pass


class InvalidEntry(TsiaRuntimeError):
    pass


class EntryError(TaskframeError):
    """Malformed entry call, or one that does not match the routine."""


class SchedulerError(TaskframeError):
    pass


class Deadlock(SchedulerError):
    """All workers are thieving, frames remain, none are ready.

    Reaching this state means the ready-flag analysis emitted an
    unsatisfiable dependence, i.e. a compiler bug.
    """
