"""Exception hierarchy.

Everything a caller can trigger with bad input derives from
:class:`TactileError` (a ``ValueError``); broken internal invariants raise
:class:`InvariantError`.
"""


class TactileError(ValueError):
    """Base class for input-driven failures."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


class EmptyInput(TactileError):
    pass


class DegenerateField(TactileError):
    """No node has the stencil support an operator needs."""


class GridMismatch(TactileError):
    pass


class NotZeroed(TactileError):
    """Estimation requested before a zero reference was established."""


class PatchOutOfBounds(TactileError):
    pass


class NonMonotoneTime(TactileError):
    pass


class EmptySeries(TactileError):
    pass


class NoOverlap(TactileError):
    pass


class RankDeficient(TactileError):
    pass


class SizeMismatch(TactileError):
    pass


class FormatError(TactileError):
    """Malformed CSV, JSON or PGM input."""


class OutOfBounds(UserWarning):
    """Scattered markers outside the grid were skipped."""


class MaskViolation(UserWarning):
    """A frame has valid nodes that its zero reference does not cover."""
