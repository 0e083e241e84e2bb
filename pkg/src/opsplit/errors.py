"""Exception types shared across the package."""


class OpSplitError(Exception):
    """Base class for all package errors."""


# --- model graph ---

class ModelError(OpSplitError):
    pass


class CycleDetected(ModelError):
    pass


class DanglingEdge(ModelError):
    pass


class MissingBlockParams(ModelError):
    pass


class UnreachableNode(ModelError):
    pass


class UnitMismatch(ModelError):
    pass


class UnknownOperator(ModelError):
    pass


class RangeOutOfBounds(OpSplitError):
    pass


# --- profiles ---

class UnknownNode(OpSplitError):
    pass


# --- kernels ---

class InsufficientHalo(OpSplitError):
    pass


class CoverageGap(OpSplitError):
    pass


class ReplicaMismatch(OpSplitError):
    pass


# --- scheduling ---

class ShapeMismatch(OpSplitError):
    pass


class InfeasiblePlan(OpSplitError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NoFeasibleIndividual(OpSplitError):
    pass


class Deadlock(OpSplitError):
    pass


# --- runtime ---

class ProtocolViolation(OpSplitError):
    pass


class HashMismatch(OpSplitError):
    pass


class ConnectionLost(OpSplitError):
    pass


class Timeout(OpSplitError):
    pass


class EmptyTrace(OpSplitError):
    pass
