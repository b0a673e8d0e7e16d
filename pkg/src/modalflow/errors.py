"""Exception types raised by modalflow operations."""


class ModalFlowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ModalFlowError, ValueError):
    pass


class FixtureError(ModalFlowError, ValueError):
    """Malformed or invalid fixture definition."""


class EmptyLevel(ModalFlowError):
    """No grid cell reaches the requested level."""


class NotInUpperLevelSet(ModalFlowError):
    pass


class CriticalCorridor(ModalFlowError):
    """A critical value lies between the start and target levels."""


class DenominatorFloor(ModalFlowError):
    """Gradient norm fell below the floor while a normalized flow was running."""


class NearCritical(ModalFlowError):
    pass


class NoConvergence(ModalFlowError):
    pass


class NonFiniteState(ModalFlowError):
    """Integrator state left the finite range.

    The partial trajectory, when available, is attached as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
