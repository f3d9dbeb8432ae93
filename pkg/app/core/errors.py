from typing import Any, Optional


class KGMError(Exception):
    """Base error: carries the process exit code and a machine-readable detail."""

    status_code: int = 1

    def __init__(self, detail: Any = None, status_code: Optional[int] = None):
        self.detail = detail if detail is not None else self.__class__.__name__
        if status_code is not None:
            self.status_code = status_code
        super().__init__(str(self.detail))

    def to_body(self) -> dict:
        return {
            "error": self.__class__.__name__,
            "detail": self.detail,
            "status_code": self.status_code,
        }


class ConfigError(KGMError):
    status_code = 1


class ArtifactError(KGMError):
    status_code = 1


class PhysicsContractError(KGMError):
    status_code = 2


class DomainError(PhysicsContractError):
    """Parameter outside its admissible set (|u| >= 1, omega^2 >= m^2, ...)."""


class PreconditionViolation(PhysicsContractError):
    pass


class NoGroundState(PhysicsContractError):
    pass


class NoConvergence(PhysicsContractError):
    pass


class SingularOperator(PhysicsContractError):
    pass


class TailUnderflow(PhysicsContractError):
    pass


class BoxTooSmall(PhysicsContractError):
    pass


class LeftStableSet(PhysicsContractError):
    pass


class PathNotMonotone(PhysicsContractError):
    pass


class TimeRangeMismatch(PhysicsContractError):
    pass


class EvolutionAborted(PhysicsContractError):
    def __init__(self, detail: Any = None, last_healthy: Any = None):
        super().__init__(detail)
        self.last_healthy = last_healthy
