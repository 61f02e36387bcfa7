"""Exception hierarchy for rule failures.

Every rejected transition raises a :class:`DefiError` subclass. ``premise``
carries the circled premise number of the rule that failed, when there is one.
"""

from __future__ import annotations


class DefiError(Exception):
    premise: int | None = None

    def __init__(self, message: str = "", premise: int | None = None):
        super().__init__(message)
        if premise is not None:
            self.premise = premise

    @property
    def kind(self) -> str:
        return type(self).__name__


# ledger
class UnderfundedUpdate(DefiError):
    pass


class InsufficientBalance(DefiError):
    premise = 1


class NotFreeToken(DefiError):
    premise = 2


class WrongTokenClass(DefiError):
    pass


class MissingPrice(DefiError):
    pass


class NonPositivePrice(DefiError):
    pass


class NonPositiveAmount(DefiError):
    pass


# lending pool
class InsufficientPoolFunds(DefiError):
    pass


class Undercollateralized(DefiError):
    pass


class NonPositiveRate(DefiError):
    pass


class RepayExceedsLoan(DefiError):
    premise = 2


class NotLiquidatable(DefiError):
    premise = 6


class SeizeExceedsCollateral(DefiError):
    premise = 4


class SeizeMismatch(DefiError):
    premise = 5


class OverLiquidation(DefiError):
    premise = 7


# amm
class RatioMismatch(DefiError):
    premise = 1


class SameToken(DefiError):
    premise = 3


class ReversedPair(DefiError):
    pass


class EmptyPair(DefiError):
    premise = 1


class NoArbitrage(DefiError):
    pass


# transaction engine
class NotAuthorized(DefiError):
    pass


class PredicateFalse(DefiError):
    pass


class MalformedAuthorization(DefiError):
    pass


class FlashOutsideGroup(DefiError):
    pass


class InsufficientFlashFee(DefiError):
    pass


class FlashObligationUnmet(DefiError):
    def __init__(self, violation):
        super().__init__(str(violation))
        self.violation = violation


class AtomicityFailure(DefiError):
    def __init__(self, step: int, inner: DefiError):
        super().__init__(f"step {step}: {inner.kind}: {inner}")
        self.step = step
        self.inner = inner


# analysis
class InstanceTooLarge(DefiError):
    pass


class NoVictimLoan(DefiError):
    pass


class PreconditionUnmet(DefiError):
    pass


# scenario files
class ParseError(DefiError):
    pass
