"""Executable semantics for lending pools, constant-product AMMs and flash loans.

Amounts and prices are exact ``fractions.Fraction`` values throughout.
"""

from __future__ import annotations

from .errors import DefiError
from .state import AmmMinted, Configuration, Free, LpMinted, LpState, AmmState, PairState

__version__ = "0.1.0"

__all__ = [
    "AmmMinted",
    "AmmState",
    "Configuration",
    "DefiError",
    "Free",
    "LpMinted",
    "LpState",
    "PairState",
]
