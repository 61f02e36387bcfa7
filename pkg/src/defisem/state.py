"""State types: token identifiers, lending-pool and AMM state, configurations.

All state objects are frozen dataclasses holding plain dicts. Transitions never
mutate a dict in place; they build new ones, so a ``Configuration`` can be
shared freely once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Union

from .errors import ParseError

Amount = Fraction


@dataclass(frozen=True)
class Free:
    """A freely transferable token priced by the oracle."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LpMinted:
    """Claim token minted by the lending pool for deposits of ``underlying``."""

    underlying: Free

    def __str__(self) -> str:
        return f"{self.underlying}'"


@dataclass(frozen=True)
class AmmMinted:
    """Liquidity token of the AMM pair ``(t0, t1)``."""

    t0: Free
    t1: Free

    @property
    def pair(self) -> tuple[Free, Free]:
        return (self.t0, self.t1)

    def __str__(self) -> str:
        return f"{self.t0}|{self.t1}"


Token = Union[Free, LpMinted, AmmMinted]
Pair = tuple[Free, Free]

_KIND_RANK = {Free: 0, LpMinted: 1, AmmMinted: 2}


def token_key(t: Token) -> tuple[int, str]:
    return (_KIND_RANK[type(t)], str(t))


def parse_token(text: str) -> Token:
    """Parse ``"t0"``, ``"t0'"`` (LP-minted) or ``"t0|t1"`` (AMM-minted)."""
    text = text.strip()
    if "|" in text:
        left, _, right = text.partition("|")
        t0, t1 = parse_token(left), parse_token(right)
        if not isinstance(t0, Free) or not isinstance(t1, Free):
            raise ParseError(f"AMM pair components must be free tokens: {text!r}")
        return AmmMinted(t0, t1)
    if text.endswith("'"):
        inner = parse_token(text[:-1])
        if not isinstance(inner, Free):
            raise ParseError(f"minted token must wrap a free token: {text!r}")
        return LpMinted(inner)
    if not text or any(c in text for c in "'| "):
        raise ParseError(f"bad token name {text!r}")
    return Free(text)


def parse_rational(value: str | int | float | Fraction) -> Fraction:
    """Exact rational from ``"1.3"``, ``"19/16"``, an int, or a float literal."""
    if isinstance(value, bool):
        raise ParseError(f"not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        # JSON numbers arrive as floats; go through the shortest repr so 1.3 stays 13/10
        value = repr(value)
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"not a rational: {value!r}") from exc


def format_rational(q: Fraction) -> str:
    """Canonical lowest-terms text (``"19/16"``, ``"100"``)."""
    return str(Fraction(q))


SHORT_BITS = 256


def fmt(x) -> str:
    """Message text for a value; long exact rationals are shown approximately.

    Long traces under exact arithmetic grow denominators with thousands of
    digits, which are unreadable and can exceed the interpreter's limit on
    integer-to-text conversion.
    """
    if isinstance(x, Fraction) and max(x.numerator.bit_length(), x.denominator.bit_length()) > SHORT_BITS:
        return f"~{float(x):.12g}"
    return str(x)


@dataclass(frozen=True)
class LpState:
    """Lending-pool state.

    ``funds`` is the deposited free-token balance, ``loans`` maps each
    borrower to per-token loan amounts, and ``minted`` records the circulating
    supply of ``LpMinted(t)`` for every deposited free token ``t``. Zero loan
    and zero supply entries are removed.
    """

    funds: Mapping[Free, Fraction] = field(default_factory=dict)
    loans: Mapping[str, Mapping[Free, Fraction]] = field(default_factory=dict)
    minted: Mapping[Free, Fraction] = field(default_factory=dict)

    def fund(self, t: Free) -> Fraction:
        return self.funds.get(t, Fraction(0))

    def loan(self, user: str, t: Free) -> Fraction:
        return self.loans.get(user, {}).get(t, Fraction(0))

    def total_loans(self, t: Free) -> Fraction:
        return sum((l.get(t, Fraction(0)) for l in self.loans.values()), Fraction(0))

    def supply_of(self, t: Free) -> Fraction:
        return self.minted.get(t, Fraction(0))

    def minted_tokens(self) -> set[LpMinted]:
        return {LpMinted(t) for t in self.minted}

    def has_loan(self, user: str) -> bool:
        return any(v > 0 for v in self.loans.get(user, {}).values())


@dataclass(frozen=True)
class PairState:
    r0: Fraction
    r1: Fraction
    supply: Fraction

    @property
    def funded(self) -> bool:
        return self.r0 > 0 and self.r1 > 0


@dataclass(frozen=True)
class AmmState:
    pairs: Mapping[Pair, PairState] = field(default_factory=dict)

    def find(self, a: Free, b: Free) -> tuple[Pair, PairState] | None:
        """Locate the pair holding ``a`` and ``b`` in whichever orientation exists."""
        if (a, b) in self.pairs:
            return (a, b), self.pairs[(a, b)]
        if (b, a) in self.pairs:
            return (b, a), self.pairs[(b, a)]
        return None


@dataclass(frozen=True)
class Configuration:
    """Blockchain configuration: wallets, lending pool, AMM, oracle, snapshot.

    ``snapshot`` holds the AMM pair rates captured at the most recent
    full-state (outside any atomic group, it equals the live rates).
    """

    wallets: Mapping[str, Mapping[Token, Fraction]] = field(default_factory=dict)
    lp: LpState = field(default_factory=LpState)
    amm: AmmState = field(default_factory=AmmState)
    oracle: Mapping[Free, Fraction] = field(default_factory=dict)
    snapshot: Mapping[Pair, Fraction] = field(default_factory=dict)

    def balance(self, user: str, t: Token) -> Fraction:
        return self.wallets.get(user, {}).get(t, Fraction(0))

    def users(self) -> list[str]:
        names = set(self.wallets) | set(self.lp.loans)
        return sorted(names)

    def price(self, t: Free) -> Fraction:
        return self.oracle[t]

    def free_tokens(self) -> set[Free]:
        found: set[Free] = set(self.oracle)
        for bal in self.wallets.values():
            for t in bal:
                found.update(_free_parts(t))
        found.update(self.lp.funds)
        found.update(self.lp.minted)
        for loans in self.lp.loans.values():
            found.update(loans)
        for a, b in self.amm.pairs:
            found.update((a, b))
        return found

    def with_(self, **changes) -> Configuration:
        return replace(self, **changes)


def _free_parts(t: Token) -> tuple[Free, ...]:
    if isinstance(t, Free):
        return (t,)
    if isinstance(t, LpMinted):
        return (t.underlying,)
    return (t.t0, t.t1)
