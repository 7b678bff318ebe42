"""Membership indicator algebra.

Three elementary binary indicators describe each student:

* ``bp``  — born in Italy (1) or abroad (0)
* ``cit`` — Italian citizenship (1) or foreign (0)
* ``pa``  — both parents Italian nationals at birth (1) or at least one
  foreign-born parent (0); the only indicator the register does not record.

Membership in the migrant-background population (``delta``) and the
five-level background typology (``kind``) are deterministic functions of the
triple.  Two combinations, (0,0,1) and (1,0,1), cannot legally occur under
the Jus Sanguinis citizenship rule and are rejected as corrupted data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ExcludedCombination

UNOBSERVED = None

# (bp, cit, pa) -> kind, for the six admissible triples.
_KIND_TABLE = {
    (1, 1, 1): 0,
    (1, 1, 0): 1,
    (1, 0, 0): 2,
    (0, 1, 0): 3,
    (0, 0, 0): 4,
    (0, 1, 1): 0,  # born abroad to Italian parents: not in the target population
}

_EXCLUDED = {(0, 0, 1), (1, 0, 1)}


class BackgroundKind(enum.IntEnum):
    NO_BACKGROUND = 0
    SECOND_GEN_ITALIAN = 1
    SECOND_GEN_FOREIGN = 2
    ITALIAN_MIGRANT_EXPERIENCE = 3
    FOREIGN = 4


KIND_LABELS = {
    BackgroundKind.NO_BACKGROUND: "no migrant background",
    BackgroundKind.SECOND_GEN_ITALIAN: "2nd generation Italian",
    BackgroundKind.SECOND_GEN_FOREIGN: "2nd generation foreign",
    BackgroundKind.ITALIAN_MIGRANT_EXPERIENCE: "Italian with migrant experience",
    BackgroundKind.FOREIGN: "Foreign",
}


def _check_binary(name, value):
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")


def compute_delta(bp: int, cit: int, pa: int) -> int:
    """Membership flag |bp*cit*pa - 1|, with the (0,1,1) exception mapped to 0.

    Raises ExcludedCombination for the two legally impossible triples.
    """
    for name, value in (("bp", bp), ("cit", cit), ("pa", pa)):
        _check_binary(name, value)
    if (bp, cit, pa) in _EXCLUDED:
        raise ExcludedCombination(
            f"(bp={bp}, cit={cit}, pa={pa}) cannot occur under Jus Sanguinis; "
            "upstream data is corrupted"
        )
    if (bp, cit, pa) == (0, 1, 1):
        return 0
    return abs(bp * cit * pa - 1)


@dataclass(frozen=True)
class MigrantBackground:
    """Membership flag plus typology; delta == 0 iff kind == NO_BACKGROUND."""

    delta: int
    kind: BackgroundKind

    def __post_init__(self):
        if (self.delta == 0) != (self.kind == BackgroundKind.NO_BACKGROUND):
            raise ValueError(f"inconsistent delta={self.delta} kind={self.kind}")


def compute_delta_type(bp: int, cit: int, pa: int) -> MigrantBackground:
    """Full typology for an admissible triple; exclusions as in compute_delta."""
    delta = compute_delta(bp, cit, pa)
    kind = BackgroundKind(_KIND_TABLE[(bp, cit, pa)])
    return MigrantBackground(delta=delta, kind=kind)


@dataclass(frozen=True)
class MembershipIndicators:
    """The per-student indicator triple; pa may be UNOBSERVED (None).

    bp and cit are always observed in the register.  Construction rejects the
    excluded combinations when pa is observed.
    """

    bp: int
    cit: int
    pa: int | None

    def __post_init__(self):
        _check_binary("bp", self.bp)
        _check_binary("cit", self.cit)
        if self.pa is not UNOBSERVED:
            _check_binary("pa", self.pa)
            if (self.bp, self.cit, self.pa) in _EXCLUDED:
                raise ExcludedCombination(
                    f"(bp={self.bp}, cit={self.cit}, pa={self.pa}) is an "
                    "excluded combination"
                )


@dataclass(frozen=True)
class MembershipStatus:
    """Either a resolved background or a flag that pa must be predicted.

    needs_pa is True only for bp=cit=1 with pa unobserved; background is set
    otherwise.
    """

    needs_pa: bool
    background: MigrantBackground | None = None

    def __post_init__(self):
        if self.needs_pa == (self.background is not None):
            raise ValueError("exactly one of needs_pa / background must be set")


def resolve_membership(ind: MembershipIndicators) -> MembershipStatus:
    """Resolve membership, exploiting that pa is redundant outside (bp,cit)=(1,1).

    When pa is unobserved and (bp, cit) != (1, 1), it is substituted with 0.
    This is derived, not assumed: for (bp,cit)=(0,0) and (1,0) the Jus
    Sanguinis exclusions leave pa=0 as the only admissible completion.  For
    (bp,cit)=(0,1) the triple (0,1,1) is also admissible (child of Italians
    born abroad) but such cases are statistically negligible and outside the
    target population by definition, so the foreign-born Italian citizen is
    resolved as a migrant-experience case.
    """
    if ind.pa is not UNOBSERVED:
        return MembershipStatus(
            needs_pa=False,
            background=compute_delta_type(ind.bp, ind.cit, ind.pa),
        )
    if (ind.bp, ind.cit) == (1, 1):
        return MembershipStatus(needs_pa=True)
    return MembershipStatus(
        needs_pa=False,
        background=compute_delta_type(ind.bp, ind.cit, 0),
    )


def admissible_triples():
    """The six valid (bp, cit, pa) triples in table order."""
    return list(_KIND_TABLE)


def excluded_triples():
    return sorted(_EXCLUDED)
