"""Indicator algebra: delta, typology, exclusions, membership resolution."""

import pytest

from hiddenpop.domain import (
    BackgroundKind,
    KIND_LABELS,
    MembershipIndicators,
    MigrantBackground,
    UNOBSERVED,
    admissible_triples,
    compute_delta,
    compute_delta_type,
    excluded_triples,
    resolve_membership,
)
from hiddenpop.errors import ExcludedCombination

EXPECTED = {
    (1, 1, 1): (0, 0),
    (1, 1, 0): (1, 1),
    (1, 0, 0): (1, 2),
    (0, 1, 0): (1, 3),
    (0, 0, 0): (1, 4),
    (0, 1, 1): (0, 0),
}


def test_table_mapping_exact():
    for triple, (delta, kind) in EXPECTED.items():
        bg = compute_delta_type(*triple)
        assert bg.delta == delta
        assert bg.kind == BackgroundKind(kind)


def test_delta_matches_absolute_value_formula_outside_exception():
    for bp, cit, pa in EXPECTED:
        if (bp, cit, pa) == (0, 1, 1):
            continue
        assert compute_delta(bp, cit, pa) == abs(bp * cit * pa - 1)


def test_born_abroad_to_italian_parents_is_not_a_member():
    assert compute_delta(0, 1, 1) == 0


def test_excluded_combinations_raise():
    for triple in [(0, 0, 1), (1, 0, 1)]:
        with pytest.raises(ExcludedCombination):
            compute_delta(*triple)
        with pytest.raises(ExcludedCombination):
            compute_delta_type(*triple)
        with pytest.raises(ExcludedCombination):
            MembershipIndicators(bp=triple[0], cit=triple[1], pa=triple[2])


def test_enumeration_helpers():
    assert set(admissible_triples()) == set(EXPECTED)
    assert excluded_triples() == [(0, 0, 1), (1, 0, 1)]
    assert len(admissible_triples()) + len(excluded_triples()) == 8


def test_non_binary_inputs_rejected():
    with pytest.raises(ValueError):
        compute_delta(2, 0, 0)
    with pytest.raises(ValueError):
        MembershipIndicators(bp=1, cit="x", pa=None)


def test_background_consistency_enforced():
    with pytest.raises(ValueError):
        MigrantBackground(delta=0, kind=BackgroundKind.FOREIGN)
    with pytest.raises(ValueError):
        MigrantBackground(delta=1, kind=BackgroundKind.NO_BACKGROUND)


def test_resolve_with_observed_pa_passes_through():
    for triple, (delta, kind) in EXPECTED.items():
        status = resolve_membership(MembershipIndicators(*triple))
        assert not status.needs_pa
        assert status.background.delta == delta
        assert int(status.background.kind) == kind


def test_resolve_unobserved_pa():
    # only the double-native stratum genuinely needs pa
    assert resolve_membership(MembershipIndicators(1, 1, UNOBSERVED)).needs_pa
    # everywhere else pa=0 is the forced (or adopted) completion
    for (bp, cit), kind in [((1, 0), 2), ((0, 1), 3), ((0, 0), 4)]:
        status = resolve_membership(MembershipIndicators(bp, cit, UNOBSERVED))
        assert not status.needs_pa
        assert int(status.background.kind) == kind


def test_labels_cover_all_kinds():
    assert set(KIND_LABELS) == set(BackgroundKind)
