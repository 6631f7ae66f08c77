import pytest

from ringqc import claims as K

DISCREPANCIES = {"localization_length", "velocity_control", "pulse_length", "micromotion_energy",
                 "micromotion_temperature"}


@pytest.fixture(scope="module")
def rows():
    return {r.claim_id: r for r in K.claim_rows()}


def test_every_match_row_is_within_tolerance(rows):
    assert K.failed(rows.values()) == []
    assert sum(r.status == K.MATCH for r in rows.values()) == 21


def test_discrepancy_rows_are_flagged_not_matched(rows):
    for cid in DISCREPANCIES:
        r = rows[cid]
        assert r.status == K.DISCREPANCY
        assert not r.within_tolerance
        assert r.note
    assert rows["transverse_size_temperature"].status == K.NOT_REPRODUCIBLE


def test_discrepancy_that_agrees_is_reported_as_match():
    r = K._row("x", "t", 1.0, "m", 1.01, 0.05, expect="discrepancy")
    assert r.status == K.MATCH
    r = K._row("x", "t", 1.0, "m", 1.5, 0.05)
    assert r.status == K.OUT_OF_TOLERANCE


def test_strict_profile_halves_tolerances(rows):
    strict = {r.claim_id: r for r in K.claim_rows("strict")}
    for cid, r in rows.items():
        assert strict[cid].tolerance == pytest.approx(0.5 * r.tolerance)
        assert strict[cid].computed == r.computed


def test_table_lists_every_row(rows):
    text = K.format_table(list(rows.values()))
    for cid in rows:
        assert cid in text
