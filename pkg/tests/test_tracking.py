import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringqc import tracking as T

patterns = st.text(alphabet="BD", min_size=1, max_size=60)


def brute_min_window(pattern):
    """Smallest L < N with all length-L windows pairwise distinct, by comparing every pair."""
    n = len(pattern)
    for length in range(1, n):
        wins = [pattern[i:i + length] for i in range(n - length + 1)]
        if all(wins[i] != wins[j] for i in range(len(wins)) for j in range(i + 1, len(wins))):
            return length
    return None


def test_min_window_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 201))
        f = float(rng.uniform(0.05, 0.7))
        p = T.load_pattern(n, f, int(rng.integers(1 << 31))).pattern
        assert T.min_unique_window(p) == brute_min_window(p)


@given(patterns)
def test_min_window_matches_brute_force_property(p):
    assert T.min_unique_window(p) == brute_min_window(p)


@given(patterns)
def test_uniqueness_is_monotone(p):
    n = len(p)
    flags = [T._all_distinct(p, L, False) for L in range(1, n)]
    assert flags == sorted(flags)


@pytest.mark.parametrize("p", ["B", "BBBB", "DDDDDD"])
def test_uniform_patterns_have_no_window(p):
    assert T.min_unique_window(p) is None


@pytest.mark.parametrize("p,period", [("BD" * 10, 2), ("BBD" * 7, 3)])
def test_periodic_patterns(p, period):
    # only the two ends tell a periodic chain apart, and a ring never does
    assert T.min_unique_window(p) == len(p) - period + 1
    assert T.min_unique_window(p, circular=True) is None


def test_known_window():
    assert T.min_unique_window("BDBBDBBB") == 5
    assert T.min_unique_window("BD") == 1
    with pytest.raises(ValueError):
        T.min_unique_window("")


def test_circular_windows_are_at_least_linear():
    for seed in range(20):
        p = T.load_pattern(150, 0.3, seed).pattern
        lin, circ = T.min_unique_window(p), T.min_unique_window(p, circular=True)
        assert circ is None or circ >= lin


def test_window_scale_tracks_entropy_floor():
    n, f = 10_000, 0.3
    lengths = T.window_length_distribution(n, f, range(3))
    floor = T.entropy_floor(n, f)
    assert all(floor <= L < 6 * floor for L in lengths)
    assert T.entropy_floor(10, 0.0) == math.inf
    assert T.binary_entropy(0.5) == 1.0


def test_load_pattern_is_seeded():
    assert T.load_pattern(500, 0.2, 7) == T.load_pattern(500, 0.2, 7)
    assert T.load_pattern(500, 0.2, 7) != T.load_pattern(500, 0.2, 8)
    with pytest.raises(ValueError):
        T.load_pattern(10, 1.0)


# events

def ledgers(max_size=40):
    return patterns.filter(lambda p: len(p) >= 2).map(T.QubitLedger.from_pattern)


@given(ledgers(), st.data())
def test_reorder_is_an_involution(ledger, data):
    n = len(ledger)
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 1).filter(lambda k: k != i))
    ev = T.CollisionEvent.reorder(i, j)
    assert T.apply_event(T.apply_event(ledger, ev), ev) == ledger


@given(ledgers(), st.data())
def test_loss_orphans_bright_labels(ledger, data):
    p = data.draw(st.integers(0, len(ledger) - 1))
    out = T.apply_event(ledger, T.CollisionEvent.loss(p))
    assert len(out) == len(ledger) - 1
    lost = ledger.labels[p]
    assert out.orphaned == (() if lost is None else (lost,))
    assert (set(out.labels) | set(out.orphaned)) - {None} == set(ledger.labels) - {None}


def test_event_range_error():
    led = T.QubitLedger.from_pattern("BDB")
    with pytest.raises(T.EventRangeError):
        T.apply_event(led, T.CollisionEvent.loss(3))
    with pytest.raises(ValueError):
        T.CollisionEvent.reorder(1, 1)
    assert T.CollisionEvent.reorder(5, 2) == T.CollisionEvent.reorder(2, 5)
    with pytest.raises(ValueError):
        T.CollisionEvent("split", (1,))


def test_ledger_validation():
    with pytest.raises(ValueError):
        T.QubitLedger("BX", (0, None))
    with pytest.raises(ValueError):
        T.QubitLedger("BD", (0, 1))
    with pytest.raises(ValueError):
        T.QubitLedger("BB", (0, 0))


def test_replay_and_serialisation(tmp_path):
    rng = np.random.default_rng(3)
    led = T.load_pattern(120, 0.3, 1)
    events = [T.sample_event(led, rng, time=0.1 * k, max_swap_distance=3) for k in range(5)]
    end = led
    for ev in events:
        end = T.apply_event(end, ev)
    text = T.events_to_text(events)
    assert T.events_from_text("# log\n\n" + text) == events
    assert T.replay(led, T.events_from_text(text)) == end
    assert T.ledger_from_text(T.ledger_to_text(end)) == end
    T.save_text(tmp_path / "ledger.txt", T.ledger_to_text(end))
    assert T.ledger_from_text((tmp_path / "ledger.txt").read_text()) == end
    with pytest.raises(ValueError, match="line 2"):
        T.events_from_text("loss 1\nteleport 3\n")


def test_reencode_gives_fresh_labels():
    led = T.QubitLedger.from_pattern("BBDB")
    out = T.reencode(led, {1})
    assert out.labels == (0, 3, None, 2)
    assert out.generation == 1 and out.next_label == 4


# detection

def exhaustive_classification(believed, frame):
    """Apply every single event to the believed chain and keep those that reproduce the frame."""
    n, start, length = len(believed), frame.start, len(frame.window)
    window = set(range(start, start + length))
    events = [T.CollisionEvent.loss(p) for p in range(n)]
    events += [T.CollisionEvent.reorder(i, j) for i in range(n) for j in range(i + 1, n)]
    matches = []
    for ev in events:
        after = T.apply_event(believed, ev)
        if start + length > len(after):
            continue
        if frame.chain_length is not None and len(after) != frame.chain_length:
            continue
        if after.window(start, length) == frame.window:
            matches.append(ev)
    kinds = {ev.kind for ev in matches}
    kind = kinds.pop() if len(kinds) == 1 else ("unknown" if kinds else None)
    labels, resolved = set(), len(matches) == 1
    for ev in matches:
        if ev.kind == "loss" and ev.positions[0] not in window:
            resolved = False
            continue
        labels |= {believed.labels[p] for p in ev.positions if believed.labels[p] is not None}
    return kind, labels, resolved, matches


def _injected_cases(count, seed):
    rng = np.random.default_rng(seed)
    done = 0
    while done < count:
        n = int(rng.integers(20, 60))
        believed = T.load_pattern(n, 0.35, int(rng.integers(1 << 31)))
        need = T.min_unique_window(believed)
        if need is None or need + 2 > n - 1:
            continue
        ev = T.sample_event(believed, rng, loss_probability=0.5, max_swap_distance=int(rng.integers(1, 4)))
        truth = T.apply_event(believed, ev)
        length = int(rng.integers(need, min(need + 6, len(truth)) + 1))
        start = int(rng.integers(0, len(truth) - length + 1))
        frame = T.observe(truth, start, length, count_ions=bool(rng.integers(2)))
        done += 1
        yield believed, ev, frame


def test_no_window_level_false_negatives():
    misses = 0
    changed = 0
    for believed, ev, frame in _injected_cases(1000, 11):
        differs = believed.window(frame.start, len(frame.window)) != frame.window or (
            frame.chain_length is not None and frame.chain_length != len(believed))
        rep = T.detect_mismatch(believed, frame)
        changed += differs
        misses += differs and rep.consistent
        if not differs:
            assert rep.consistent
    assert changed > 300
    assert misses == 0


def test_classification_matches_exhaustive_oracle():
    checked = 0
    for believed, ev, frame in _injected_cases(300, 5):
        rep = T.detect_mismatch(believed, frame)
        if rep.consistent:
            continue
        kind, labels, resolved, matches = exhaustive_classification(believed, frame)
        assert ev in matches
        assert rep.kind == kind
        assert set(rep.affected_labels) == labels
        assert rep.position_resolved == resolved
        checked += 1
    assert checked > 100


def test_unexplained_frame_flags_whole_window():
    believed = T.QubitLedger.from_pattern("BDBBDBBBDDBDBBBD")
    truth = T.apply_event(T.apply_event(believed, T.CollisionEvent.loss(3)), T.CollisionEvent.reorder(0, 1))
    frame = T.observe(truth, 0, 10)
    rep = T.detect_mismatch(believed, frame)
    assert not rep.consistent
    if rep.kind == "unknown" and not rep.hypotheses:
        assert rep.affected_labels == frozenset(believed.window_labels(0, 10))


def test_short_window_is_ambiguous():
    believed = T.load_pattern(200, 0.3, 0)
    need = T.min_unique_window(believed)
    with pytest.raises(T.AmbiguityError):
        T.detect_mismatch(believed, T.observe(believed, 0, need - 1))
    with pytest.raises(T.EventRangeError):
        T.detect_mismatch(believed, T.ObservationFrame(195, "B" * 10))


def test_uniform_chain_is_not_an_ambiguity_error():
    believed = T.QubitLedger.from_pattern("B" * 12)
    truth = T.apply_event(believed, T.CollisionEvent.loss(4))
    rep = T.detect_mismatch(believed, T.observe(truth, 0, 5, count_ions=True))
    assert not rep.consistent and rep.kind == "loss" and not rep.position_resolved


def test_noisy_observation_can_be_tolerated():
    believed = T.load_pattern(80, 0.3, 4)
    rng = np.random.default_rng(0)
    frame = T.observe(believed, 10, 30, flip_probability=0.05, rng=rng)
    rep = T.detect_mismatch(believed, frame, max_score=30)
    assert rep.consistent or rep.hypotheses
