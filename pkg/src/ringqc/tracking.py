"""Positional fingerprinting of qubit ions with a random bright/dark isotope mix.

Patterns are strings over ``B`` (bright qubit ion) and ``D`` (dark admixture
ion). Ledgers are immutable; every operation returns a new one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BRIGHT, DARK = "B", "D"


class EventRangeError(IndexError):
    pass


class AmbiguityError(ValueError):
    pass


@dataclass(frozen=True)
class QubitLedger:
    pattern: str
    labels: tuple[int | None, ...]
    generation: int = 0
    orphaned: tuple[int, ...] = ()
    next_label: int = 0

    def __post_init__(self):
        if set(self.pattern) - {BRIGHT, DARK}:
            raise ValueError("pattern must contain only 'B' and 'D'")
        if len(self.labels) != len(self.pattern):
            raise ValueError("labels and pattern differ in length")
        seen = set()
        for c, lab in zip(self.pattern, self.labels):
            if (c == BRIGHT) != (lab is not None):
                raise ValueError("labels must sit exactly on bright positions")
            if lab is not None:
                if lab in seen:
                    raise ValueError(f"duplicate label {lab}")
                seen.add(lab)

    @classmethod
    def from_pattern(cls, pattern: str) -> "QubitLedger":
        labels, k = [], 0
        for c in pattern:
            labels.append(k if c == BRIGHT else None)
            k += c == BRIGHT
        return cls(pattern, tuple(labels), next_label=k)

    def __len__(self) -> int:
        return len(self.pattern)

    @property
    def dark_count(self) -> int:
        return self.pattern.count(DARK)

    def window(self, start: int, length: int, circular: bool = False) -> str:
        return _window(self.pattern, start, length, circular)

    def window_labels(self, start: int, length: int) -> set[int]:
        return {lab for lab in self.labels[start:start + length] if lab is not None}


def _window(pattern: str, start: int, length: int, circular: bool = False) -> str:
    if circular:
        n = len(pattern)
        return "".join(pattern[(start + k) % n] for k in range(length))
    return pattern[start:start + length]


def load_pattern(n_ions: int, dark_fraction: float, seed: int | None = 0) -> QubitLedger:
    """i.i.d. Bernoulli(dark_fraction) dark sites; bright ions labelled in order."""
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError("dark_fraction must be in [0, 1)")
    if n_ions < 0:
        raise ValueError("n_ions must be >= 0")
    dark = np.random.default_rng(seed).random(n_ions) < dark_fraction
    return QubitLedger.from_pattern("".join(np.where(dark, DARK, BRIGHT)))


# ---------------------------------------------------------------------------
# window uniqueness

def _all_distinct(pattern: str, length: int, circular: bool) -> bool:
    n = len(pattern)
    if circular:
        ext = pattern + pattern[:length - 1]
        starts = range(n)
    else:
        ext = pattern
        starts = range(n - length + 1)
    seen = set()
    for i in starts:
        w = ext[i:i + length]
        if w in seen:
            return False
        seen.add(w)
    return True


def min_unique_window(pattern: QubitLedger | str, circular: bool = False) -> int | None:
    """Smallest L < N for which every length-L window is distinct.

    The whole chain (L = N) is excluded since a single window identifies
    nothing. Returns None when no such L exists (uniform or periodic
    patterns, or N < 2). Uniqueness is monotone in L, so this bisects.
    """
    p = pattern.pattern if isinstance(pattern, QubitLedger) else pattern
    n = len(p)
    if n == 0:
        raise ValueError("pattern must be non-empty")
    hi = n - 1
    if hi < 1 or not _all_distinct(p, hi, circular):
        return None
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _all_distinct(p, mid, circular):
            hi = mid
        else:
            lo = mid + 1
    return lo


def binary_entropy(p: float) -> float:
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def entropy_floor(n_ions: int, dark_fraction: float) -> float:
    """Information floor log2(N) / H(f) on the unique window length."""
    h = binary_entropy(dark_fraction)
    return math.inf if h == 0 else math.log2(n_ions) / h


def window_length_distribution(n_ions: int, dark_fraction: float, seeds: Iterable[int]) -> list[int | None]:
    return [min_unique_window(load_pattern(n_ions, dark_fraction, s)) for s in seeds]


# ---------------------------------------------------------------------------
# collision events

@dataclass(frozen=True)
class CollisionEvent:
    kind: str  # "loss" or "reorder"
    positions: tuple[int, ...]
    time: float = 0.0

    def __post_init__(self):
        if self.kind == "loss":
            if len(self.positions) != 1:
                raise ValueError("loss takes one position")
        elif self.kind == "reorder":
            if len(self.positions) != 2 or self.positions[0] == self.positions[1]:
                raise ValueError("reorder takes two distinct positions")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")
        pos = tuple(int(p) for p in self.positions)
        # a swap is symmetric, so store it in canonical order
        object.__setattr__(self, "positions", tuple(sorted(pos)) if self.kind == "reorder" else pos)

    @classmethod
    def loss(cls, position: int, time: float = 0.0) -> "CollisionEvent":
        return cls("loss", (position,), time)

    @classmethod
    def reorder(cls, i: int, j: int, time: float = 0.0) -> "CollisionEvent":
        return cls("reorder", (i, j), time)

    def to_line(self) -> str:
        return f"{self.kind} {' '.join(map(str, self.positions))} t={self.time!r}"

    @classmethod
    def from_line(cls, line: str) -> "CollisionEvent":
        parts = line.split()
        if not parts:
            raise ValueError("empty event line")
        time = 0.0
        if parts[-1].startswith("t="):
            time = float(parts.pop()[2:])
        return cls(parts[0], tuple(int(p) for p in parts[1:]), time)


def apply_event(ledger: QubitLedger, event: CollisionEvent) -> QubitLedger:
    n = len(ledger)
    for p in event.positions:
        if not 0 <= p < n:
            raise EventRangeError(f"position {p} out of range for chain of {n}")
    pat, labs = list(ledger.pattern), list(ledger.labels)
    orphaned = ledger.orphaned
    if event.kind == "loss":
        (p,) = event.positions
        pat.pop(p)
        lost = labs.pop(p)
        if lost is not None:
            orphaned = orphaned + (lost,)
    else:
        i, j = event.positions
        pat[i], pat[j] = pat[j], pat[i]
        labs[i], labs[j] = labs[j], labs[i]
    return replace(ledger, pattern="".join(pat), labels=tuple(labs), orphaned=orphaned)


def sample_event(ledger: QubitLedger, rng: np.random.Generator, *, loss_probability: float = 0.5,
                 max_swap_distance: int = 1, time: float = 0.0) -> CollisionEvent:
    n = len(ledger)
    if n < 2:
        return CollisionEvent.loss(0, time)
    if rng.random() < loss_probability:
        return CollisionEvent.loss(int(rng.integers(n)), time)
    i = int(rng.integers(n))
    d = int(rng.integers(1, max_swap_distance + 1))
    j = i + d if i + d < n else i - d
    return CollisionEvent.reorder(i, j, time)


# ---------------------------------------------------------------------------
# observation and mismatch detection

@dataclass(frozen=True)
class ObservationFrame:
    start: int
    window: str
    timestamp: float = 0.0
    chain_length: int | None = None  # ion count, if the observation also counts ions
    circular: bool = False


def observe(true_ledger: QubitLedger, start: int, length: int, *, timestamp: float = 0.0,
            count_ions: bool = False, circular: bool = False, flip_probability: float = 0.0,
            rng: np.random.Generator | None = None) -> ObservationFrame:
    n = len(true_ledger)
    if not circular and not (0 <= start and start + length <= n):
        raise EventRangeError("observation window outside the chain")
    w = true_ledger.window(start, length, circular)
    if flip_probability > 0:
        rng = rng if rng is not None else np.random.default_rng()
        flips = rng.random(length) < flip_probability
        w = "".join((DARK if c == BRIGHT else BRIGHT) if f else c for c, f in zip(w, flips))
    return ObservationFrame(start, w, timestamp, n if count_ions else None, circular)


@dataclass(frozen=True)
class Hypothesis:
    event: CollisionEvent
    score: int  # Hamming distance between predicted and observed window
    labels: frozenset[int]


@dataclass(frozen=True)
class MismatchReport:
    consistent: bool
    kind: str | None = None  # "loss", "reorder" or "unknown"
    affected_labels: frozenset[int] = frozenset()
    affected_positions: frozenset[int] = frozenset()
    position_resolved: bool = True
    hypotheses: tuple[Hypothesis, ...] = ()


def _candidate_events(ledger: QubitLedger, start: int, length: int,
                      max_swap_distance: int | None) -> Iterable[CollisionEvent]:
    """Every loss, and every swap of unlike species touching the window."""
    n = len(ledger)
    for p in range(n):
        yield CollisionEvent.loss(p)
    pat = ledger.pattern
    stop = min(n, start + length)
    pairs = set()
    for i in range(start, stop):
        lo = 0 if max_swap_distance is None else max(0, i - max_swap_distance)
        hi = n if max_swap_distance is None else min(n, i + max_swap_distance + 1)
        for j in range(lo, hi):
            if j != i and pat[i] != pat[j]:
                pairs.add((min(i, j), max(i, j)))
    for i, j in sorted(pairs):
        yield CollisionEvent.reorder(i, j)


def _predicted_window(ledger: QubitLedger, event: CollisionEvent, start: int, length: int) -> str:
    pat = ledger.pattern
    stop = start + length
    if event.kind == "loss":
        (p,) = event.positions
        if p < start:
            return pat[start + 1:stop + 1]
        if p >= stop:
            return pat[start:stop]
        return pat[start:p] + pat[p + 1:stop + 1]
    i, j = event.positions
    lst = list(pat[start:stop])
    for a, b in ((i, j), (j, i)):
        if start <= a < stop:
            lst[a - start] = pat[b]
    return "".join(lst)


def hypothesis_search(ledger: QubitLedger, frame: ObservationFrame,
                      max_swap_distance: int | None = None) -> list[Hypothesis]:
    """All single-event hypotheses with their Hamming scores against the frame."""
    length = len(frame.window)
    out = []
    for ev in _candidate_events(ledger, frame.start, length, max_swap_distance):
        if frame.chain_length is not None:
            expect = len(ledger) - (ev.kind == "loss")
            if expect != frame.chain_length:
                continue
        pred = _predicted_window(ledger, ev, frame.start, length)
        if len(pred) != length:
            continue
        score = sum(a != b for a, b in zip(pred, frame.window))
        labs = frozenset(ledger.labels[p] for p in ev.positions if ledger.labels[p] is not None)
        out.append(Hypothesis(ev, score, labs))
    return out


def detect_mismatch(believed: QubitLedger, frame: ObservationFrame, *,
                    max_swap_distance: int | None = None, max_score: int = 0) -> MismatchReport:
    """Compare a frame against the believed chain and classify any mismatch.

    Only single events are considered. Losses outside the window all predict
    the same observation, so they are reported as an unresolved loss with no
    label attached. When no hypothesis scores within ``max_score`` the kind is
    ``unknown`` and every label in the window is affected.
    """
    length = len(frame.window)
    if frame.circular:
        raise NotImplementedError("mismatch search is defined on the linear chain")
    if not 0 <= frame.start or frame.start + length > len(believed):
        raise EventRangeError("frame lies outside the believed chain")
    need = min_unique_window(believed)
    if need is not None and length < need:
        raise AmbiguityError(f"window of {length} is below the uniqueness length {need}")
    expected = believed.window(frame.start, length)
    same_length = frame.chain_length is None or frame.chain_length == len(believed)
    if expected == frame.window and same_length:
        return MismatchReport(True)
    window_positions = frozenset(range(frame.start, frame.start + length))
    window_labels = frozenset(believed.window_labels(frame.start, length))
    hyps = hypothesis_search(believed, frame, max_swap_distance)
    best = min((h.score for h in hyps), default=None)
    if best is None or best > max_score:
        return MismatchReport(False, "unknown", window_labels, window_positions, False)
    top = tuple(h for h in hyps if h.score == best)
    kinds = {h.event.kind for h in top}
    kind = kinds.pop() if len(kinds) == 1 else "unknown"
    labels, positions, resolved = set(), set(), len(top) == 1
    for h in top:
        inside = [p for p in h.event.positions if p in window_positions]
        if h.event.kind == "loss" and not inside:
            resolved = False
            continue
        labels |= h.labels
        positions |= set(h.event.positions)
    return MismatchReport(False, kind, frozenset(labels), frozenset(positions), resolved, top)


def reencode(ledger: QubitLedger, labels: Iterable[int]) -> QubitLedger:
    """Retire ``labels`` and give those ions fresh ones; bumps the generation."""
    labels = set(labels)
    nxt = ledger.next_label
    new = []
    for lab in ledger.labels:
        if lab is not None and lab in labels:
            new.append(nxt)
            nxt += 1
        else:
            new.append(lab)
    return replace(ledger, labels=tuple(new), generation=ledger.generation + 1, next_label=nxt)


# ---------------------------------------------------------------------------
# text serialisation
#
#   generation <int>
#   next_label <int>
#   pattern <B/D string>
#   labels <int or - per site, space separated>
#   orphaned <ints>
#
# Event logs hold one event per line: "loss <p> t=<s>" or "reorder <i> <j> t=<s>".
# Blank lines and lines starting with '#' are ignored.

def ledger_to_text(ledger: QubitLedger) -> str:
    labs = " ".join("-" if lab is None else str(lab) for lab in ledger.labels)
    return (f"generation {ledger.generation}\nnext_label {ledger.next_label}\n"
            f"pattern {ledger.pattern}\nlabels {labs}\n"
            f"orphaned {' '.join(map(str, ledger.orphaned))}\n")


def ledger_from_text(text: str) -> QubitLedger:
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        fields[key] = rest.strip()
    labels = tuple(None if tok == "-" else int(tok) for tok in fields.get("labels", "").split())
    return QubitLedger(fields.get("pattern", ""), labels, int(fields.get("generation", 0)),
                       tuple(int(t) for t in fields.get("orphaned", "").split()),
                       int(fields.get("next_label", 0)))


def events_to_text(events: Sequence[CollisionEvent]) -> str:
    return "".join(ev.to_line() + "\n" for ev in events)


def events_from_text(text: str) -> list[CollisionEvent]:
    out = []
    for k, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(CollisionEvent.from_line(line))
        except ValueError as exc:
            raise ValueError(f"event line {k}: {exc}") from None
    return out


def replay(ledger: QubitLedger, events: Iterable[CollisionEvent]) -> QubitLedger:
    for ev in events:
        ledger = apply_event(ledger, ev)
    return ledger


def save_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)
