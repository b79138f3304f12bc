"""Braid words over Artin generators and their rewriting to normal form.

A word is a sequence of letters (i, e): generator index i in [1, n-1] and
exponent e in {+1, -1}, with sigma_i recording strand i passing under strand
i+1. Simplification applies three rules:

  1. cancel   sigma_i sigma_i^-1 -> eps   (and the mirror)
  2. commute  sigma_i^a sigma_j^b -> sigma_j^b sigma_i^a,
              only for |i - j| > 1 AND i > j, so distant letters sort
              ascending and the inversion count strictly drops
  3. braid    sigma_i sigma_{i+1} sigma_i -> sigma_{i+1} sigma_i sigma_{i+1}
              (uniform-exponent triples, the all-negative mirror included),
              gated twice: it is a last resort, legal only on words where
              no rule 1 or rule 2 redex exists anywhere, and only when the
              rewritten window immediately exposes a cancellation

Rule priority is global, 1 > 2 > 3: the simplifier applies the leftmost
cancellation, else the leftmost commutation, else the leftmost legal braid
step, so normal forms are deterministic. The complexity measure
C(W) = (length, inversion count) strictly decreases lexicographically on
every rule-1 and rule-2 step, and a run never ends with C(W) above its
starting value: a braid step fires only on words with no other redex and
always exposes an immediate cancellation, so its inversion bump is followed
by a length drop. Termination of the full system follows from the finer
measure (length, -index sum, inversions): rule 1 drops length, rule 3
preserves length and strictly raises the index sum, which is bounded by
(n - 1) * length, and rule 2 preserves both and drops inversions.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass

__all__ = [
    "BraidWord",
    "RewriteTrace",
    "BraidFault",
    "ConfluenceVerdict",
    "append_crossings",
    "simplify",
    "apply_rule",
    "inversion_count",
    "measure",
    "confluence_oracle",
    "reduces_to_identity",
    "parse_word",
    "format_word",
]

_TOKEN = re.compile(r"^([sS])([1-9][0-9]*)$")


class BraidFault(RuntimeError):
    """Rewrite iteration cap exceeded: indicates a rule bug, never expected."""


def _check_letters(letters, strand_count):
    for i, e in letters:
        if not 1 <= i <= strand_count - 1:
            raise ValueError(f"generator index {i} out of range for {strand_count} strands")
        if e not in (1, -1):
            raise ValueError(f"exponent must be +1 or -1, got {e}")


@dataclass(frozen=True)
class BraidWord:
    """Immutable braid word: letters are (generator_index, exponent) pairs."""

    letters: tuple
    strand_count: int

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple((int(i), int(e)) for i, e in self.letters))
        if self.strand_count < 2:
            raise ValueError("braid group needs at least 2 strands")
        _check_letters(self.letters, self.strand_count)

    def __len__(self) -> int:
        return len(self.letters)

    def inverse(self) -> "BraidWord":
        return BraidWord(tuple((i, -e) for i, e in reversed(self.letters)), self.strand_count)

    def __mul__(self, other: "BraidWord") -> "BraidWord":
        n = max(self.strand_count, other.strand_count)
        return BraidWord(self.letters + other.letters, n)

    def __str__(self) -> str:
        return format_word(self)

    @classmethod
    def identity(cls, strand_count: int = 2) -> "BraidWord":
        return cls((), strand_count)


@dataclass(frozen=True)
class RewriteTrace:
    """Steps of one simplify run: (rule id, position) in application order."""

    steps: tuple
    initial: BraidWord
    final: BraidWord


def parse_word(text: str, strand_count: int | None = None) -> BraidWord:
    """Parse whitespace-separated tokens s<i> / S<i> (sigma_i / sigma_i inverse)."""
    letters = []
    for tok in text.split():
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad braid token {tok!r}; expected s<i> or S<i>")
        letters.append((int(m.group(2)), 1 if m.group(1) == "s" else -1))
    if strand_count is None:
        strand_count = max((i for i, _ in letters), default=1) + 1
    return BraidWord(tuple(letters), max(2, strand_count))


def format_word(w: BraidWord) -> str:
    return " ".join(f"{'s' if e > 0 else 'S'}{i}" for i, e in w.letters) or "<identity>"


def append_crossings(w: BraidWord, events) -> BraidWord:
    """Append crossing events in time order: under -> sigma_i, over -> sigma_i^-1."""
    ordered = sorted(events, key=lambda ev: ev.time_step)  # stable within a step
    new = list(w.letters)
    for ev in ordered:
        if not 1 <= ev.strand_index <= w.strand_count - 1:
            raise ValueError(f"crossing strand index {ev.strand_index} out of range")
        new.append((ev.strand_index, ev.sign.exponent))
    return BraidWord(tuple(new), w.strand_count)


def inversion_count(w) -> int:
    """Number of pairs k < l whose generator indices are out of order (exponent-blind)."""
    idx = [i for i, _ in (w.letters if isinstance(w, BraidWord) else w)]
    return sum(1 for k in range(len(idx)) for l in range(k + 1, len(idx)) if idx[k] > idx[l])


def measure(w) -> tuple:
    """Termination measure C(W) = (length, inversion count), compared lexicographically."""
    letters = w.letters if isinstance(w, BraidWord) else tuple(w)
    return (len(letters), inversion_count(letters))


# -- rule machinery ----------------------------------------------------------

def _cancel_at(letters, q) -> bool:
    return (
        q + 1 < len(letters)
        and letters[q][0] == letters[q + 1][0]
        and letters[q][1] == -letters[q + 1][1]
    )


def _commute_at(letters, q) -> bool:
    if q + 1 >= len(letters):
        return False
    i, j = letters[q][0], letters[q + 1][0]
    return abs(i - j) > 1 and i > j


def _braid_pattern_at(letters, p) -> bool:
    if p + 2 >= len(letters):
        return False
    (i, e1), (j, e2), (k, e3) = letters[p], letters[p + 1], letters[p + 2]
    return j == i + 1 and k == i and e1 == e2 == e3


def _braid_result(letters, p) -> list:
    i, e = letters[p][0], letters[p][1]
    return list(letters[:p]) + [(i + 1, e), (i, e), (i + 1, e)] + list(letters[p + 3:])


def _braid_gated_at(letters, p) -> bool:
    """Braid pattern present AND the rewrite exposes a cancellation in the
    changed window. Exposing only a commutation is excluded: that variant can
    raise the inversion count past the initial word's, breaking the overall
    non-increase of C(W), while this stricter gate keeps it a theorem (every
    braid step is immediately followed by a length-dropping cancellation)."""
    if not _braid_pattern_at(letters, p):
        return False
    new = _braid_result(letters, p)
    for q in range(max(0, p - 1), min(len(new) - 1, p + 3)):
        if _cancel_at(new, q):
            return True
    return False


def _quiescent(letters) -> bool:
    """No rule-1 or rule-2 redex anywhere; only then may rule 3 fire."""
    return not any(
        _cancel_at(letters, q) or _commute_at(letters, q)
        for q in range(len(letters) - 1)
    )


def _braid_legal_at(letters, p) -> bool:
    return _braid_gated_at(letters, p) and _quiescent(letters)


def apply_rule(letters, rule: str, pos: int) -> list:
    """Apply one named rule at a position; raises if the redex is absent."""
    letters = list(letters)
    if rule == "cancel":
        if not _cancel_at(letters, pos):
            raise ValueError(f"no cancellation at position {pos}")
        return letters[:pos] + letters[pos + 2:]
    if rule == "commute":
        if not _commute_at(letters, pos):
            raise ValueError(f"no eligible commutation at position {pos}")
        letters[pos], letters[pos + 1] = letters[pos + 1], letters[pos]
        return letters
    if rule == "braid":
        if not _braid_legal_at(letters, pos):
            raise ValueError(f"no legal braid redex at position {pos}")
        return _braid_result(letters, pos)
    raise ValueError(f"unknown rule {rule!r}")


def simplify(w: BraidWord) -> tuple:
    """Reduce a word to its deterministic normal form.

    Returns (normal form, RewriteTrace). The iteration cap 10 * L^2 on
    applied rewrites raises BraidFault if exceeded; the termination argument
    makes that unreachable for sound rules.
    """
    letters = list(w.letters)
    cap = 10 * max(1, len(letters)) ** 2
    steps = []
    while True:
        hit = None
        for q in range(len(letters) - 1):
            if _cancel_at(letters, q):
                hit = ("cancel", q)
                break
        if hit is None:
            for q in range(len(letters) - 1):
                if _commute_at(letters, q):
                    hit = ("commute", q)
                    break
        if hit is None:
            # word is quiescent here, so the gate alone decides legality
            for p in range(len(letters) - 2):
                if _braid_gated_at(letters, p):
                    hit = ("braid", p)
                    break
        if hit is None:
            break
        rule, pos = hit
        if rule == "cancel":
            letters = letters[:pos] + letters[pos + 2:]
        elif rule == "commute":
            letters[pos], letters[pos + 1] = letters[pos + 1], letters[pos]
        else:
            letters = _braid_result(letters, pos)
        steps.append(hit)
        if len(steps) > cap:
            raise BraidFault(f"rewrite cap {cap} exceeded on word of length {len(w)}")
    final = BraidWord(tuple(letters), w.strand_count)
    return final, RewriteTrace(tuple(steps), w, final)


# -- exhaustive small-word oracles -------------------------------------------

def _restricted_successors(letters):
    out = []
    for q in range(len(letters) - 1):
        if _cancel_at(letters, q):
            out.append(tuple(letters[:q] + letters[q + 2:]))
        if _commute_at(letters, q):
            swapped = list(letters)
            swapped[q], swapped[q + 1] = swapped[q + 1], swapped[q]
            out.append(tuple(swapped))
    if not out:  # braid steps are a last resort, gated on quiescence
        for p in range(len(letters) - 2):
            if _braid_gated_at(letters, p):
                out.append(tuple(_braid_result(letters, p)))
    return out


@dataclass(frozen=True)
class ConfluenceVerdict:
    status: str           # "confluent" | "divergent" | "inconclusive"
    normal_forms: tuple   # distinct terminal words reached (as letter tuples)
    nodes_explored: int


def confluence_oracle(w: BraidWord, max_nodes: int = 50_000) -> ConfluenceVerdict:
    """Check that every terminal of the restricted rewrite graph coincides.

    Breadth-first exploration of all restricted rule applications collects
    the terminal words (no rule applies anywhere). Terminals coincide when
    they are a single word, or when every pair is proved equivalent by the
    unrestricted rules (u times v inverse reduces to the empty word), since
    the restricted strategy can park group-equal words in different spots.
    Exceeding the node budget during exploration is reported as inconclusive
    rather than failure; a terminal pair the unrestricted search cannot join
    is divergent. Supported scale: length <= 12, strand count <= 5.
    """
    if len(w.letters) > 12 or w.strand_count > 5:
        raise ValueError("confluence oracle supports length <= 12 and <= 5 strands")
    start = tuple(w.letters)
    seen = {start}
    queue = deque([start])
    terminals = set()
    while queue:
        node = queue.popleft()
        succ = _restricted_successors(list(node))
        if not succ:
            terminals.add(node)
            continue
        for nxt in succ:
            if nxt not in seen:
                if len(seen) >= max_nodes:
                    return ConfluenceVerdict("inconclusive", tuple(sorted(terminals)), len(seen))
                seen.add(nxt)
                queue.append(nxt)
    forms = tuple(sorted(terminals))
    status = "confluent"
    if len(forms) > 1:
        base = BraidWord(forms[0], w.strand_count)
        for other in forms[1:]:
            product = base * BraidWord(other, w.strand_count).inverse()
            if not reduces_to_identity(product):
                status = "divergent"
                break
    return ConfluenceVerdict(status, forms, len(seen))


def _unrestricted_successors(letters):
    # Group-sound moves only: cancellation, distant commutation in both
    # directions, braid relation in both directions. Length never grows, so
    # the reachable set is finite.
    out = []
    for q in range(len(letters) - 1):
        if _cancel_at(letters, q):
            out.append(tuple(letters[:q] + letters[q + 2:]))
        i, j = letters[q][0], letters[q + 1][0]
        if abs(i - j) > 1:
            swapped = list(letters)
            swapped[q], swapped[q + 1] = swapped[q + 1], swapped[q]
            out.append(tuple(swapped))
    for p in range(len(letters) - 2):
        (i, e1), (j, e2), (k, e3) = letters[p], letters[p + 1], letters[p + 2]
        if e1 == e2 == e3:
            if j == i + 1 and k == i:
                out.append(tuple(_braid_result(letters, p)))
            elif j == i - 1 and k == i:  # reverse direction of the relation
                out.append(tuple(list(letters[:p]) + [(j, e1), (i, e1), (j, e1)] + list(letters[p + 3:])))
    return out


def reduces_to_identity(w: BraidWord, max_nodes: int = 200_000) -> bool:
    """Whether w reaches the empty word under the unrestricted sound moves."""
    start = tuple(w.letters)
    if not start:
        return True
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in _unrestricted_successors(list(node)):
            if not nxt:
                return True
            if nxt not in seen:
                if len(seen) >= max_nodes:
                    return False
                seen.add(nxt)
                queue.append(nxt)
    return False
