"""Treatment-sequence combinatorics.

Sequences are tuples of 1-based treatment labels, one entry per period.
This module enumerates them, builds incidence matrices, computes per-prefix
count statistics and handles the relabeling action of treatment
permutations (symmetric blocks / orbits).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import perm
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceededError, ValidationError

DEFAULT_ENUM_BUDGET = 10**6

SequenceTuple = tuple[int, ...]


def validate_sequence(s: Sequence[int], t: int) -> SequenceTuple:
    """Check labels lie in 1..t and return the sequence as a tuple."""
    seq = tuple(int(x) for x in s)
    if len(seq) < 1:
        raise ValidationError("sequence must have at least one period")
    if any(not 1 <= x <= t for x in seq):
        raise ValidationError(f"sequence labels must be in 1..{t}, got {seq}")
    return seq


def enumerate_sequences(t: int, p: int, budget: int = DEFAULT_ENUM_BUDGET) -> list[SequenceTuple]:
    """All t**p sequences in lexicographic order."""
    if t < 2 or p < 2:
        raise ValidationError(f"need t >= 2 and p >= 2, got t={t}, p={p}")
    total = t**p
    if total > budget:
        raise BudgetExceededError(
            f"enumeration of {t}**{p} = {total} sequences exceeds budget {budget}; "
            "work block-wise over symmetric blocks instead"
        )
    return [tuple(int(x) + 1 for x in idx) for idx in np.ndindex(*([t] * p))]


def enumeration_array(t: int, p: int, budget: int = DEFAULT_ENUM_BUDGET) -> np.ndarray:
    """The full enumeration as an (t**p, p) array of 0-based labels."""
    if t < 2 or p < 2:
        raise ValidationError(f"need t >= 2 and p >= 2, got t={t}, p={p}")
    total = t**p
    if total > budget:
        raise BudgetExceededError(
            f"enumeration of {t}**{p} = {total} sequences exceeds budget {budget}; "
            "work block-wise over symmetric blocks instead"
        )
    grids = np.indices([t] * p).reshape(p, total).T
    return np.ascontiguousarray(grids)


def incidence(s: Sequence[int], t: int) -> np.ndarray:
    """p x t treatment incidence: row k has a single 1 at the period-k label."""
    seq = validate_sequence(s, t)
    out = np.zeros((len(seq), t))
    out[np.arange(len(seq)), np.array(seq) - 1] = 1.0
    return out


def carryover_incidence(s: Sequence[int], t: int) -> np.ndarray:
    """p x t carryover incidence: first row zero, then incidence shifted down."""
    mat = incidence(s, t)
    out = np.zeros_like(mat)
    out[1:] = mat[:-1]
    return out


def prefix_stats(s: Sequence[int], k: int, t: int) -> tuple[tuple[int, ...], int, int, int]:
    """Exact count statistics of the k-period prefix.

    Returns ``(f, xi, rho, f_last)`` where ``f[i]`` counts occurrences of
    treatment i+1 in the prefix, ``xi = sum f_i**2``, ``rho`` counts adjacent
    equal pairs inside the prefix and ``f_last`` is the count of the
    treatment applied in period k.
    """
    seq = validate_sequence(s, t)
    if not 1 <= k <= len(seq):
        raise ValidationError(f"prefix length {k} out of range for sequence of length {len(seq)}")
    prefix = seq[:k]
    f = [0] * t
    for label in prefix:
        f[label - 1] += 1
    xi = sum(c * c for c in f)
    rho = sum(1 for j in range(k - 1) if prefix[j] == prefix[j + 1])
    return tuple(f), xi, rho, f[prefix[-1] - 1]


def apply_permutation(s: Sequence[int], sigma: Sequence[int]) -> SequenceTuple:
    """Relabel a sequence by sigma, where sigma[i-1] is the image of label i."""
    sigma = tuple(int(x) for x in sigma)
    if sorted(sigma) != list(range(1, len(sigma) + 1)):
        raise ValidationError(f"not a permutation of 1..{len(sigma)}: {sigma}")
    seq = validate_sequence(s, len(sigma))
    return tuple(sigma[x - 1] for x in seq)


def canonical_form(s: Sequence[int], t: int) -> SequenceTuple:
    """Relabel by order of first appearance: the lexicographic orbit minimum."""
    seq = validate_sequence(s, t)
    relabel: dict[int, int] = {}
    out = []
    for x in seq:
        if x not in relabel:
            relabel[x] = len(relabel) + 1
        out.append(relabel[x])
    return tuple(out)


@dataclass(frozen=True)
class SymmetricBlock:
    """Orbit of a sequence under all t! treatment relabelings."""

    representative: SequenceTuple
    size: int
    t: int

    def members(self) -> list[SequenceTuple]:
        return orbit(self.representative, self.t)


def symmetric_block(s: Sequence[int], t: int) -> SymmetricBlock:
    """The orbit of ``s``: canonical representative plus orbit size.

    The size is t! / (t - u)! with u the number of distinct labels in ``s``;
    a full orbit listing is never materialized here.
    """
    rep = canonical_form(s, t)
    distinct = len(set(rep))
    return SymmetricBlock(representative=rep, size=perm(t, distinct), t=t)


def orbit(s: Sequence[int], t: int) -> list[SequenceTuple]:
    """All distinct relabelings of ``s``, sorted lexicographically."""
    seq = validate_sequence(s, t)
    seen = {tuple(sigma[x - 1] for x in seq) for sigma in permutations(range(1, t + 1))}
    return sorted(seen)


def group_into_blocks(seqs: Iterable[Sequence[int]], t: int) -> list[SymmetricBlock]:
    """Deduplicate sequences into symmetric blocks, sorted by representative."""
    reps = {canonical_form(s, t) for s in seqs}
    return [symmetric_block(rep, t) for rep in sorted(reps)]


def parse_sequence(text: str, t: int) -> SequenceTuple:
    """Parse '1234' (single-digit labels) or '10,2,3' (comma-separated)."""
    text = text.strip()
    if not text:
        raise ValidationError("empty sequence string")
    try:
        if "," in text:
            labels = [int(part) for part in text.split(",")]
        else:
            labels = [int(ch) for ch in text]
    except ValueError as exc:
        raise ValidationError(f"cannot parse sequence {text!r}") from exc
    return validate_sequence(labels, t)


def format_sequence(s: Sequence[int], t: int) -> str:
    """Compact digit form for t <= 9, comma-separated labels otherwise."""
    seq = validate_sequence(s, t)
    if t <= 9:
        return "".join(str(x) for x in seq)
    return ",".join(str(x) for x in seq)
