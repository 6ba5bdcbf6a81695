"""Optimality equations, design verification and integer design search.

The equilibrium certificate turns optimality into a linear system in the
sequence weights: stacked check-matrix blocks on the left, the completely
symmetric target on the right.  Approximate designs are verified by their
Euclidean residual in that system.  Exact designs are searched by
nonnegative least squares on the scaled simplex, largest-remainder
rounding, then descent over single and paired subject transfers from
seeded multinomial restarts; pairs matter because the good integer designs
are exactly uniform on periods and no single transfer preserves that
margin.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import matrix_kernels as mk
from .dropout_model import DropoutMechanism
from .errors import InfeasibleWeightsError, ValidationError
from .information import check_matrices, design_matrices
from .q_solver import OptimalityCertificate, q_coeffs
from .sequences import (
    SequenceTuple,
    SymmetricBlock,
    canonical_form,
    carryover_incidence,
    incidence,
    validate_sequence,
)


@dataclass(frozen=True)
class ExactDesign:
    """Integer replication counts per sequence, summing to n."""

    p: int
    t: int
    n: int
    counts: Mapping[SequenceTuple, int]
    name: Optional[str] = None

    def __post_init__(self):
        counts = {}
        for seq, c in self.counts.items():
            seq = validate_sequence(seq, self.t)
            if len(seq) != self.p:
                raise ValidationError(f"sequence {seq} has length != p={self.p}")
            c = int(c)
            if c < 0:
                raise ValidationError(f"negative count for sequence {seq}")
            if c > 0:
                counts[seq] = counts.get(seq, 0) + c
        if sum(counts.values()) != self.n:
            raise ValidationError(
                f"counts sum to {sum(counts.values())} but n = {self.n}"
            )
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_sequences(
        cls, sequences: Iterable[Sequence[int]], t: int, name: Optional[str] = None
    ) -> "ExactDesign":
        seqs = [validate_sequence(s, t) for s in sequences]
        if not seqs:
            raise ValidationError("design must contain at least one subject")
        p = len(seqs[0])
        counts: dict[SequenceTuple, int] = {}
        for s in seqs:
            counts[s] = counts.get(s, 0) + 1
        return cls(p=p, t=t, n=len(seqs), counts=counts, name=name)

    def subject_sequences(self) -> list[SequenceTuple]:
        """Subjects expanded in sorted sequence order."""
        out: list[SequenceTuple] = []
        for seq in sorted(self.counts):
            out.extend([seq] * self.counts[seq])
        return out

    def matrices(self):
        return design_matrices(self.subject_sequences(), self.t)

    def weights(self) -> "ApproximateDesign":
        return ApproximateDesign(
            p=self.p,
            t=self.t,
            weights={s: c / self.n for s, c in self.counts.items()},
        )


@dataclass(frozen=True)
class ApproximateDesign:
    """Nonnegative sequence weights summing to one."""

    p: int
    t: int
    weights: Mapping[SequenceTuple, float]

    def __post_init__(self):
        weights = {}
        for seq, w in self.weights.items():
            seq = validate_sequence(seq, self.t)
            if len(seq) != self.p:
                raise ValidationError(f"sequence {seq} has length != p={self.p}")
            w = float(w)
            if w < -1e-12:
                raise ValidationError(f"negative weight for sequence {seq}")
            if w > 0.0:
                weights[seq] = w
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class OptimalitySystem:
    """Vectorized linear optimality system over the certificate support.

    Column j stacks, for support sequence j: the first check block combined
    with x* times the cross block (t*t rows), the transposed cross block
    combined with x* times the second check block (t*t rows), and the
    period-average balance block (p*t rows).  ``y`` is the unit-mass target;
    the integer-count form scales it by n.
    """

    support: tuple[SequenceTuple, ...]
    x: np.ndarray
    y: np.ndarray
    t: int
    p: int

    def y_exact(self, n: int) -> np.ndarray:
        return self.y * n

    def column_index(self) -> dict[SequenceTuple, int]:
        return {s: j for j, s in enumerate(self.support)}


def build_system(cert: OptimalityCertificate, mech: DropoutMechanism) -> OptimalitySystem:
    """Assemble the optimality system for a certificate."""
    if not cert.support:
        raise ValidationError("certificate has empty support")
    t, p = cert.t, mech.p
    bt = mk.centering(t)
    rows = 2 * t * t + p * t
    cols = []
    for seq in cert.support:
        c11, c12, c22 = check_matrices(seq, mech, t)
        th = incidence(seq, t) @ bt
        fh = carryover_incidence(seq, t) @ bt
        block1 = c11 + cert.x_star * c12 @ bt
        block2 = c12.T + cert.x_star * c22 @ bt
        block3 = mech.B @ (th + cert.x_star * fh)
        cols.append(np.concatenate([block1.ravel(), block2.ravel(), block3.ravel()]))
    x = np.column_stack(cols)
    assert x.shape == (rows, len(cert.support))
    y = np.concatenate(
        [
            (cert.y_star / (t - 1)) * bt.ravel(),
            np.zeros(t * t),
            np.zeros(p * t),
        ]
    )
    return OptimalitySystem(support=tuple(cert.support), x=x, y=y, t=t, p=p)


@dataclass(frozen=True)
class ApproximateVerification:
    """Residual of the optimality system at given weights."""

    residual: float
    off_support_mass: float

    @property
    def optimal(self) -> bool:
        return self.residual <= 1e-8 and self.off_support_mass <= 1e-12


def verify_approximate(
    weights: ApproximateDesign | Mapping[SequenceTuple, float],
    cert: OptimalityCertificate,
    mech: DropoutMechanism,
    system: Optional[OptimalitySystem] = None,
) -> ApproximateVerification:
    """Euclidean residual of the unit-mass optimality system at ``weights``.

    Mass placed outside the certificate support never enters the system; it
    is reported separately as a violation in its own right.
    """
    if isinstance(weights, ApproximateDesign):
        weights = weights.weights
    if system is None:
        system = build_system(cert, mech)
    index = system.column_index()
    w = np.zeros(len(system.support))
    off = 0.0
    for seq, value in weights.items():
        seq = validate_sequence(seq, cert.t)
        j = index.get(seq)
        if j is None:
            off += abs(float(value))
        else:
            w[j] = float(value)
    residual = float(np.linalg.norm(system.x @ w - system.y))
    return ApproximateVerification(residual=residual, off_support_mass=off)


@dataclass(frozen=True)
class SearchReport:
    residual: float
    restarts_used: int
    moves: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "restarts_used": self.restarts_used,
            "moves": self.moves,
            "seed": self.seed,
        }


def _project_scaled_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of v onto {w >= 0, sum w = total}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, len(v) + 1)
    cond = u - css / ks > 0
    rho = np.max(np.flatnonzero(cond)) + 1
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def _largest_remainder_round(w: np.ndarray, n: int) -> np.ndarray:
    base = np.floor(w).astype(np.int64)
    deficit = int(n - base.sum())
    if deficit > 0:
        frac = w - base
        order = np.lexsort((np.arange(len(w)), -frac))
        base[order[:deficit]] += 1
    return base


class _TransferDescent:
    """Unit-transfer descent engine over the columns of one system.

    A move shifts one subject from column i to column j.  Descent applies
    the best improving single move until none exists, then scans all
    ordered pairs of moves (in memory-bounded blocks) and applies the best
    improving pair; single transfers alone cannot cross period-balance
    margins, which is where the good integer designs live.  Ties break on
    the lowest move index, i.e. lexicographic sequence order.
    """

    _PAIR_BLOCK = 2_000_000  # scratch entries per pair-scan block

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = x
        self.y = y
        m = x.shape[1]
        self.m = m
        self.mi, self.mj = (a.ravel() for a in np.where(~np.eye(m, dtype=bool)))
        self.d = x[:, self.mj].T - x[:, self.mi].T  # (M, rows)
        self.dd = np.einsum("kr,kr->k", self.d, self.d)

    def run(self, counts: np.ndarray) -> tuple[np.ndarray, float, int]:
        counts = counts.astype(np.int64).copy()
        r = self.x @ counts - self.y
        obj = float(r @ r)
        moves = 0
        while True:
            counts, r, obj, applied = self._single_sweep(counts, r, obj)
            moves += applied
            pair = self._best_pair(counts, r, obj)
            if pair is None:
                return counts, float(np.sqrt(max(obj, 0.0))), moves
            for k in pair:
                counts[self.mi[k]] -= 1
                counts[self.mj[k]] += 1
                r += self.d[k]
                moves += 1
            obj = float(r @ r)

    def _single_sweep(self, counts, r, obj):
        applied = 0
        while True:
            delta = 2.0 * (self.d @ r) + self.dd
            delta = np.where(counts[self.mi] >= 1, delta, np.inf)
            k = int(np.argmin(delta))
            if delta[k] >= -1e-11 * max(1.0, obj):
                return counts, r, obj, applied
            counts[self.mi[k]] -= 1
            counts[self.mj[k]] += 1
            r += self.d[k]
            obj += float(delta[k])
            applied += 1

    # Above this many moves the pair scan restricts its first move to the
    # most promising singles; below it every ordered pair is scanned.
    _PAIR_FULL_LIMIT = 4096
    _PAIR_PRUNED_FIRST = 1024

    def _best_pair(self, counts, r, obj) -> Optional[tuple[int, int]]:
        mi, mj = self.mi, self.mj
        n_moves = len(mi)
        delta = 2.0 * (self.d @ r) + self.dd
        delta = np.where(counts[mi] >= 1, delta, np.inf)
        feas_first = np.flatnonzero(np.isfinite(delta))
        if feas_first.size == 0:
            return None
        if n_moves > self._PAIR_FULL_LIMIT and feas_first.size > self._PAIR_PRUNED_FIRST:
            order = np.argsort(delta[feas_first])
            feas_first = np.sort(feas_first[order[: self._PAIR_PRUNED_FIRST]])
        block = max(1, self._PAIR_BLOCK // n_moves)
        best_val = -1e-11 * max(1.0, obj)
        best: Optional[tuple[int, int]] = None
        donor_count = counts[mi]
        for lo in range(0, feas_first.size, block):
            rows = feas_first[lo : lo + block]
            if rows.size == 0:
                continue
            total = delta[rows, None] + delta[None, :]
            total += 2.0 * (self.d[rows] @ self.d.T)
            same_donor = mi[rows, None] == mi[None, :]
            need_two = same_donor & (donor_count[rows, None] < 2)
            second_ok = (donor_count[None, :] >= 1) | (mj[rows, None] == mi[None, :])
            total = np.where(need_two | ~second_ok, np.inf, total)
            k_local = int(np.argmin(total))
            k1, k2 = divmod(k_local, n_moves)
            if total[k1, k2] < best_val:
                best_val = float(total[k1, k2])
                best = (int(rows[k1]), int(k2))
        return best


def _margin_greedy_start(rng, incidences: np.ndarray, n: int) -> np.ndarray:
    """Period-uniform start: fill the period/treatment margins greedily.

    Good integer designs are uniform on periods; descent cannot restore
    that balance once lost, so restarts must begin inside (or near) it.
    """
    m, p, t = incidences.shape
    counts = np.zeros(m, dtype=np.int64)
    deficit = np.full((p, t), n / t)
    for _ in range(n):
        scores = np.einsum("spt,pt->s", incidences, deficit)
        ties = np.flatnonzero(scores >= scores.max() - 1e-9)
        j = int(ties[rng.integers(len(ties))])
        counts[j] += 1
        deficit -= incidences[j]
    return counts


def _restart_start(
    restart: int,
    seed: int,
    base: np.ndarray,
    w: np.ndarray,
    incidences: np.ndarray,
    n: int,
) -> np.ndarray:
    """Start counts for one restart.

    Restart 0 is the deterministic rounding; later restarts rotate through
    margin-greedy construction, uniform multinomial draws, and draws guided
    by the continuous solution.
    """
    if restart == 0:
        return base.copy()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, restart))))
    m = len(base)
    family = restart % 3
    if family == 1:
        return _margin_greedy_start(rng, incidences, n)
    if family == 2:
        probs = np.full(m, 1.0 / m)
    else:
        probs = (w / n + 1.0 / m) / 2.0
        probs = probs / probs.sum()
    return rng.multinomial(n, probs).astype(np.int64)


def exact_search(
    n: int,
    cert: OptimalityCertificate,
    mech: DropoutMechanism,
    *,
    seed: int = 0,
    restarts: int = 8,
    iters: int = 500,
) -> tuple[ExactDesign, SearchReport]:
    """Integer counts on the support minimizing the system residual.

    Pipeline: projected-gradient least squares on the scaled simplex
    (deterministic, uniform init), largest-remainder rounding, then
    transfer descent; restarts re-run the descent from seeded multinomial
    starts that alternate between uniform and solution-guided sampling.
    Deterministic for fixed (seed, restarts, iters); the winner is picked
    by (residual, restart index), so the result never does worse than the
    descent from the plain rounding.
    """
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    system = build_system(cert, mech)
    x, y = system.x, system.y_exact(n)
    m = x.shape[1]

    spectral = np.linalg.norm(x, 2)
    step = 1.0 / (spectral * spectral)
    w = np.full(m, n / m)
    for _ in range(iters):
        grad = x.T @ (x @ w - y)
        w = _project_scaled_simplex(w - step * grad, float(n))

    base = _largest_remainder_round(w, n)
    engine = _TransferDescent(x, y)
    incidences = np.stack([incidence(s, cert.t) for s in system.support])

    best_counts: Optional[np.ndarray] = None
    best_resid = np.inf
    best_moves = 0
    for restart in range(restarts + 1):
        start = _restart_start(restart, seed, base, w, incidences, n)
        counts, resid, moves = engine.run(start)
        if resid < best_resid - 1e-15:
            best_counts, best_resid, best_moves = counts, resid, moves

    assert best_counts is not None
    design = ExactDesign(
        p=mech.p,
        t=cert.t,
        n=n,
        counts={seq: int(c) for seq, c in zip(system.support, best_counts) if c > 0},
    )
    report = SearchReport(
        residual=best_resid, restarts_used=restarts, moves=best_moves, seed=seed
    )
    return design, report


def symmetric_solve(
    cert: OptimalityCertificate,
    mech: DropoutMechanism,
    blocks: Optional[Sequence[SymmetricBlock | Sequence[int]]] = None,
) -> ApproximateDesign:
    """Block weights balancing the quadratic slopes at the equilibrium point.

    Solves sum_b w_b * q'_b(x*) = 0 with sum_b w_b = 1 and w >= 0 over the
    chosen symmetric blocks (all certificate blocks by default), then
    spreads each block weight uniformly over its members.  Infeasible when
    every block slope has the same strict sign.
    """
    if blocks is None:
        block_list = list(cert.blocks)
    else:
        block_list = []
        for b in blocks:
            if isinstance(b, SymmetricBlock):
                block_list.append(b)
            else:
                rep = canonical_form(validate_sequence(b, cert.t), cert.t)
                matches = [cb for cb in cert.blocks if cb.representative == rep]
                if not matches:
                    raise ValidationError(f"block of {rep} is not inside the support")
                block_list.append(matches[0])
    if not block_list:
        raise ValidationError("no symmetric blocks given")
    support = set(cert.support)
    for b in block_list:
        if b.representative not in {canonical_form(s, cert.t) for s in support}:
            raise ValidationError(f"block of {b.representative} is not inside the support")

    slopes = np.array(
        [q_coeffs(b.representative, mech, cert.t).derivative(cert.x_star) for b in block_list]
    )
    tol = 1e-9 * max(1.0, abs(cert.y_star))
    if np.all(np.abs(slopes) <= tol):
        w = np.full(len(block_list), 1.0 / len(block_list))
    else:
        if np.all(slopes > -tol) or np.all(slopes < tol):
            raise InfeasibleWeightsError(
                "all block slopes share one sign; the balance equation has no "
                "nonnegative solution on these blocks"
            )
        w = _balanced_weights(slopes)
    weights: dict[SequenceTuple, float] = {}
    for wb, block in zip(w, block_list):
        if wb <= 0.0:
            continue
        members = block.members()
        for s in members:
            weights[s] = weights.get(s, 0.0) + wb / len(members)
    return ApproximateDesign(p=mech.p, t=cert.t, weights=weights)


def _balanced_weights(slopes: np.ndarray) -> np.ndarray:
    """Min-distance-to-uniform solution of sum w = 1, sum w*slope = 0, w >= 0."""
    active = np.ones(len(slopes), dtype=bool)
    while True:
        idx = np.flatnonzero(active)
        a = np.vstack([np.ones(len(idx)), slopes[idx]])
        b = np.array([1.0, 0.0])
        u = np.full(len(idx), 1.0 / len(idx))
        try:
            lam = np.linalg.solve(a @ a.T, a @ u - b)
        except np.linalg.LinAlgError as exc:
            raise InfeasibleWeightsError("degenerate block slopes") from exc
        w_sub = u - a.T @ lam
        if np.all(w_sub >= -1e-12):
            w = np.zeros(len(slopes))
            w[idx] = np.maximum(w_sub, 0.0)
            w /= w.sum()
            if not isfinite(float(w @ slopes)) or abs(float(w @ slopes)) > 1e-8 * max(
                1.0, float(np.max(np.abs(slopes)))
            ):
                raise InfeasibleWeightsError("balance equation not solvable on given blocks")
            return w
        drop = idx[int(np.argmin(w_sub))]
        active[drop] = False
        kept = slopes[active]
        if kept.size == 0 or np.all(kept > 0) or np.all(kept < 0):
            raise InfeasibleWeightsError(
                "all remaining block slopes share one sign; no nonnegative solution"
            )
