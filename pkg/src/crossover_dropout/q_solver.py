"""Per-sequence quadratics and the minimax optimality certificate.

Each sequence s gets a strictly convex quadratic q_s(x); the equilibrium of
the game max-over-weights / min-over-x of the weighted average determines
the optimal value y*, the equilibrium point x* and the support set of all
weight-optimal designs.  Three families of mechanisms admit closed forms
for (x*, y*, support); everything else is solved numerically by minimizing
h(x) = max_s q_s(x), which is convex and piecewise quadratic with positive
curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .dropout_model import DropoutMechanism
from .errors import ValidationError
from .sequences import (
    DEFAULT_ENUM_BUDGET,
    SequenceTuple,
    SymmetricBlock,
    enumeration_array,
    format_sequence,
    group_into_blocks,
    prefix_stats,
    validate_sequence,
)

REGIME_I = "closed_form_i"
REGIME_II = "closed_form_ii"
REGIME_II_BOUNDARY = "closed_form_ii_boundary"
REGIME_III = "closed_form_iii"
REGIME_NUMERIC = "numeric"


class QCoefficients(NamedTuple):
    """Coefficients of q_s(x) = q11 + 2 q12 x + q22 x**2."""

    q11: float
    q12: float
    q22: float

    def value(self, x: float) -> float:
        return self.q11 + 2.0 * self.q12 * x + self.q22 * x * x

    def derivative(self, x: float) -> float:
        return 2.0 * self.q12 + 2.0 * self.q22 * x


def q_coeffs(s: Sequence[int], mech: DropoutMechanism, t: int) -> QCoefficients:
    """Quadratic coefficients of one sequence under a mechanism.

    Assembled from prefix count statistics; the k-th period contributes with
    weight alpha_k.  Cross-checkable against the trace definition built on
    the mechanism matrix A (see information.check-matrices tests).
    """
    seq = validate_sequence(s, t)
    if len(seq) != mech.p:
        raise ValidationError(f"sequence length {len(seq)} != mechanism periods {mech.p}")
    q11 = q12 = q22 = 0.0
    for k in range(1, mech.p + 1):
        ak = mech.alpha[k - 1]
        if ak == 0.0:
            continue
        _, xi, rho, f_last = prefix_stats(seq, k, t)
        q11 += ak * (k - xi / k)
        q12 += ak * (k * rho + f_last - xi) / k
        q22 += ak * ((k * t - 1.0) * (k - 1.0) / (k * t) - (xi - 2.0 * f_last + 1.0) / k)
    return QCoefficients(q11, q12, q22)


def q_derivative(s: Sequence[int], mech: DropoutMechanism, t: int, x: float) -> float:
    """d/dx of q_s at x, i.e. 2 q12 + 2 q22 x."""
    return q_coeffs(s, mech, t).derivative(x)


def q_coeff_arrays(
    mech: DropoutMechanism, t: int, budget: int = DEFAULT_ENUM_BUDGET
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized coefficients over the full lexicographic enumeration.

    Returns (seqs, q11, q12, q22) with seqs an (N, p) array of 0-based
    labels in lexicographic order.
    """
    p = mech.p
    seqs = enumeration_array(t, p, budget=budget)
    n_seq = seqs.shape[0]
    q11 = np.zeros(n_seq)
    q12 = np.zeros(n_seq)
    q22 = np.zeros(n_seq)
    chunk = max(1, (1 << 22) // (p * t))  # keep the one-hot tensor small
    ks = np.arange(1, p + 1, dtype=float)
    alpha = mech.alpha
    for lo in range(0, n_seq, chunk):
        sub = seqs[lo : lo + chunk]
        onehot = np.zeros((sub.shape[0], p, t))
        rows = np.arange(sub.shape[0])[:, None]
        cols = np.arange(p)[None, :]
        onehot[rows, cols, sub] = 1.0
        counts = np.cumsum(onehot, axis=1)  # f_{s_k, i}
        xi = np.sum(counts**2, axis=2)
        repeats = np.zeros_like(xi)
        repeats[:, 1:] = np.cumsum(sub[:, 1:] == sub[:, :-1], axis=1)
        f_last = np.take_along_axis(counts, sub[:, :, None], axis=2)[:, :, 0]
        per_k11 = ks - xi / ks
        per_k12 = (ks * repeats + f_last - xi) / ks
        per_k22 = (ks * t - 1.0) * (ks - 1.0) / (ks * t) - (xi - 2.0 * f_last + 1.0) / ks
        q11[lo : lo + chunk] = per_k11 @ alpha
        q12[lo : lo + chunk] = per_k12 @ alpha
        q22[lo : lo + chunk] = per_k22 @ alpha
    return seqs, q11, q12, q22


@dataclass(frozen=True)
class OptimalityCertificate:
    """Equilibrium (x*, y*) with the support of weight-optimal designs."""

    x_star: float
    y_star: float
    support: tuple[SequenceTuple, ...]
    regime: str
    t: int
    mechanism: DropoutMechanism
    blocks: tuple[SymmetricBlock, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star,
            "y_star": self.y_star,
            "regime": self.regime,
            "t": self.t,
            "support": [format_sequence(s, self.t) for s in self.support],
            "mechanism": self.mechanism.to_dict(),
        }


def _support_blocks(support: Sequence[SequenceTuple], t: int) -> tuple[SymmetricBlock, ...]:
    return tuple(group_into_blocks(support, t))


def _h_values(q11: np.ndarray, q12: np.ndarray, q22: np.ndarray, x: float) -> np.ndarray:
    return q11 + 2.0 * q12 * x + q22 * x * x


def _golden_section(fun, lo: float, hi: float, tol: float) -> float:
    """Minimize a strictly quasiconvex function on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


def solve_minimax(
    mech: DropoutMechanism,
    t: int,
    budget: int = DEFAULT_ENUM_BUDGET,
    tol_support: Optional[float] = None,
) -> OptimalityCertificate:
    """Numeric equilibrium over the full sequence enumeration.

    Minimizes h(x) = max_s q_s(x) by golden-section search, then polishes
    the minimizer with exact vertex/crossing candidates from the active set.
    The support collects every sequence within ``tol_support`` of the peak.
    """
    seqs, q11, q12, q22 = q_coeff_arrays(mech, t, budget=budget)

    if np.max(q22) <= 0.0:
        # No curvature anywhere: all mass drops after one period.
        y_star = float(np.max(q11))
        keep = np.flatnonzero(q11 >= y_star - 1e-12)
        support = tuple(tuple(int(v) + 1 for v in seqs[i]) for i in keep)
        return OptimalityCertificate(
            0.0, y_star, support, REGIME_NUMERIC, t, mech, _support_blocks(support, t)
        )

    pos = q22 > 0
    x_max = 2.0 + float(np.max(np.abs(q12[pos]) / q22[pos]))

    def h(x: float) -> float:
        return float(np.max(_h_values(q11, q12, q22, x)))

    x_hat = _golden_section(h, -x_max, x_max, tol=1e-6 * max(1.0, x_max))
    width = 2e-6 * max(1.0, x_max)
    x_hat = _golden_section(
        h, x_hat - width, x_hat + width, tol=1e-15 * max(1.0, abs(x_hat))
    )
    y_hat = h(x_hat)

    # Polish: the true minimizer is either a vertex of an active parabola or
    # a crossing of two active parabolas with slopes of opposite sign.  The
    # golden-section point sits in a plateau of width ~sqrt(eps), so analytic
    # candidates matching its value within float noise are preferred.
    vals = _h_values(q11, q12, q22, x_hat)
    act_tol = 1e-6 * max(1.0, abs(y_hat))
    active = np.flatnonzero(vals >= y_hat - act_tol)
    slopes = 2.0 * q12[active] + 2.0 * q22[active] * x_hat
    order = np.argsort(slopes)
    neg_side = active[order[:16]]
    pos_side = active[order[-16:]]
    candidates: list[float] = []
    for i in active if len(active) <= 4096 else np.concatenate([neg_side, pos_side]):
        if q22[i] > 0:
            candidates.append(float(-q12[i] / q22[i]))
    for i in neg_side:
        for j in pos_side:
            if i == j:
                continue
            a = q22[i] - q22[j]
            b = 2.0 * (q12[i] - q12[j])
            c = q11[i] - q11[j]
            if abs(a) < 1e-15:
                if abs(b) > 1e-15:
                    candidates.append(float(-c / b))
                continue
            disc = b * b - 4.0 * a * c
            if disc < 0:
                continue
            root = np.sqrt(disc)
            candidates.append(float((-b + root) / (2.0 * a)))
            candidates.append(float((-b - root) / (2.0 * a)))
    candidates = sorted(x for x in set(candidates) if -x_max <= x <= x_max)
    cand_vals = [h(x) for x in candidates]
    floor = min([y_hat] + cand_vals)
    snap = 32.0 * np.finfo(float).eps * max(1.0, abs(floor))
    close = [
        (y, abs(x - x_hat), x) for x, y in zip(candidates, cand_vals) if y <= floor + snap
    ]
    if close:
        # prefer the analytic point: exact where value comparison is flat
        _, _, best_x = min(close)
        best_y = min(y_hat, h(best_x))
    else:
        best_x, best_y = x_hat, y_hat

    if tol_support is None:
        tol_support = 1e-9 * max(1.0, abs(best_y))
    vals = _h_values(q11, q12, q22, best_x)
    keep = np.flatnonzero(vals >= best_y - tol_support)
    support = tuple(tuple(int(v) + 1 for v in seqs[i]) for i in keep)

    regime = REGIME_NUMERIC
    closed = closed_form(mech, t)
    if (
        closed is not None
        and abs(closed.x_star - best_x) <= 1e-9
        and abs(closed.y_star - best_y) <= 1e-9 * max(1.0, abs(best_y))
        and set(closed.support) == set(support)
    ):
        regime = closed.regime

    return OptimalityCertificate(
        float(best_x), float(best_y), support, regime, t, mech, _support_blocks(support, t)
    )


# -- closed forms ---------------------------------------------------------------


def _distinct_run_sequence(p: int) -> SequenceTuple:
    """Representative of the all-distinct block (1, 2, ..., p)."""
    return tuple(range(1, p + 1))


def _repeat_last_sequence(p: int) -> SequenceTuple:
    """Representative of the distinct-then-repeat block (1, ..., p-1, p-1)."""
    return tuple(range(1, p)) + (p - 1,)


def _balanced_support(mech: DropoutMechanism, t: int) -> list[SequenceTuple]:
    """Sequences whose every prefix of length >= m has counts within 1.

    Depth-first generation in lexicographic order; prefixes shorter than m
    are unconstrained.
    """
    p, m = mech.p, mech.m
    out: list[SequenceTuple] = []
    counts = [0] * t

    def descend(k: int, prefix: list[int]) -> None:
        if k == p:
            out.append(tuple(prefix))
            return
        for label in range(1, t + 1):
            counts[label - 1] += 1
            depth = k + 1
            if depth < m or max(counts) - min(counts) <= 1:
                prefix.append(label)
                descend(depth, prefix)
                prefix.pop()
            counts[label - 1] -= 1

    descend(0, [])
    return out


def closed_form(mech: DropoutMechanism, t: int) -> Optional[OptimalityCertificate]:
    """Certificate from one of the three closed-form regimes, if any applies.

    Returns None when no regime precondition holds; that is a value, not an
    error.  Regime tags:

    * ``closed_form_i``: equilibrium at x* = 0 with balanced-count support;
    * ``closed_form_ii``: x* = 1/(p-1), support = repeat-last + all-distinct
      blocks (boundary variant: repeat-last only);
    * ``closed_form_iii``: x* at the vertex of the repeat-last quadratic.
    """
    p, m = mech.p, mech.m
    alpha = mech.alpha

    if m > t:
        z = [(k - 1) // t for k in range(1, p + 1)]
        r = [(k - 1) % t + 1 for k in range(1, p + 1)]
        crit = sum(
            alpha[k - 1] * (k * (m * t - t * t + 1 - k) + t - r[k - 1] * (t - r[k - 1] + 1))
            for k in range(m, p + 1)
        )
        if crit >= -1e-12 * max(1.0, sum(abs(alpha))):
            y_star = sum(
                alpha[k - 1] * (k * (1.0 - 1.0 / t) - r[k - 1] * (t - r[k - 1]) / (k * t))
                for k in range(m, p + 1)
            )
            support = tuple(_balanced_support(mech, t))
            return OptimalityCertificate(
                0.0, float(y_star), support, REGIME_I, t, mech, _support_blocks(support, t)
            )

    # Regimes (ii) and (iii) hinge on where the repeat-last quadratic has its
    # vertex x0: at or left of the kink 1/(p-1) the kink is the equilibrium
    # and the all-distinct block joins the support; inside (1/(p-1), 1/(p-2))
    # the vertex itself is the equilibrium and the support is repeat-last only.
    if p - 1 <= t and p >= 2:
        re_seq = _repeat_last_sequence(p)
        coeffs = q_coeffs(re_seq, mech, t)
        if coeffs.q22 > 0.0:
            x0 = -coeffs.q12 / coeffs.q22
            kink = 1.0 / (p - 1)
            boundary = abs(x0 - kink) <= 1e-12 * max(1.0, kink)
            if p <= t and (x0 <= kink or boundary):
                y_star = sum(
                    alpha[k - 1]
                    * (k - 1)
                    * (1.0 - (2.0 * p - 1.0 - k + 1.0 / t) / (k * (p - 1.0) ** 2))
                    for k in range(m, p + 1)
                )
                re_block = group_into_blocks([re_seq], t)[0]
                members: list[SequenceTuple] = list(re_block.members())
                regime = REGIME_II_BOUNDARY if boundary else REGIME_II
                if not boundary:
                    di_block = group_into_blocks([_distinct_run_sequence(p)], t)[0]
                    members += di_block.members()
                support = tuple(sorted(members))
                return OptimalityCertificate(
                    float(kink),
                    float(y_star),
                    support,
                    regime,
                    t,
                    mech,
                    _support_blocks(support, t),
                )
            if p >= 3 and kink < x0 < 1.0 / (p - 2):
                support = tuple(sorted(group_into_blocks([re_seq], t)[0].members()))
                return OptimalityCertificate(
                    float(x0),
                    float(coeffs.value(x0)),
                    support,
                    REGIME_III,
                    t,
                    mech,
                    _support_blocks(support, t),
                )

    return None
