"""Information matrices for direct treatment effects.

Realized matrices condition on a vector of stay lengths: the rows a subject
actually contributes are projected against the span of period and subject
effects, and the treatment/carryover components of that projection form a
2x2 block system whose Schur complement is the information matrix.  The
surrogate matrix replaces the realized projection kernel by the mechanism's
averaged kernel V, which turns the components into fixed sandwiches of V.

The realized path is vectorized over batches of stay-length vectors: the
projection onto the orthogonal complement of [periods | subjects] is
evaluated as within-subject centering followed by elimination of the
centered period columns, which only ever inverts p x p Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import matrix_kernels as mk
from .dropout_model import DropoutMechanism
from .errors import ValidationError
from .sequences import SequenceTuple, carryover_incidence, incidence, validate_sequence

# Eigenvalues at or below this relative threshold count as structural zeros.
EIG_ZERO_REL = 1e-9

CRITERIA = ("A", "D", "E", "T")


@dataclass(frozen=True)
class DesignMatrices:
    """Stacked and per-subject incidence matrices of an n-subject design."""

    p: int
    t: int
    n: int
    subject_sequences: tuple[SequenceTuple, ...]
    T_blocks: np.ndarray  # (n, p, t)
    F_blocks: np.ndarray  # (n, p, t)

    @property
    def T(self) -> np.ndarray:
        return self.T_blocks.reshape(self.n * self.p, self.t)

    @property
    def F(self) -> np.ndarray:
        return self.F_blocks.reshape(self.n * self.p, self.t)


def design_matrices(sequences: Iterable[Sequence[int]], t: int) -> DesignMatrices:
    """Build incidence blocks for an explicit subject-by-subject listing."""
    seqs = tuple(validate_sequence(s, t) for s in sequences)
    if not seqs:
        raise ValidationError("design must contain at least one subject")
    p = len(seqs[0])
    if any(len(s) != p for s in seqs):
        raise ValidationError("all subject sequences must have equal length")
    T = np.stack([incidence(s, t) for s in seqs])
    F = np.stack([carryover_incidence(s, t) for s in seqs])
    return DesignMatrices(p=p, t=t, n=len(seqs), subject_sequences=seqs, T_blocks=T, F_blocks=F)


@dataclass(frozen=True)
class InfoMatrix:
    """Component blocks, Schur complement and its ascending eigenvalues."""

    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray
    schur: np.ndarray
    eigenvalues: np.ndarray


def _info_from_components(c11: np.ndarray, c12: np.ndarray, c22: np.ndarray) -> InfoMatrix:
    schur = mk.symmetrize(c11 - c12 @ mk.pinv_sym(c22) @ c12.T)
    eigs = np.linalg.eigvalsh(schur)
    return InfoMatrix(c11=c11, c12=c12, c22=c22, schur=schur, eigenvalues=eigs)


# -- realized information ----------------------------------------------------------


def _masks(lengths: np.ndarray, p: int) -> np.ndarray:
    """(batch, n, p) 0/1 mask of contributed rows: first l_i per subject."""
    return (np.arange(p)[None, None, :] < lengths[:, :, None]).astype(float)


def _centered_blocks(blocks: np.ndarray, mask: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Mask rows and subtract per-subject column means over contributed rows."""
    masked = mask[:, :, :, None] * blocks[None, :, :, :]
    means = masked.sum(axis=2) / lengths[:, :, None]
    return (blocks[None] - means[:, :, None, :]) * mask[:, :, :, None]


def realized_components_batch(
    dm: DesignMatrices, lengths: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Component blocks (C11, C12, C22), stacked over stay-length vectors.

    ``lengths`` has shape (batch, n) with entries in 1..p.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.ndim == 1:
        lengths = lengths[None, :]
    if lengths.shape[1] != dm.n or lengths.min() < 1 or lengths.max() > dm.p:
        raise ValidationError("stay lengths must be an (batch, n) array with entries in 1..p")
    mask = _masks(lengths, dm.p)
    lf = lengths.astype(float)

    Tc = _centered_blocks(dm.T_blocks, mask, lf)
    Fc = _centered_blocks(dm.F_blocks, mask, lf)

    # Gram of the centered period columns: sum_i (diag(m_i) - m_i m_i' / l_i)
    batch = mask.shape[0]
    gzz = np.zeros((batch, dm.p, dm.p))
    idx = np.arange(dm.p)
    gzz[:, idx, idx] = mask.sum(axis=1)
    gzz -= np.einsum("bip,biq,bi->bpq", mask, mask, 1.0 / lf)
    gzt = Tc.sum(axis=1)  # (batch, p, t): centered blocks summed over subjects
    gzf = Fc.sum(axis=1)

    gtt = np.einsum("bipu,bipv->buv", Tc, Tc)
    gtf = np.einsum("bipu,bipv->buv", Tc, Fc)
    gff = np.einsum("bipu,bipv->buv", Fc, Fc)

    gzz_inv = mk.pinv_sym_batch(gzz)
    c11 = gtt - np.einsum("bpu,bpq,bqv->buv", gzt, gzz_inv, gzt)
    c12 = gtf - np.einsum("bpu,bpq,bqv->buv", gzt, gzz_inv, gzf)
    c22 = gff - np.einsum("bpu,bpq,bqv->buv", gzf, gzz_inv, gzf)
    return c11, c12, c22


def schur_batch(c11: np.ndarray, c12: np.ndarray, c22: np.ndarray) -> np.ndarray:
    """Stacked Schur complements C11 - C12 C22^+ C21."""
    c22_inv = mk.pinv_sym_batch(c22)
    out = c11 - np.einsum("buv,bvw,bxw->bux", c12, c22_inv, c12)
    return (out + np.swapaxes(out, -1, -2)) / 2.0


def eigenvalues_batch(schur: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of stacked symmetric matrices."""
    return np.linalg.eigvalsh(schur)


def realized_info(dm: DesignMatrices, lengths: Sequence[int]) -> InfoMatrix:
    """Information matrix for one realized vector of stay lengths."""
    c11, c12, c22 = realized_components_batch(dm, np.asarray(lengths)[None, :])
    return _info_from_components(c11[0], c12[0], c22[0])


def realized_projection(lengths: Sequence[int], p: int) -> np.ndarray:
    """The np x np realized projection kernel, by direct projection.

    Scatters the orthogonal-complement projector of the contributed
    [periods | subjects] columns back into the full row grid.  Reference
    implementation used by tests and small-scale callers.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    n = lengths.shape[0]
    if lengths.min() < 1 or lengths.max() > p:
        raise ValidationError("stay lengths must lie in 1..p")
    keep = (np.arange(p)[None, :] < lengths[:, None]).reshape(n * p)
    z = np.tile(np.eye(p), (n, 1))
    u = np.repeat(np.eye(n), p, axis=0)
    w = np.hstack([z, u])[keep]
    proj = mk.proj_complement(w)
    out = np.zeros((n * p, n * p))
    out[np.ix_(keep, keep)] = proj
    return out


# -- surrogate information -------------------------------------------------------


def surrogate_info(dm: DesignMatrices, mech: DropoutMechanism) -> InfoMatrix:
    """Information matrix built from the averaged projection kernel V."""
    if dm.p != mech.p or dm.n != mech.n:
        raise ValidationError(
            f"design is {dm.n} subjects x {dm.p} periods but mechanism has "
            f"n={mech.n}, p={mech.p}"
        )
    v = mech.V
    T, F = dm.T, dm.F
    c11 = mk.symmetrize(T.T @ v @ T)
    c12 = T.T @ v @ F
    c22 = mk.symmetrize(F.T @ v @ F)
    return _info_from_components(c11, c12, c22)


# -- check matrices -----------------------------------------------------------------


def check_matrices(
    s: Sequence[int], mech: DropoutMechanism, t: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sequence check blocks (C11, C12, C22).

    Each block is ``X'(A-B)Y + (X Bt)' B (Y Bt)`` for the incidence pair
    (X, Y); summing them over a design reproduces the expected component
    blocks plus a rank-correction in the period-average direction.
    """
    seq = validate_sequence(s, t)
    if len(seq) != mech.p:
        raise ValidationError(f"sequence length {len(seq)} != mechanism periods {mech.p}")
    bt = mk.centering(t)
    T = incidence(seq, t)
    F = carryover_incidence(seq, t)
    Th, Fh = T @ bt, F @ bt
    amb = mech.A - mech.B
    c11 = T.T @ amb @ T + Th.T @ mech.B @ Th
    c12 = T.T @ amb @ F + Th.T @ mech.B @ Fh
    c22 = F.T @ amb @ F + Fh.T @ mech.B @ Fh
    return mk.symmetrize(c11), c12, mk.symmetrize(c22)


# -- criteria -------------------------------------------------------------------------


def criterion_values_from_eigs(eigs: np.ndarray, which: str, n: int) -> np.ndarray:
    """Criterion values for stacked ascending eigenvalue rows.

    The smallest eigenvalue is the structural zero and is excluded.  A
    design whose second-smallest eigenvalue is at (numerical) zero is
    disconnected: A, D and E report 0 there, T is unaffected.
    """
    which = which.upper()
    if which not in CRITERIA:
        raise ValidationError(f"criterion must be one of {CRITERIA}, got {which!r}")
    eigs = np.atleast_2d(np.asarray(eigs, dtype=float))
    t = eigs.shape[1]
    lam_max = eigs[:, -1]
    tail = eigs[:, 1:]  # lam_2 .. lam_t
    if which == "T":
        return tail.sum(axis=1) / (n * (t - 1))
    connected = eigs[:, 1] > EIG_ZERO_REL * np.maximum(1.0, lam_max)
    out = np.zeros(eigs.shape[0])
    if np.any(connected):
        sub = tail[connected]
        if which == "A":
            out[connected] = (t - 1) / (n * np.sum(1.0 / sub, axis=1))
        elif which == "D":
            out[connected] = np.exp(np.sum(np.log(sub), axis=1) / (t - 1)) / n
        elif which == "E":
            out[connected] = sub[:, 0] / n
    return out


def criterion(info: InfoMatrix, which: str, n: int) -> float:
    """One of the A/D/E/T criterion values of an information matrix."""
    return float(criterion_values_from_eigs(info.eigenvalues[None, :], which, n)[0])
