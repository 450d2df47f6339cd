"""Whitening, regularized correlation and null-space projector construction.

The chain implemented here turns a batch of feature columns into the
symmetric idempotent projector used for weight editing:

    raw features -> whiten -> M = Z Z^T + ridge I -> eigendecompose
                 -> select low-energy eigenvectors -> P = (P_hat + P_hat^T)/2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nulltrack import _jacobi
from nulltrack.errors import ValidationError
from nulltrack.tensorio import FeatureMap

# Cyclic Jacobi convergence targets (relative off-diagonal mass, sweep cap).
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 64

# Above this size the LAPACK path is used; the Jacobi kernel is exact enough
# at any size but its O(C^3)-per-sweep cost misses the projector time budget
# for large C.
JACOBI_MAX_DIM = 32

SYMMETRY_ATOL = 1e-9
MAX_EIG_DIM = 4096


@dataclass(frozen=True)
class ThresholdPolicy:
    """Selects "low-energy" eigenvalues for the null-space basis.

    An eigenvalue is low-energy iff it is <= max(eps_rel * lambda_max, eps_abs).
    The relative term is scale-invariant under feature rescaling; the absolute
    floor handles the all-zero correlation case.
    """

    eps_rel: float = 1e-2
    eps_abs: float = 1e-10

    def __post_init__(self):
        if self.eps_rel < 0 or self.eps_abs < 0:
            raise ValidationError("threshold policy requires nonnegative eps values")

    def cutoff(self, eigenvalues: np.ndarray) -> float:
        lam_max = float(eigenvalues[0]) if len(eigenvalues) else 0.0
        return max(self.eps_rel * max(lam_max, 0.0), self.eps_abs)


@dataclass(frozen=True)
class WhitenedMatrix:
    """Per-channel standardized feature columns.

    ``z`` is C x N with each non-degenerate row at zero mean and unit
    population variance; rows whose source variance was zero are all-zero and
    flagged in ``degenerate``.
    """

    z: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray

    @property
    def channels(self) -> int:
        return self.z.shape[0]

    @property
    def samples(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class SymmetricMatrix:
    """A C x C matrix symmetric by construction, plus the ridge applied."""

    m: np.ndarray
    ridge: float


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvalues in descending order with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


@dataclass(frozen=True)
class Projector:
    """Symmetric idempotent matrix spanning the selected low-energy subspace."""

    p: np.ndarray
    retained_rank: int

    @property
    def dim(self) -> int:
        return self.p.shape[0]


def whiten_matrix(raw: np.ndarray) -> WhitenedMatrix:
    """Standardize each row of a C x N matrix to zero mean, unit variance.

    Uses the population (1/N) variance. Zero-variance rows become all-zero
    and are flagged degenerate rather than raising.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValidationError(f"expected a C x N matrix, got shape {raw.shape}")
    if raw.shape[1] < 2:
        raise ValidationError("whitening needs at least 2 spatial samples")
    mean = raw.mean(axis=1)
    centered = raw - mean[:, None]
    std = np.sqrt(np.mean(centered**2, axis=1))
    degenerate = std == 0.0
    safe = np.where(degenerate, 1.0, std)
    z = centered / safe[:, None]
    z[degenerate] = 0.0
    return WhitenedMatrix(z=z, mean=mean, std=std, degenerate=degenerate)


def whiten(fm: FeatureMap) -> WhitenedMatrix:
    """Whiten a feature map's channels over its H*W spatial samples."""
    return whiten_matrix(fm.columns())


def default_ridge(zm: WhitenedMatrix, scale: float = 1e-4) -> float:
    """Ridge proportional to the average channel energy of Z Z^T."""
    gram_trace = float(np.sum(zm.z * zm.z))
    return scale * gram_trace / zm.channels


def regularized_correlation(zm: WhitenedMatrix, ridge: float) -> SymmetricMatrix:
    """M = Z Z^T + ridge I, symmetrized against floating-point drift."""
    if ridge < 0:
        raise ValidationError(f"ridge must be nonnegative, got {ridge}")
    gram = zm.z @ zm.z.T
    m = 0.5 * (gram + gram.T)
    m[np.diag_indices_from(m)] += ridge
    return SymmetricMatrix(m=m, ridge=float(ridge))


def _as_symmetric_array(m) -> np.ndarray:
    arr = m.m if isinstance(m, SymmetricMatrix) else np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] > MAX_EIG_DIM:
        raise ValidationError(f"matrix dimension {arr.shape[0]} exceeds {MAX_EIG_DIM}")
    if np.max(np.abs(arr - arr.T)) > SYMMETRY_ATOL:
        raise ValidationError("matrix is not symmetric within 1e-9")
    return np.asarray(arr, dtype=np.float64)


def sym_eig(m, method: str = "auto") -> EigenBasis:
    """Eigendecompose a symmetric matrix; eigenpairs sorted descending.

    ``method`` is "jacobi", "lapack" or "auto" (Jacobi for C <= 32, LAPACK
    above, where Jacobi's per-sweep O(C^3) cost would dominate).
    """
    arr = _as_symmetric_array(m)
    n = arr.shape[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        a = arr.copy()
        v = np.eye(n)
        tol = JACOBI_TOL * np.linalg.norm(arr)
        sweeps = _jacobi.jacobi_cyclic(a, v, tol, JACOBI_MAX_SWEEPS)
        lam = np.diag(a).copy()
    elif method == "lapack":
        lam, v = np.linalg.eigh(arr)
        sweeps = 0
    else:
        raise ValidationError(f"unknown eigensolver method {method!r}")
    order = np.argsort(-lam, kind="stable")
    return EigenBasis(eigenvalues=lam[order], eigenvectors=v[:, order], sweeps=sweeps)


def nullspace_projector(m, policy: ThresholdPolicy = ThresholdPolicy(), method: str = "auto") -> Projector:
    """Build the symmetrized projector onto the low-energy eigenvector span.

    Selects eigenvectors whose eigenvalue falls at or below the policy cutoff,
    forms P_hat = U U^T and stores P = (P_hat + P_hat^T)/2. With nothing
    selected the projector is the zero matrix with retained_rank 0.
    """
    basis = sym_eig(m, method=method)
    cutoff = policy.cutoff(basis.eigenvalues)
    selected = basis.eigenvalues <= cutoff
    rank = int(np.count_nonzero(selected))
    n = basis.eigenvectors.shape[0]
    if rank == 0:
        return Projector(p=np.zeros((n, n)), retained_rank=0)
    u = basis.eigenvectors[:, selected]
    p_hat = u @ u.T
    p = 0.5 * (p_hat + p_hat.T)
    return Projector(p=p, retained_rank=rank)


def project(proj: Projector, delta: np.ndarray) -> np.ndarray:
    """Apply the projector to a length-C weight vector."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (proj.dim,):
        raise ValidationError(
            f"weight vector has shape {delta.shape}, projector expects ({proj.dim},)"
        )
    return proj.p @ delta
