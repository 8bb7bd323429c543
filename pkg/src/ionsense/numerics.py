"""Dense complex linear algebra used throughout the package.

Only three primitives are needed: the general (non-Hermitian) eigenproblem,
fast evaluation of ``exp(M*tau) @ v`` at many ``tau`` through the spectral
form, and the trace-normalized kernel element of a singular generator.
Matrices here are small (<= 16x16 in practice), so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateKernel, DimensionMismatch, NonDiagonalizable

# Smallest acceptable value of |<l_j|r_j>| / (||l_j|| ||r_j||); below this the
# matrix is treated as sitting at an exceptional point.
DIAG_RTOL = 1e-8


@dataclass(frozen=True)
class SpectralForm:
    """Eigendecomposition M = R diag(lam) L with biorthogonal left/right vectors.

    ``right[:, j]`` is the right eigenvector r_j, ``left[:, j]`` the left
    eigenvector l_j (so that ``l_j^dag M = lam_j l_j^dag``), and ``norms[j]``
    stores <l_j|r_j>.  With the construction used here (left vectors from the
    inverse of the right-vector matrix) the norms are exactly 1, but they are
    kept as data so the reconstruction formula stays explicit.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    norms: np.ndarray
    # <l_j| v> / <l_j|r_j> for all j, precomputed as a matrix acting on v.
    _project: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.right.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return sum_j lam_j r_j l_j^dag / <l_j|r_j>."""
        return (self.right * self.eigenvalues) @ self._project

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """Expansion coefficients c_j of v in the right-eigenvector basis."""
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector of length {v.shape} incompatible with dim {self.dim}")
        return self._project @ v


def eig_general(M: np.ndarray, rtol: float = DIAG_RTOL) -> SpectralForm:
    """Eigendecompose a general complex square matrix.

    Left eigenvectors are obtained from the inverse of the right-eigenvector
    matrix, which enforces biorthogonality exactly.  Raises
    ``NonDiagonalizable`` when the worst eigenvector pair has
    |<l|r>|/(||l|| ||r||) below ``rtol`` (exceptional point detector).
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")

    lam, R = scipy.linalg.eig(M)
    try:
        P = np.linalg.inv(R)  # row j of P is l_j^dag, normalized to <l_j|r_j>=1
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizable("right-eigenvector matrix is singular") from exc

    # scipy returns unit-norm right vectors, so the conditioning measure
    # |<l|r>|/(||l|| ||r||) reduces to 1/||row_j(P)||.
    cond = 1.0 / (np.linalg.norm(P, axis=1) * np.linalg.norm(R, axis=0))
    if np.min(cond) < rtol:
        raise NonDiagonalizable(
            f"worst eigenvector pair has biorthogonality measure "
            f"{np.min(cond):.3e} < {rtol:.1e}")

    left = P.conj().T
    norms = np.einsum("ij,ji->i", P, R)
    return SpectralForm(eigenvalues=lam, right=R, left=left, norms=norms,
                        _project=P)


def expm_action(S: SpectralForm, v: np.ndarray, tau: float) -> np.ndarray:
    """Evaluate exp(M*tau) @ v through the spectral form of M."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    c = S.coefficients(v)
    return S.right @ (np.exp(S.eigenvalues * tau) * c)


def expm_action_many(S: SpectralForm, v: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Evaluate exp(M*tau) @ v for an array of taus; returns shape (len(taus), dim)."""
    c = S.coefficients(v)
    taus = np.asarray(taus, dtype=float)
    return np.exp(np.outer(taus, S.eigenvalues)) * c @ S.right.T


def null_space_trace_one(L: np.ndarray, trace_functional: np.ndarray,
                         rtol: float = 1e-10) -> np.ndarray:
    """Return the kernel element v of L normalized to trace_functional @ v = 1.

    The kernel is located by SVD; ``DegenerateKernel`` is raised when the two
    smallest singular values do not separate a one-dimensional kernel within
    ``rtol`` of the largest singular value.
    """
    L = np.asarray(L, dtype=complex)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {L.shape}")
    f = np.asarray(trace_functional, dtype=complex)
    if f.shape != (L.shape[0],):
        raise DimensionMismatch("trace functional length does not match matrix")

    _, s, Vh = np.linalg.svd(L)
    scale = s[0] if s[0] > 0 else 1.0
    if s[-1] > rtol * scale:
        raise DegenerateKernel(
            f"no kernel: smallest singular value {s[-1]:.3e} above tolerance")
    if L.shape[0] > 1 and s[-2] < rtol * scale:
        raise DegenerateKernel(
            f"kernel dimension > 1: second singular value {s[-2]:.3e} "
            f"below tolerance")

    v = Vh[-1].conj()
    t = f @ v
    if abs(t) < rtol:
        raise DegenerateKernel("trace functional vanishes on the kernel")
    return v / t
