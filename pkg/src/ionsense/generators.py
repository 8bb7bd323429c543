"""Vectorized generators of the dissipative dynamics.

Column-stacking convention throughout: ``vec(rho) = rho.flatten(order='F')``,
so ``vec(A rho B) = kron(B.T, A) vec(rho)``.  Three generators are built from
the model operators: the full Lindblad generator, the no-jump generator in
which each *monitored* photon channel loses its recycling term in proportion
to the detection efficiency, and the two-sided generator whose left and right
Hamiltonians carry different values of the estimation parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import DegenerateKernel, InvalidEfficiency
from .model import E, ModelOperators, ModelParams, build_model
from .numerics import SpectralForm, eig_general, null_space_trace_one

VECTORIZATION = "column"


def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).flatten(order="F")


def devectorize(v: np.ndarray) -> np.ndarray:
    d = round(np.sqrt(v.size))
    return np.asarray(v, dtype=complex).reshape((d, d), order="F")


def trace_functional(dim: int) -> np.ndarray:
    """Row vector t such that t @ vec(rho) = Tr(rho)."""
    return vectorize(np.eye(dim))


@dataclass(frozen=True)
class Superoperator:
    """A dense superoperator matrix with its construction kind."""

    matrix: np.ndarray
    kind: str  # 'lindblad' | 'nojump' | 'twosided'
    convention: str = VECTORIZATION

    @property
    def dim(self) -> int:
        """Hilbert-space dimension d (matrix is d^2 x d^2)."""
        return round(np.sqrt(self.matrix.shape[0]))

    def spectral(self) -> SpectralForm:
        return eig_general(self.matrix)


@dataclass(frozen=True)
class SteadyStateInfo:
    rho_ss: np.ndarray
    ee_population: float
    detection_rate: float


def _hamiltonian_part(H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye))


def _dissipator(L: np.ndarray, recycling_weight: float = 1.0) -> np.ndarray:
    """kron form of w * L.L^dag - (1/2){L^dag L, .} with recycling weight w."""
    n = L.shape[0]
    eye = np.eye(n)
    LdL = L.conj().T @ L
    out = recycling_weight * np.kron(L.conj(), L)
    out -= 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
    return out


def lindblad_superop(ops: ModelOperators) -> Superoperator:
    """Full master-equation generator -i[H,.] + sum_j D[L_j]."""
    M = _hamiltonian_part(ops.hamiltonian)
    for _, _, L in ops.jump_ops:
        M += _dissipator(L)
    return Superoperator(matrix=M, kind="lindblad")


def nojump_superop(ops: ModelOperators, eta_g: float, eta_u: float) -> Superoperator:
    """Conditional generator between detections.

    Each monitored photon channel keeps only the undetected fraction
    (1 - eta) of its recycling term; the dephasing channel is never monitored
    and enters in full.  At eta_g = eta_u = 0 this equals the Lindblad
    generator entrywise.
    """
    etas = {"g": eta_g, "u": eta_u}
    for label, eta in etas.items():
        if not 0.0 <= eta <= 1.0:
            raise InvalidEfficiency(f"eta_{label} = {eta} outside [0, 1]")
    M = _hamiltonian_part(ops.hamiltonian)
    for label, _, L in ops.jump_ops:
        M += _dissipator(L, recycling_weight=1.0 - etas.get(label, 0.0))
    return Superoperator(matrix=M, kind="nojump")


def twosided_superop(p: ModelParams, theta1: float, theta2: float) -> Superoperator:
    """Generator of the two-sided evolution with H(theta1) acting from the
    left and H(theta2) from the right; dissipators are parameter-independent.

    At theta1 = theta2 = p.omega_d this reduces to the Lindblad generator.
    """
    n = p.level_count
    eye = np.eye(n)
    H1 = build_model(p.with_omega_d(theta1)).hamiltonian
    H2 = build_model(p.with_omega_d(theta2)).hamiltonian
    M = -1j * np.kron(eye, H1) + 1j * np.kron(H2.T, eye)
    for _, _, L in build_model(p).jump_ops:
        M += _dissipator(L)
    return Superoperator(matrix=M, kind="twosided")


def steady_state(L: Superoperator, *, eta_g: float = 0.0,
                 gamma_g: float = 0.0) -> SteadyStateInfo:
    """Trace-one kernel element of a Lindblad generator.

    ``detection_rate`` is filled as eta_g * gamma_g * rho_ss^(ee) with the
    supplied detection parameters.
    """
    if L.kind != "lindblad":
        raise ValueError(f"steady_state expects a lindblad generator, got {L.kind!r}")
    d = L.dim
    v = null_space_trace_one(L.matrix, trace_functional(d))
    rho = devectorize(v)
    skew = np.max(np.abs(rho - rho.conj().T))
    if skew > 1e-9:
        raise DegenerateKernel(
            f"kernel element is not Hermitian (skew {skew:.2e}); "
            "generator is not a proper Lindbladian")
    rho = 0.5 * (rho + rho.conj().T)
    if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
        raise DegenerateKernel("stationary state has a negative population")
    ee = float(rho[E, E].real)
    return SteadyStateInfo(rho_ss=rho, ee_population=ee,
                           detection_rate=eta_g * gamma_g * ee)


@dataclass(frozen=True)
class NojumpMode:
    """One eigenvalue of the no-jump generator, optionally with its
    derivative with respect to the estimation parameter."""

    eigenvalue: complex
    d_theta: complex | None = None


def match_modes(ref: SpectralForm, other: SpectralForm) -> np.ndarray:
    """Index array perm with other.eigenvalues[perm[j]] the continuation of
    ref mode j, matched by maximal right-eigenvector overlap."""
    overlap = np.abs(ref.right.conj().T @ other.right)
    rows, cols = scipy.optimize.linear_sum_assignment(-overlap)
    perm = np.empty(ref.dim, dtype=int)
    perm[rows] = cols
    return perm


def spectrum_nojump(L0: Superoperator, *, params: ModelParams | None = None,
                    eta_u: float = 0.0, fd_step: float = 1e-3) -> list[NojumpMode]:
    """Eigenvalues of the no-jump generator, sorted by ascending |Re|.

    When ``params`` is given, each eigenvalue also carries its central
    difference derivative with respect to omega_d, taken at
    omega_d * (1 +/- fd_step) with branches matched across the perturbation
    by eigenvector overlap (sort order would scramble crossing branches).
    """
    if L0.kind != "nojump":
        raise ValueError(f"spectrum_nojump expects a nojump generator, got {L0.kind!r}")
    S = L0.spectral()
    derivs: np.ndarray | None = None
    if params is not None:
        theta = params.omega_d
        h = theta * fd_step
        forms = []
        for th in (theta + h, theta - h):
            ops = build_model(params.with_omega_d(th))
            forms.append(nojump_superop(ops, params.eta_g, eta_u).spectral())
        perm_p = match_modes(S, forms[0])
        perm_m = match_modes(S, forms[1])
        derivs = (forms[0].eigenvalues[perm_p]
                  - forms[1].eigenvalues[perm_m]) / (2 * h)
    order = np.argsort(np.abs(S.eigenvalues.real), kind="stable")
    return [NojumpMode(eigenvalue=S.eigenvalues[j],
                       d_theta=None if derivs is None else derivs[j])
            for j in order]
