"""Closed-form approximations to the emission statistics.

Covers the two-exponential (bright/dark switching) ansatz and its rates, the
crossover time, the resulting information-rate approximation, non-Hermitian
perturbation theory of the hybridized dark manifold at zero detuning, the
perturbative waiting-time density of the reduced three-level system, and the
algebraic test for the class of conditional states that saturates the joint
system-environment information under photon counting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnsatzInvalid, RegimeViolation, ZeroState
from .generators import lindblad_superop, steady_state
from .model import D, E, ModelOperators, ModelParams, build_model, \
    effective_hamiltonian
from .numerics import eig_general


def bright_manifold_ee(p: ModelParams) -> float:
    """Stationary |e> population of the fluorescent manifold at omega_d = 0.

    With the weak drive switched off, the d level decouples and the full
    generator acquires a second stationary state; the bright-period rate is
    set by the stationary state of the remaining g-e(-u) block, so the d row
    and column are removed before solving.
    """
    ops = build_model(p.with_omega_d(0.0))
    keep = [i for i in range(p.level_count) if i != D]
    H = ops.hamiltonian[np.ix_(keep, keep)]
    jumps = []
    for label, rate, L in ops.jump_ops:
        if label == "D":
            continue
        jumps.append((label, rate, L[np.ix_(keep, keep)]))
    reduced = ModelOperators(hamiltonian=H, jump_ops=tuple(jumps))
    info = steady_state(lindblad_superop(reduced))
    return info.ee_population


@dataclass(frozen=True)
class BlinkingAnsatz:
    """Parameters of the two-exponential waiting-time ansatz.

    gamma1 is the in-bright detection rate, gamma2 the dark-period escape
    rate, p_weight the probability weight of the slow component, and t_cross
    the time at which the two exponential terms exchange dominance.
    """

    gamma1: float
    gamma2: float
    p_weight: float
    t_cross: float


def blinking_rates(p: ModelParams) -> BlinkingAnsatz:
    """Closed-form rates of the intermittent emission pattern.

    gamma1 = eta_g gamma_g rho_ss^(ee)|_{omega_d=0};
    gamma2 = gamma_tot omega_d^2 / omega_e^2;
    p     = gamma_tot^2 omega_d^2 / (4 eta_g omega_e^4).
    The total rate reduces to gamma_g for the three-level variant.
    """
    if p.omega_d <= 0 or p.omega_e <= 0:
        raise AnsatzInvalid("ansatz requires omega_d > 0 and omega_e > 0")
    gamma = p.gamma_total
    gamma1 = p.eta_g * p.gamma_g * bright_manifold_ee(p)
    gamma2 = gamma * p.omega_d**2 / p.omega_e**2
    weight = gamma**2 * p.omega_d**2 / (4 * p.eta_g * p.omega_e**4)
    if gamma1 <= 10 * gamma2 or weight >= 0.5:
        raise AnsatzInvalid(
            f"no timescale separation: gamma1/gamma2 = {gamma1 / gamma2:.2f}, "
            f"p = {weight:.3f}")
    t_cross = np.log((1 - weight) * gamma1 / (weight * gamma2)) / (gamma1 - gamma2)
    return BlinkingAnsatz(gamma1=gamma1, gamma2=gamma2, p_weight=weight,
                          t_cross=t_cross)


def wtd_blinking_ansatz(a: BlinkingAnsatz, tau) -> np.ndarray | float:
    """(1-p) Gamma1 e^{-Gamma1 tau} + p Gamma2 e^{-Gamma2 tau}."""
    tau = np.asarray(tau, dtype=float)
    out = ((1 - a.p_weight) * a.gamma1 * np.exp(-a.gamma1 * tau)
           + a.p_weight * a.gamma2 * np.exp(-a.gamma2 * tau))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BlinkingFiApprox:
    """Long-tail approximation to the information rate and its upper bound
    (the same expression with the crossover damping factor removed)."""

    rate: float
    upper_bound: float


def fi_blinking_approx(p: ModelParams) -> BlinkingFiApprox:
    """Information rate carried by the slow tail of the blinking ansatz:
    2 gamma^2 gamma_g rho_ss^(ee) / omega_e^4 * exp(-2 Gamma2 T_c)."""
    rates = blinking_rates(p)  # validates the regime
    info = steady_state(lindblad_superop(build_model(p)),
                        eta_g=p.eta_g, gamma_g=p.gamma_g)
    bound = (2 * p.gamma_total**2 * p.gamma_g * info.ee_population
             / p.omega_e**4)
    return BlinkingFiApprox(
        rate=bound * np.exp(-2 * rates.gamma2 * rates.t_cross),
        upper_bound=bound)


@dataclass(frozen=True)
class DarkStatePerturbation:
    """Perturbative spectrum of the hybridized dark manifold at zero detuning.

    The weak drive lifts the degeneracy of (|d> +/- |D>)/sqrt(2) at first
    order (+/- omega_u/Omega), producing waiting-time modulations at
    omega_mod; the decay of those modulations enters only at second order
    through the purely imaginary lambda_2nd = -(omega_e^2/2) chi.
    """

    omega_mod: float
    big_omega: float
    lambda1_1: float
    lambda2_1: float
    lambda_2nd: complex
    chi: complex
    gamma_bar_eta: float
    lambda_plus: complex
    lambda_minus: complex
    x: float


def darkstate_perturbation(p: ModelParams) -> DarkStatePerturbation:
    """Evaluate the closed forms of the dark-manifold perturbation theory.

    Requires the resonant configuration (delta_u = 0), a weak probe drive,
    and an underdamped bright manifold (x = 4 Omega / gamma > 1).
    """
    if p.level_count != 4:
        raise RegimeViolation("dark-manifold theory needs the four-level model")
    if p.delta_u != 0.0:
        raise RegimeViolation("dark state exists only at delta_u = 0")
    if p.omega_d >= 0.1 * min(p.omega_e, p.omega_u):
        raise RegimeViolation("perturbative regime needs omega_d << omega_e, omega_u")
    gamma = p.gamma_total
    big_omega = np.hypot(p.omega_e, p.omega_u)
    x = 4 * big_omega / gamma
    if x <= 1:
        raise RegimeViolation(f"x = {x:.3f} <= 1: bright manifold overdamped")
    chi = (2j * gamma - 1j * gamma**3 / (8 * big_omega**2)) \
        / (4 * big_omega**4 + (-1j * gamma / 2)**2 * big_omega**2)
    lambda_2nd = -(p.omega_e**2 / 2) * chi
    root = np.sqrt(complex(1 - x**2))
    lam_p = -1j * (gamma / 4) * (1 + root)
    lam_m = -1j * (gamma / 4) * (1 - root)
    l1 = p.omega_u / big_omega
    return DarkStatePerturbation(
        omega_mod=p.omega_d * 2 * l1,
        big_omega=big_omega,
        lambda1_1=l1, lambda2_1=-l1,
        lambda_2nd=lambda_2nd, chi=chi,
        gamma_bar_eta=p.gamma_g * p.eta_g + p.gamma_u * p.eta_u,
        lambda_plus=lam_p, lambda_minus=lam_m, x=x)


def wprime_exact(p: ModelParams, taus) -> np.ndarray:
    """Exact between-jump density at unit efficiency in both channels:
    (gamma_g eta_g + gamma_u eta_u) |<e| exp(-i H_eff tau) |g>|^2."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    S = eig_general(effective_hamiltonian(p))
    g = np.zeros(p.level_count, dtype=complex)
    g[0] = 1.0
    c = S.coefficients(g)
    amp = np.exp(np.outer(taus, -1j * S.eigenvalues)) @ (c * S.right[1, :])
    gbar_eta = p.gamma_g * p.eta_g + p.gamma_u * p.eta_u
    return gbar_eta * np.abs(amp)**2


def wprime_dark(pt: DarkStatePerturbation, p: ModelParams, tau,
                regime: str) -> np.ndarray | float:
    """Perturbative between-jump density of the resonant system.

    ``regime='short'`` keeps only the bright-manifold interference (valid for
    tau up to a few 1/gamma); ``regime='intermediate'`` keeps the hybridized
    dark manifold, giving the slowly decaying modulation envelope.  Both
    assume the pure-state evolution, i.e. eta_g = eta_u = 1 and no dephasing.
    """
    if not (p.eta_g == 1.0 and p.eta_u == 1.0 and p.gamma_deph == 0.0):
        raise RegimeViolation(
            "between-jump perturbation theory assumes eta_g = eta_u = 1 "
            "and no dephasing")
    taus = np.asarray(tau, dtype=float)
    if regime == "short":
        out = np.zeros(taus.shape, dtype=complex)
        for lam in (pt.lambda_plus, pt.lambda_minus):
            denom = (p.omega_e**2 + p.omega_u**2 + lam**2
                     + (p.omega_d**2 * p.omega_e**2) / lam**2)
            out += lam * p.omega_e * np.exp(-1j * lam * taus) / denom
        vals = pt.gamma_bar_eta * np.abs(out)**2
    elif regime == "intermediate":
        envelope = np.abs(np.exp(-1j * p.omega_d**2 * pt.lambda_2nd * taus))**2
        phase = p.omega_d * pt.lambda1_1 * taus
        inner = (p.omega_e * p.omega_d * p.omega_u / pt.big_omega**3
                 * np.sin(phase)
                 + 0.75 * pt.chi * p.omega_e**3 * p.omega_d**2
                 / pt.big_omega**2 * np.cos(phase))
        vals = pt.gamma_bar_eta * envelope * np.abs(inner)**2
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return float(vals) if vals.ndim == 0 else vals


@dataclass(frozen=True)
class ThreeLevelSpectrum:
    """Perturbative spectrum of the three-level effective Hamiltonian."""

    lambda_d2: complex
    lambda_plus: complex
    lambda_minus: complex
    gamma_bar: float
    x: float


def threelevel_spectrum(p: ModelParams) -> ThreeLevelSpectrum:
    if p.level_count != 3:
        raise RegimeViolation("expected the three-level model")
    x = 4 * p.omega_e / p.gamma_g
    if x >= 1:
        raise RegimeViolation(f"x = {x:.3f} >= 1: overdamped regime required")
    gbar = np.sqrt(p.gamma_g**2 - 16 * p.omega_e**2)
    root = np.sqrt(1 - x**2)
    return ThreeLevelSpectrum(
        lambda_d2=-1j * p.gamma_g * p.omega_d**2 / (2 * p.omega_e**2),
        lambda_plus=-1j * (p.gamma_g / 4) * (1 + root),
        lambda_minus=-1j * (p.gamma_g / 4) * (1 - root),
        gamma_bar=gbar, x=x)


def wtd3ls_perturbative(p: ModelParams, tau) -> np.ndarray | float:
    """Leading-order waiting-time density of the three-level system.

    Three contributions: the bare fluorescent doublet, the slow dark-period
    exponential, and their interference.  The literature form of the first
    and third terms leaves a prefactor grouping implicit; the constants used
    here (16, 1/4, 4) are fixed by matching the exact two-level density
    (whose normalized closed form carries 16 gamma omega^2 / gamma_bar^2).
    """
    if p.level_count != 3:
        raise RegimeViolation("expected the three-level model")
    if p.eta_g != 1.0:
        raise RegimeViolation("perturbative density assumes eta_g = 1")
    if p.omega_d >= 0.1 * p.omega_e:
        raise RegimeViolation("perturbative regime needs omega_d << omega_e")
    spec = threelevel_spectrum(p)  # validates x < 1
    gg, oe, od = p.gamma_g, p.omega_e, p.omega_d
    gbar = spec.gamma_bar
    taus = np.asarray(tau, dtype=float)
    gamma2 = gg * od**2 / oe**2
    # sinh forms rewritten as explicit exponentials so large tau cannot overflow
    bright = (gg * oe**2 / gbar**2) * (np.exp(-(gg - gbar) * taus / 2)
                                       + np.exp(-(gg + gbar) * taus / 2)
                                       - 2 * np.exp(-gg * taus / 2)) * 4
    dark = 0.25 * gg**3 * od**4 / oe**6 * np.exp(-gamma2 * taus)
    decay = gg / 4 + gamma2 / 2
    cross = -(gg**2 * od**2 / (oe**2 * gbar)) * 2 * (
        np.exp(-(decay - gbar / 4) * taus) - np.exp(-(decay + gbar / 4) * taus))
    vals = bright + dark + cross
    return float(vals) if vals.ndim == 0 else vals


def free_step_operator(p: ModelParams, dt: float) -> np.ndarray:
    """One explicit no-click step 1 - i H dt - (gamma/2)|e><e| dt of the
    pure-state photon-counting unraveling."""
    ops = build_model(p)
    n = p.level_count
    K0 = np.eye(n, dtype=complex) - 1j * ops.hamiltonian * dt
    K0[E, E] -= p.gamma_total * dt / 2
    return K0


def saturating_class_check(state: np.ndarray, tol: float = 1e-9) -> bool:
    """Test membership in the information-saturating class of conditional states.

    A normalized state (A, B, C, D) in the (g, e, d, u) basis belongs iff a
    global phase makes A and D purely imaginary while B and C are purely real
    (the complementary real/imaginary split is the same class, one quarter
    turn away).  The phase is fixed constructively: rotate the larger of
    (B, C) onto the real axis, falling back to rotating the larger of (A, D)
    onto the imaginary axis when both B and C vanish.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (4,):
        raise ValueError("expected a 4-component state vector")
    norm = np.linalg.norm(state)
    if norm < 1e-12:
        raise ZeroState("state has zero norm")
    state = state / norm
    A, B, C, D_amp = state

    if max(abs(B), abs(C)) > tol:
        pivot = B if abs(B) >= abs(C) else C
        phase = np.exp(-1j * np.angle(pivot))
    elif max(abs(A), abs(D_amp)) > tol:
        pivot = A if abs(A) >= abs(D_amp) else D_amp
        phase = np.exp(1j * (np.pi / 2 - np.angle(pivot)))
    else:
        raise ZeroState("state has no component above tolerance")
    A, B, C, D_amp = state * phase
    return bool(abs(A.real) <= tol and abs(D_amp.real) <= tol
                and abs(B.imag) <= tol and abs(C.imag) <= tol)
