import numpy as np
import pytest

from ionsense.errors import DegenerateKernel, InvalidEfficiency
from ionsense.generators import devectorize, lindblad_superop, match_modes, \
    nojump_superop, spectrum_nojump, steady_state, trace_functional, \
    twosided_superop, vectorize
from ionsense.model import ModelOperators, ModelParams, build_model, \
    effective_hamiltonian, preset
from ionsense.numerics import eig_general, expm_action


def two_level_decay(gamma=1.0):
    L = np.zeros((2, 2))
    L[0, 1] = np.sqrt(gamma)
    return ModelOperators(hamiltonian=np.zeros((2, 2)),
                          jump_ops=(("g", gamma, L),))


def test_vectorization_roundtrip(rng):
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.array_equal(devectorize(vectorize(rho)), rho)


def test_two_level_decay_rates():
    gen = lindblad_superop(two_level_decay())
    rho_e = np.diag([0.0, 1.0]).astype(complex)
    drho = devectorize(gen.matrix @ vectorize(rho_e))
    assert drho[1, 1].real == pytest.approx(-1.0)
    assert drho[0, 0].real == pytest.approx(1.0)


def test_trace_preservation(rng, setup1):
    gen = lindblad_superop(build_model(setup1))
    t = trace_functional(4)
    for _ in range(5):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a + a.conj().T
        assert abs(t @ (gen.matrix @ vectorize(rho))) < 1e-12 * np.abs(rho).sum()


def test_setup1_spectrum_unique_zero(setup1):
    lam = eig_general(lindblad_superop(build_model(setup1)).matrix).eigenvalues
    near_zero = np.abs(lam.real) < 1e-12
    assert near_zero.sum() == 1
    assert np.all(lam.real[~near_zero] < 0)


def test_nojump_zero_efficiency_is_lindblad(setup1):
    ops = build_model(setup1.replace(gamma_deph=1e-4))
    assert np.array_equal(nojump_superop(ops, 0.0, 0.0).matrix,
                          lindblad_superop(ops).matrix)


def test_nojump_unit_efficiency_pure_state_action(rng, setup2):
    # at eta = 1 in both channels the conditional evolution of a pure state
    # is generated by the effective Hamiltonian
    ops = build_model(setup2)
    L0 = nojump_superop(ops, 1.0, 1.0)
    He = effective_hamiltonian(setup2)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    got = devectorize(L0.matrix @ vectorize(rho))
    expected = -1j * (He @ rho - rho @ He.conj().T)
    assert np.max(np.abs(got - expected)) < 1e-12


def test_nojump_recycling_difference(setup1):
    ops = build_model(setup1.replace(gamma_deph=2e-4))
    eta_g, eta_u = 0.3, 0.7
    diff = nojump_superop(ops, eta_g, eta_u).matrix \
        - lindblad_superop(ops).matrix
    Lg, Lu = ops.jump("g"), ops.jump("u")
    expected = -eta_g * np.kron(Lg.conj(), Lg) - eta_u * np.kron(Lu.conj(), Lu)
    assert np.max(np.abs(diff - expected)) < 1e-14


def test_nojump_invalid_efficiency(setup1):
    with pytest.raises(InvalidEfficiency):
        nojump_superop(build_model(setup1), 1.2, 0.0)


def test_hermiticity_preserved_under_evolution(rng, setup2):
    L0 = nojump_superop(build_model(setup2), 0.3, 0.0)
    S = eig_general(L0.matrix)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a + a.conj().T
    for t in (1.0, 1e3, 1e6):
        evolved = devectorize(expm_action(S, vectorize(rho), t))
        assert np.max(np.abs(evolved - evolved.conj().T)) < 1e-10


def test_nojump_spectral_stability():
    cases = [preset("setup1", omega_d_ratio=0.0025),
             preset("setup2", omega_d_ratio=0.01),
             preset("setup2", omega_d_ratio=0.01).replace(gamma_deph=1e-4),
             preset("threelevel", omega_d_ratio=0.01)]
    for p in cases:
        for eta in (0.01, 0.5, 1.0):
            L0 = nojump_superop(build_model(p), eta, 0.0)
            lam = eig_general(L0.matrix).eigenvalues
            assert np.max(lam.real) <= 1e-12


def test_steady_two_level():
    info = steady_state(lindblad_superop(two_level_decay()))
    assert np.allclose(info.rho_ss, np.diag([1.0, 0.0]), atol=1e-12)
    assert info.ee_population == pytest.approx(0.0, abs=1e-12)


def test_steady_detection_rate_linear_in_eta(setup1):
    gen = lindblad_superop(build_model(setup1))
    lo = steady_state(gen, eta_g=0.05, gamma_g=0.95)
    hi = steady_state(gen, eta_g=0.10, gamma_g=0.95)
    assert hi.detection_rate == pytest.approx(2 * lo.detection_rate, rel=1e-12)


def test_steady_e_population_suppressed_by_weak_drive():
    # the weak drive parks the emitter in the long-lived level, so the
    # stationary fluorescent population lies below its no-drive reference
    from ionsense.approx import bright_manifold_ee
    for delta in (0.1, 0.3, 1.0):
        p = preset("setup1", omega_d_ratio=0.01).replace(delta_u=delta)
        full = steady_state(lindblad_superop(build_model(p))).ee_population
        assert full < bright_manifold_ee(p)


def test_steady_e_population_insensitive_to_weak_drive():
    vals = []
    for ratio in (0.01, 0.0025, 0.001):
        p = preset("setup1", omega_d_ratio=ratio)
        vals.append(steady_state(lindblad_superop(build_model(p))).ee_population)
    assert (max(vals) - min(vals)) / max(vals) < 0.02


def test_steady_degenerate_kernel_when_drive_off(setup1):
    gen = lindblad_superop(build_model(setup1.with_omega_d(0.0)))
    with pytest.raises(DegenerateKernel):
        steady_state(gen)


def test_spectrum_modulation_frequency_matches_closed_form(setup2):
    from ionsense.approx import darkstate_perturbation
    omega = darkstate_perturbation(setup2).omega_mod
    for eta in (0.01, 0.1, 1.0):
        L0 = nojump_superop(build_model(setup2.replace(eta_g=eta)), eta, 0.0)
        modes = spectrum_nojump(L0)
        osc = min((m for m in modes if abs(m.eigenvalue.imag) > 1e-8),
                  key=lambda m: abs(m.eigenvalue.real))
        assert abs(abs(osc.eigenvalue.imag) - omega) < 0.01 * omega


def test_spectrum_efficiency_splits_decay_scales(setup2):
    def scales(eta):
        L0 = nojump_superop(build_model(setup2.replace(eta_g=eta)), eta, 0.0)
        modes = spectrum_nojump(L0)
        slowest = abs(modes[0].eigenvalue.real)
        osc = min((m for m in modes if abs(m.eigenvalue.imag) > 1e-8),
                  key=lambda m: abs(m.eigenvalue.real))
        return slowest, abs(osc.eigenvalue.real)

    slow_1, osc_1 = scales(1.0)
    slow_lo, osc_lo = scales(0.05)
    assert slow_lo < slow_1
    assert osc_lo > osc_1


def test_spectrum_slowest_decay_smaller_with_unmonitored_channel(setup2):
    ops = build_model(setup2)
    lam_10 = spectrum_nojump(nojump_superop(ops, 1.0, 0.0))[0].eigenvalue
    lam_11 = spectrum_nojump(nojump_superop(ops, 1.0, 1.0))[0].eigenvalue
    assert abs(lam_10.real) < abs(lam_11.real)


def test_spectrum_unmonitored_limit_contains_zero(setup1):
    modes = spectrum_nojump(nojump_superop(build_model(setup1), 0.0, 0.0))
    assert abs(modes[0].eigenvalue) < 1e-12


def test_spectrum_derivatives_tracked(setup2):
    L0 = nojump_superop(build_model(setup2), 1.0, 0.0)
    modes = spectrum_nojump(L0, params=setup2)
    osc = min((m for m in modes if abs(m.eigenvalue.imag) > 1e-8),
              key=lambda m: abs(m.eigenvalue.real))
    # modulation frequency moves as d omega / d theta = 2 omega_u / Omega
    expected = 2 * setup2.omega_u / np.hypot(setup2.omega_e, setup2.omega_u)
    assert abs(osc.d_theta.imag) == pytest.approx(expected, rel=1e-3)


def test_match_modes_identity(rng):
    M = rng.normal(size=(5, 5))
    S = eig_general(M)
    perm = match_modes(S, S)
    assert np.array_equal(perm, np.arange(5))


def test_twosided_degenerate_is_lindblad(setup1):
    theta = setup1.omega_d
    two = twosided_superop(setup1, theta, theta)
    gen = lindblad_superop(build_model(setup1))
    assert np.max(np.abs(two.matrix - gen.matrix)) < 1e-15


def test_twosided_trace_preserved_on_diagonal(setup1):
    theta = setup1.omega_d
    two = twosided_superop(setup1, theta, theta)
    S = eig_general(two.matrix)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[0, 0] = 1.0
    t = trace_functional(4)
    for tt in (1.0, 1e3, 1e6):
        tr = t @ expm_action(S, vectorize(rho0), tt)
        assert abs(tr - 1.0) < 1e-9


def test_twosided_conjugate_symmetry(setup1):
    theta = setup1.omega_d
    h = 1e-3 * theta
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[0, 0] = 1.0
    t = trace_functional(4)
    for tt in (10.0, 1e4):
        tr_pm = t @ expm_action(
            eig_general(twosided_superop(setup1, theta + h, theta - h).matrix),
            vectorize(rho0), tt)
        tr_mp = t @ expm_action(
            eig_general(twosided_superop(setup1, theta - h, theta + h).matrix),
            vectorize(rho0), tt)
        assert abs(tr_pm - tr_mp.conjugate()) < 1e-10


def test_twosided_offdiagonal_trace_decays(setup1):
    theta = setup1.omega_d
    h = 1e-3 * theta
    S = eig_general(twosided_superop(setup1, theta + h, theta - h).matrix)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[0, 0] = 1.0
    t = trace_functional(4)
    previous = 1.0
    for tt in (1e2, 1e4, 1e6, 1e8):
        mag = abs(t @ expm_action(S, vectorize(rho0), tt))
        assert mag < 1.0
        assert mag < previous + 1e-12
        previous = mag
