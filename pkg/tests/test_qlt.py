import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import trapezoid
from scipy.linalg import solve_continuous_lyapunov

from t2sl.model import Modulation, SpecError, drift_linear
from t2sl.qlt import (UnstableSystemError, heterodyne_photocurrent, qlt_heterodyne_target,
                      qlt_mechanical_spectrum, qlt_output_spectra, stability_check, transfer_matrices)

from helpers import simple_spec, two_mode_spec

W = np.linspace(-4, 4, 801)


def stable(spec):
    return stability_check(drift_linear(spec)).stable


specs = st.builds(
    simple_spec,
    kappa=st.floats(0.2, 3.0), detuning=st.floats(-3, 3), n_p=st.floats(0, 2),
    gamma=st.floats(0.01, 0.5), omega_m=st.floats(0.5, 2.0), n_m=st.floats(0, 20), g1=st.floats(0, 0.3),
)


@pytest.mark.parametrize("n_p,det", [(0.0, 0.0), (0.7, 1.3)])
def test_decoupled_output_is_flat(n_p, det):
    q = qlt_output_spectra(simple_spec(detuning=det, n_p=n_p), 0.3, W)
    assert np.allclose(q.S_aadag, n_p + 0.5) and np.allclose(q.S_adaga, n_p + 0.5)
    assert np.allclose(q.S_aa, 0)
    assert np.allclose(q.S_XX, q.quadrature_floor) and q.quadrature_floor == 2 * (n_p + 0.5)


def test_resonant_amplitude_quadrature_is_shot_noise_limited():
    # at zero detuning the mechanics only writes onto the phase quadrature
    spec = simple_spec(detuning=0.0, g1=0.3, n_m=5.0)
    assert np.allclose(qlt_output_spectra(spec, 0.0, W).S_XX, 1.0)
    phase = qlt_output_spectra(spec, math.pi / 2, W).S_XX
    assert phase[np.argmin(abs(W - 1.0))] > 10


def test_decoupled_mechanical_lorentzian():
    g, wm, n = 0.1, 1.2, 3.0
    s = qlt_mechanical_spectrum(simple_spec(gamma=g, omega_m=wm, n_m=n), W)
    lor = g * (n + 0.5) * (1 / abs(1j * W + 1j * wm + g / 2) ** 2 + 1 / abs(1j * W - 1j * wm + g / 2) ** 2)
    assert np.allclose(s, lor)


@pytest.mark.parametrize("spec", [simple_spec(detuning=-1.0, g1=0.2, n_m=2.0, n_p=0.3), two_mode_spec()],
                         ids=["single", "two-mode"])
def test_mechanical_spectrum_integrates_to_lyapunov_variance(spec):
    A = drift_linear(spec)
    Q = np.diag(np.repeat(spec.rates() * (spec.occupancies() + 0.5), 2))
    sigma = solve_continuous_lyapunov(A, -Q)
    w = np.linspace(-300, 300, 600001)
    for k in range(spec.n_mechanical):
        s = 2 * spec.mech_slot(k)
        var = (sigma[s, s] + sigma[s + 1, s + 1] + 2 * sigma[s, s + 1].real).real
        integral = trapezoid(qlt_mechanical_spectrum(spec, w, k), w) / (2 * math.pi)
        assert integral == pytest.approx(var, rel=2e-3)


def test_transfer_matrix_inverts_drift():
    A = drift_linear(two_mode_spec())
    M = transfer_matrices(A, W[::40])
    for w, m in zip(W[::40], M):
        assert np.allclose((1j * w * np.eye(len(A)) - A) @ m, np.eye(len(A)))


def test_sideband_instability_threshold():
    kappa, gamma = 0.1, 0.01
    g_th = math.sqrt(kappa * gamma) / 2
    below = simple_spec(kappa=kappa, gamma=gamma, detuning=1.0, g1=0.9 * g_th)
    above = simple_spec(kappa=kappa, gamma=gamma, detuning=1.0, g1=1.1 * g_th)
    assert stable(below) and not stable(above)
    assert stable(simple_spec(kappa=kappa, gamma=gamma, detuning=-1.0, g1=1.1 * g_th))
    with pytest.raises(UnstableSystemError) as exc:
        qlt_output_spectra(above, 0.0, W)
    assert exc.value.report.max_real > 0 and not exc.value.report


def test_rejects_unsupported_specs():
    with pytest.raises(SpecError, match="time-independent"):
        qlt_output_spectra(simple_spec(modulation=Modulation(0.1, 0.1, 0.0)), 0.0, W)
    with pytest.raises(SpecError, match="g2"):
        qlt_output_spectra(simple_spec(g2=0.01), 0.0, W)
    with pytest.raises(ValueError):
        stability_check(np.zeros((2, 3)))


@given(specs, st.floats(0, 2 * math.pi))
def test_spectral_symmetries(spec, theta):
    assume(stable(spec))
    w = np.linspace(-3, 3, 61)
    q = qlt_output_spectra(spec, theta, w)
    qm = qlt_output_spectra(spec, theta, -w)
    assert np.allclose(q.S_aa, qm.S_aa, rtol=1e-8, atol=1e-10)
    assert np.allclose(q.S_adaga, qm.S_aadag, rtol=1e-8, atol=1e-10)
    assert np.allclose(q.S_XX, qm.S_XX, rtol=1e-8, atol=1e-10)
    assert (q.S_XX > 0).all() and (q.S_aadag > 0).all()
    # the correlation term is bounded by the two sidebands
    assert (np.abs(q.S_aa) <= np.sqrt(q.S_aadag * q.S_adaga) * (1 + 1e-9) + 1e-12).all()
    assert (qlt_mechanical_spectrum(spec, w) > 0).all()


def test_decoupled_heterodyne_target():
    spec = simple_spec(n_p=0.25)
    assert np.allclose(heterodyne_photocurrent(spec, 10.0, W), 2 * 0.75)
    assert np.allclose(qlt_heterodyne_target(spec, 0.4, 10.0, W), 4 * 0.75)
    with pytest.raises(ValueError):
        qlt_heterodyne_target(spec, 0.0, 0.0, W)


def test_heterodyne_target_contains_baseband_correlation():
    spec = simple_spec(g1=0.3)
    om = 10.0
    for theta in (0.0, math.pi / 4):
        q = qlt_output_spectra(spec, theta, W)
        incoherent = heterodyne_photocurrent(spec, om, om + W) + heterodyne_photocurrent(spec, om, om - W)
        assert np.allclose(qlt_heterodyne_target(spec, theta, om, W) - incoherent, q.S_corr)
