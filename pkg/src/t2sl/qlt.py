"""Frequency-domain solution of the linearised Langevin equations.

Fourier convention matches ``numpy.fft``: f(omega) = sum_t f(t) exp(-i omega t),
so d/dt -> +i omega and the transfer matrix is M(omega) = (i omega - A)^-1.
Each bath is white and phase insensitive with symmetrised strength n + 1/2.

Component spectra of the output field a_out(omega):

    S_aadag(w)     = <|a_out(w)|^2>
    S_adaga(w)     = S_aadag(-w)
    S_aa(w)        = <a_out(w) a_out(-w)>
    S_adagadag(w)  = conj(S_aa(w))

so that the quadrature X_theta = a e^{-i theta} + a* e^{i theta} has
S_XX = S_aadag + S_adaga + S_adagadag e^{2 i theta} + S_aa e^{-2 i theta}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SpecError, SystemSpec, check_spec, drift_linear


class UnstableSystemError(SpecError):
    def __init__(self, report: "StabilityReport"):
        self.report = report
        super().__init__(f"drift matrix is unstable: max Re(eig) = {report.max_real:.3e}")


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    eigenvalues: np.ndarray

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def __bool__(self):
        return self.stable


def stability_check(A: np.ndarray) -> StabilityReport:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("stability_check needs a square matrix")
    ev = np.linalg.eigvals(A)
    return StabilityReport(bool(np.all(ev.real < 0)), ev)


@dataclass
class QltSpectrum:
    omega: np.ndarray
    S_aadag: np.ndarray
    S_adaga: np.ndarray
    S_aa: np.ndarray
    theta: float
    floor: float  # n_p + 1/2, the per-component shot-noise level

    @property
    def S_adagadag(self) -> np.ndarray:
        return np.conj(self.S_aa)

    @property
    def S_corr(self) -> np.ndarray:
        return 2.0 * np.real(self.S_aa * np.exp(-2j * self.theta))

    @property
    def S_XX(self) -> np.ndarray:
        return self.quadrature(self.theta)

    def quadrature(self, theta: float) -> np.ndarray:
        return self.S_aadag + self.S_adaga + 2.0 * np.real(self.S_aa * np.exp(-2j * theta))

    @property
    def quadrature_floor(self) -> float:
        """Flat level of S_XX for a decoupled cavity (equals 1 for vacuum input)."""
        return 2.0 * self.floor


def _linear_static(spec: SystemSpec) -> np.ndarray:
    check_spec(spec)
    if spec.is_modulated:
        raise SpecError("QLT needs a time-independent system; modulated specs are not supported")
    if not spec.is_linear:
        raise SpecError("QLT needs g2 = 0 for every coupling")
    A = drift_linear(spec)
    rep = stability_check(A)
    if not rep.stable:
        raise UnstableSystemError(rep)
    return A


def transfer_matrices(A: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """M(omega) = (i omega - A)^-1, shape (len(omega), n, n)."""
    omega = np.asarray(omega, float)
    n = A.shape[0]
    lhs = 1j * omega[:, None, None] * np.eye(n) - A[None]
    return np.linalg.solve(lhs, np.broadcast_to(np.eye(n, dtype=complex), lhs.shape))


def _noise_strengths(spec: SystemSpec):
    root = np.repeat(np.sqrt(spec.rates()), 2)
    D = np.repeat(spec.occupancies() + 0.5, 2)
    return root, D


def _pair_swap(n: int) -> np.ndarray:
    idx = np.arange(n)
    return idx ^ 1


def output_response(spec: SystemSpec, omega: np.ndarray, readout: int = 0) -> np.ndarray:
    """Row vector v(omega) with a_out(omega) = v(omega) . zeta(omega)."""
    A = _linear_static(spec)
    root, _ = _noise_strengths(spec)
    MG = transfer_matrices(A, omega) * root[None, None, :]
    kappa = spec.optical[readout].kappa
    v = -np.sqrt(kappa) * MG[:, 2 * readout, :]
    v[:, 2 * readout] += 1.0
    return v


def qlt_output_spectra(spec: SystemSpec, theta: float, omega: np.ndarray, readout: int = 0) -> QltSpectrum:
    omega = np.asarray(omega, float)
    _, D = _noise_strengths(spec)
    v = output_response(spec, omega, readout)
    vm = output_response(spec, -omega, readout)
    swap = _pair_swap(spec.dim)
    S_aadag = np.sum(np.abs(v) ** 2 * D, axis=1)
    S_adaga = np.sum(np.abs(vm) ** 2 * D, axis=1)
    S_aa = np.sum(v * vm[:, swap] * D, axis=1)
    return QltSpectrum(omega, S_aadag, S_adaga, S_aa, float(theta), spec.optical[readout].n_occ + 0.5)


def qlt_mechanical_spectrum(spec: SystemSpec, omega: np.ndarray, mechanical: int = 0) -> np.ndarray:
    """Symmetrised spectrum of x = b + b* for one mechanical mode."""
    A = _linear_static(spec)
    root, D = _noise_strengths(spec)
    MG = transfer_matrices(A, np.asarray(omega, float)) * root[None, None, :]
    s = 2 * spec.mech_slot(mechanical)
    u = MG[:, s, :] + MG[:, s + 1, :]
    return np.sum(np.abs(u) ** 2 * D, axis=1)


def heterodyne_photocurrent(spec: SystemSpec, omega_het: float, omega: np.ndarray, readout: int = 0) -> np.ndarray:
    """Incoherent heterodyne spectrum S_I(f) = S_aadag(f + Omega) + S_adaga(f - Omega)."""
    omega = np.asarray(omega, float)
    up = qlt_output_spectra(spec, 0.0, omega + omega_het, readout).S_aadag
    down = qlt_output_spectra(spec, 0.0, omega - omega_het, readout).S_adaga
    return up + down


def qlt_heterodyne_target(spec: SystemSpec, theta: float, omega_het: float, omega: np.ndarray,
                          readout: int = 0) -> np.ndarray:
    """Prediction for the r-heterodyne filtered quadrature.

    The two heterodyne sidebands S_I(Omega + w) and S_I(Omega - w) add
    incoherently while the correlation term is restored at baseband:

        S_I(Omega + w) + S_I(Omega - w) + S_adagadag(w) e^{2 i theta} + S_aa(w) e^{-2 i theta}
    """
    if omega_het <= 0:
        raise ValueError("heterodyne target needs omega_het > 0")
    omega = np.asarray(omega, float)
    base = qlt_output_spectra(spec, theta, omega, readout)
    return (heterodyne_photocurrent(spec, omega_het, omega_het + omega, readout)
            + heterodyne_photocurrent(spec, omega_het, omega_het - omega, readout)
            + base.S_corr)
