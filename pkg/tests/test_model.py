import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from t2sl.model import (Coupling, MechanicalMode, Modulation, OpticalMode, SpecError, SystemSpec, check_spec,
                        contract, coupling_g1, drift_linear, drift_matrices, drift_nonlinear, expand,
                        mechanical_frequency, validate_spec)

from helpers import random_state, simple_spec, two_mode_spec


def hamiltonian_velocity():
    """Velocities from H = -D a*a + w b*b - g1 q x - g2 q x^2 via i dz/dt = dH/dz*."""
    a, ac, b, bc = sp.symbols("a ac b bc")
    D, w, g1, g2, k, gm = sp.symbols("D w g1 g2 kappa gamma", real=True)
    x, q = b + bc, a + ac
    H = -D * ac * a + w * bc * b - g1 * q * x - g2 * q * x ** 2
    da = -sp.I * sp.diff(H, ac) - k / 2 * a
    db = -sp.I * sp.diff(H, bc) - gm / 2 * b
    args = (a, ac, b, bc, D, w, g1, g2, k, gm)
    return sp.lambdify(args, da), sp.lambdify(args, db)


def test_drift_signs_match_hamiltonian():
    fa, fb = hamiltonian_velocity()
    rng = np.random.default_rng(0)
    for _ in range(20):
        D, w, g1, g2, k, gm = rng.normal(size=6)
        k, gm, w = abs(k) + 0.1, abs(gm) + 0.01, abs(w) + 0.3
        spec = simple_spec(kappa=k, detuning=D, gamma=gm, omega_m=w, g1=g1, g2=g2)
        z = random_state(rng, 2)
        v = drift_nonlinear(spec, z)
        args = (z[0], np.conj(z[0]), z[1], np.conj(z[1]), D, w, g1, g2, k, gm)
        assert v[0] == pytest.approx(fa(*args), rel=1e-12, abs=1e-12)
        assert v[2] == pytest.approx(fb(*args), rel=1e-12, abs=1e-12)
        assert v[1] == pytest.approx(np.conj(v[0]))
        assert v[3] == pytest.approx(np.conj(v[2]))


def test_pure_g2_optical_term_for_real_b():
    spec = simple_spec(kappa=1.0, g1=0.0, g2=0.3)
    b = 0.7
    v = drift_nonlinear(spec, [0.0, b])
    # a = 0 so only the coupling term survives: i g2 (2b)^2
    assert v[0] == pytest.approx(1j * 0.3 * (2 * b) ** 2)


@given(st.integers(0, 2 ** 32 - 1))
def test_linear_consistency(seed):
    rng = np.random.default_rng(seed)
    spec = two_mode_spec()
    A = drift_linear(spec, 0.3)
    for _ in range(5):
        z = random_state(rng, spec.n_mod)
        lhs = drift_nonlinear(spec, z, 0.3)
        rhs = A @ expand(z)
        scale = np.linalg.norm(A) * np.linalg.norm(z)
        assert np.max(np.abs(lhs - rhs)) <= 1e-13 * scale


def test_linear_consistency_modulated():
    spec = simple_spec(g1=0.0, modulation=Modulation(0.2, 0.1, 0.05))
    rng = np.random.default_rng(3)
    for t in (0.0, 1.3, 17.0):
        z = random_state(rng, 2)
        assert np.allclose(drift_nonlinear(spec, z, t), drift_linear(spec, t) @ expand(z), atol=1e-13)


def test_conjugate_structure():
    A = drift_linear(two_mode_spec())
    n = A.shape[0]
    P = np.zeros((n, n))
    for i in range(n):
        P[i, i ^ 1] = 1
    # swapping each (z, z*) pair conjugates the matrix
    assert np.allclose(P @ A @ P, np.conj(A))


def test_decoupled_drift_is_diagonal():
    A = drift_linear(simple_spec(kappa=2.0, detuning=0.5, gamma=0.1, omega_m=3.0))
    assert np.allclose(A, np.diag(np.diag(A)))
    assert A[0, 0] == pytest.approx(0.5j - 1.0)
    assert A[2, 2] == pytest.approx(-3.0j - 0.05)


def test_drift_linear_rejects_g2():
    with pytest.raises(SpecError, match="drift_nonlinear"):
        drift_linear(simple_spec(g2=0.01))


def test_drift_nonlinear_bad_state():
    spec = simple_spec()
    with pytest.raises(SpecError):
        drift_nonlinear(spec, [1.0, 2.0, 3.0])
    with pytest.raises(SpecError):
        drift_nonlinear(spec, [np.nan, 0.0])


def test_modulation_time_dependence():
    spec = simple_spec(g1=0.7, omega_m=1.0, modulation=Modulation(0.2, 0.1, 0.05))
    t = 2.5
    assert coupling_g1(spec, 0, t) == pytest.approx(0.4 * math.sin(0.25))
    assert mechanical_frequency(spec, 0, t) == pytest.approx(1.0 + 0.1 * math.cos(0.5))
    off = simple_spec(g1=0.7, modulation=Modulation(0.2, 0.1, 0.05, enabled=False))
    assert coupling_g1(off, 0, t) == 0.7
    assert not off.is_modulated


def test_drift_matrices_vectorised():
    spec = simple_spec(modulation=Modulation(0.2, 0.1, 0.05))
    ts = np.linspace(0, 10, 7)
    stack = drift_matrices(spec, ts)
    for t, A in zip(ts, stack):
        assert np.allclose(A, drift_linear(spec, t))


def test_expand_contract_roundtrip():
    z = np.array([1 + 2j, -0.5j, 3.0])
    X = expand(z)
    assert np.allclose(X[1::2], np.conj(z))
    assert np.allclose(contract(X), z)


def test_validation_names_fields():
    bad = SystemSpec([OpticalMode(-1.0)], [MechanicalMode(0.0, -1.0, -2.0)], [Coupling(3, 0, np.inf)])
    fields = {v.field for v in validate_spec(bad)}
    assert {"optical[0].kappa", "mechanical[0].gamma", "mechanical[0].omega_m", "mechanical[0].n_occ",
            "couplings[0].optical_index", "couplings[0].g1"} <= fields
    with pytest.raises(SpecError, match="kappa"):
        check_spec(bad)


def test_validation_requires_modes():
    fields = {v.field for v in validate_spec(SystemSpec())}
    assert {"optical", "mechanical"} <= fields


def test_modulation_validation():
    spec = simple_spec(modulation=Modulation(0.1, 0.0))
    assert any(v.field == "modulation.omega_d" for v in validate_spec(spec))
    spec = simple_spec(modulation=Modulation(0.1, 0.1, coupling_index=4))
    assert any(v.field == "modulation.coupling_index" for v in validate_spec(spec))


reals = st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.integers(-5, 5))


@given(reals, reals, reals, reals, reals, reals, reals, st.integers(-2, 3))
def test_validate_never_raises(k, d, n, g, w, g1, g2, idx):
    spec = SystemSpec([OpticalMode(k, d, n)], [MechanicalMode(g, w, n)], [Coupling(idx, 0, g1, g2)])
    out = validate_spec(spec)
    assert isinstance(out, list)
    ok = (k > 0 and math.isfinite(k) and math.isfinite(d) and n >= 0 and math.isfinite(n) and g > 0
          and math.isfinite(g) and w > 0 and math.isfinite(w) and math.isfinite(g1) and math.isfinite(g2)
          and idx == 0)
    assert (out == []) == ok


def test_spec_hashable_and_fingerprint_stable():
    a, b = simple_spec(g1=0.1), simple_spec(g1=0.1)
    assert hash(a) == hash(b) and a.fingerprint() == b.fingerprint()
    assert simple_spec(g1=0.2).fingerprint() != a.fingerprint()


def test_static_drops_modulation_and_g2():
    s = simple_spec(g2=0.1, modulation=Modulation(0.2, 0.1)).static()
    assert s.is_linear and not s.is_modulated
