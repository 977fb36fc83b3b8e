"""Physical description of a linearised (or position-squared) optomechanical system.

Modes are stored as one complex amplitude each, optical modes first and then
mechanical modes.  The drift acts on the doubled vector

    X = (a1, a1*, a2, a2*, ..., b1, b1*, ...)

in which every odd component is the complex conjugate of the preceding one.
Units are hbar = 1; the mechanical position is x = b + b*, so mass and
zero-point length are folded into the couplings g1, g2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class SpecError(ValueError):
    """Raised when a system description cannot be used for the requested operation."""


@dataclass(frozen=True)
class OpticalMode:
    kappa: float
    detuning: float = 0.0
    n_occ: float = 0.0


@dataclass(frozen=True)
class MechanicalMode:
    gamma: float
    omega_m: float
    n_occ: float = 0.0


@dataclass(frozen=True)
class Coupling:
    optical_index: int = 0
    mechanical_index: int = 0
    g1: float = 0.0
    g2: float = 0.0


@dataclass(frozen=True)
class Modulation:
    """Slow modulation of one coupling and of its mechanical frequency.

    g1(t) = 2 g_bar sin(omega_d t) replaces the static g1 of the targeted
    coupling, and omega_m(t) = omega_m + 2 omega_2 cos(2 omega_d t).
    """

    g_bar: float
    omega_d: float
    omega_2: float = 0.0
    enabled: bool = True
    coupling_index: int = 0


@dataclass(frozen=True)
class SystemSpec:
    optical: tuple = ()
    mechanical: tuple = ()
    couplings: tuple = ()
    modulation: Optional[Modulation] = None

    def __post_init__(self):
        # accept lists for convenience, store tuples so the spec stays hashable
        object.__setattr__(self, "optical", tuple(self.optical))
        object.__setattr__(self, "mechanical", tuple(self.mechanical))
        object.__setattr__(self, "couplings", tuple(self.couplings))

    @property
    def n_optical(self) -> int:
        return len(self.optical)

    @property
    def n_mechanical(self) -> int:
        return len(self.mechanical)

    @property
    def n_mod(self) -> int:
        return self.n_optical + self.n_mechanical

    @property
    def dim(self) -> int:
        return 2 * self.n_mod

    def mech_slot(self, k: int) -> int:
        """Index of mechanical mode ``k`` within a ModeState."""
        return self.n_optical + k

    @property
    def is_linear(self) -> bool:
        return all(c.g2 == 0 for c in self.couplings)

    @property
    def is_modulated(self) -> bool:
        return self.modulation is not None and self.modulation.enabled

    def rates(self) -> np.ndarray:
        """Damping rate of every mode (kappa for optical, gamma for mechanical)."""
        return np.array([m.kappa for m in self.optical] + [m.gamma for m in self.mechanical], float)

    def occupancies(self) -> np.ndarray:
        return np.array([m.n_occ for m in self.optical] + [m.n_occ for m in self.mechanical], float)

    def static(self) -> "SystemSpec":
        """Copy with modulation switched off and g2 dropped (the linear skeleton)."""
        return SystemSpec(
            self.optical,
            self.mechanical,
            tuple(Coupling(c.optical_index, c.mechanical_index, c.g1, 0.0) for c in self.couplings),
            None,
        )

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha1(repr(self).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# time dependence


def coupling_g1(spec: SystemSpec, index: int, t: float | np.ndarray):
    c = spec.couplings[index]
    mod = spec.modulation
    if mod is not None and mod.enabled and mod.coupling_index == index:
        return 2.0 * mod.g_bar * np.sin(mod.omega_d * t)
    return c.g1


def mechanical_frequency(spec: SystemSpec, k: int, t: float | np.ndarray):
    w = spec.mechanical[k].omega_m
    mod = spec.modulation
    if mod is not None and mod.enabled and spec.couplings[mod.coupling_index].mechanical_index == k:
        return w + 2.0 * mod.omega_2 * np.cos(2.0 * mod.omega_d * t)
    return w


# ---------------------------------------------------------------------------
# drift


def drift_linear(spec: SystemSpec, t: float = 0.0) -> np.ndarray:
    """Drift matrix A(t) of the linear system, shape (2 n_mod, 2 n_mod)."""
    if not spec.is_linear:
        raise SpecError("drift_linear requires g2 = 0 for every coupling; use drift_nonlinear")
    return drift_matrices(spec, np.asarray(float(t)))


def drift_matrices(spec: SystemSpec, t: np.ndarray) -> np.ndarray:
    """Drift matrices evaluated on an array of times, shape t.shape + (dim, dim).

    Only the linear (g1) part of the couplings enters.
    """
    t = np.asarray(t, float)
    n = spec.dim
    A = np.zeros(t.shape + (n, n), complex)
    for k, m in enumerate(spec.optical):
        A[..., 2 * k, 2 * k] = 1j * m.detuning - m.kappa / 2
    for k, m in enumerate(spec.mechanical):
        s = 2 * spec.mech_slot(k)
        A[..., s, s] = -1j * mechanical_frequency(spec, k, t) - m.gamma / 2
    for ci, c in enumerate(spec.couplings):
        g = coupling_g1(spec, ci, t)
        o = 2 * c.optical_index
        s = 2 * spec.mech_slot(c.mechanical_index)
        A[..., o, s] += 1j * g
        A[..., o, s + 1] += 1j * g
        A[..., s, o] += 1j * g
        A[..., s, o + 1] += 1j * g
    # conjugate rows: row 2k+1 is row 2k conjugated with each column pair swapped
    A[..., 1::2, 1::2] = np.conj(A[..., 0::2, 0::2])
    A[..., 1::2, 0::2] = np.conj(A[..., 0::2, 1::2])
    return A


def velocity(spec: SystemSpec, state: np.ndarray, t: float) -> np.ndarray:
    """Deterministic velocity of the direct components, shape (..., n_mod).

    Unchecked fast path used by the integrator.
    """
    v = np.empty_like(state)
    no = spec.n_optical
    for k, m in enumerate(spec.optical):
        v[..., k] = (1j * m.detuning - m.kappa / 2) * state[..., k]
    for k, m in enumerate(spec.mechanical):
        s = no + k
        v[..., s] = (-1j * mechanical_frequency(spec, k, t) - m.gamma / 2) * state[..., s]
    for ci, c in enumerate(spec.couplings):
        a = state[..., c.optical_index]
        b = state[..., no + c.mechanical_index]
        x = 2.0 * b.real
        q = 2.0 * a.real
        g1 = coupling_g1(spec, ci, t)
        if c.g2 == 0:
            v[..., c.optical_index] += 1j * g1 * x
            v[..., no + c.mechanical_index] += 1j * g1 * q
        else:
            v[..., c.optical_index] += 1j * (g1 * x + c.g2 * x * x)
            v[..., no + c.mechanical_index] += 1j * (g1 + 2.0 * c.g2 * x) * q
    return v


def expand(state: np.ndarray) -> np.ndarray:
    """ModeState (..., n_mod) -> doubled vector X (..., 2 n_mod)."""
    state = np.asarray(state, complex)
    X = np.empty(state.shape[:-1] + (2 * state.shape[-1],), complex)
    X[..., 0::2] = state
    X[..., 1::2] = np.conj(state)
    return X


def contract(X: np.ndarray) -> np.ndarray:
    return np.asarray(X)[..., 0::2]


def drift_nonlinear(spec: SystemSpec, state: Sequence[complex], t: float = 0.0) -> np.ndarray:
    """Velocity A(X, t) of the full doubled vector for a single ModeState."""
    state = np.asarray(state, complex)
    if state.shape != (spec.n_mod,):
        raise SpecError(f"state must have {spec.n_mod} components, got shape {state.shape}")
    if not np.all(np.isfinite(state)):
        raise SpecError("non-finite state")
    return expand(velocity(spec, state, t))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self):
        return f"{self.field}: {self.rule}"


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def validate_spec(spec: SystemSpec) -> list[Violation]:
    """Check every invariant of the system description; never raises."""
    out: list[Violation] = []
    if spec.n_optical < 1:
        out.append(Violation("optical", "at least one optical mode required"))
    if spec.n_mechanical < 1:
        out.append(Violation("mechanical", "at least one mechanical mode required"))
    for i, m in enumerate(spec.optical):
        if not (_finite(m.kappa) and m.kappa > 0):
            out.append(Violation(f"optical[{i}].kappa", "must be > 0"))
        if not _finite(m.detuning):
            out.append(Violation(f"optical[{i}].detuning", "must be finite"))
        if not (_finite(m.n_occ) and m.n_occ >= 0):
            out.append(Violation(f"optical[{i}].n_occ", "must be >= 0"))
    for i, m in enumerate(spec.mechanical):
        if not (_finite(m.gamma) and m.gamma > 0):
            out.append(Violation(f"mechanical[{i}].gamma", "must be > 0"))
        if not (_finite(m.omega_m) and m.omega_m > 0):
            out.append(Violation(f"mechanical[{i}].omega_m", "must be > 0"))
        if not (_finite(m.n_occ) and m.n_occ >= 0):
            out.append(Violation(f"mechanical[{i}].n_occ", "must be >= 0"))
    for i, c in enumerate(spec.couplings):
        if not (isinstance(c.optical_index, (int, np.integer)) and 0 <= c.optical_index < spec.n_optical):
            out.append(Violation(f"couplings[{i}].optical_index", f"dangling index {c.optical_index}"))
        if not (isinstance(c.mechanical_index, (int, np.integer)) and 0 <= c.mechanical_index < spec.n_mechanical):
            out.append(Violation(f"couplings[{i}].mechanical_index", f"dangling index {c.mechanical_index}"))
        for name in ("g1", "g2"):
            if not _finite(getattr(c, name)):
                out.append(Violation(f"couplings[{i}].{name}", "must be finite"))
    mod = spec.modulation
    if mod is not None:
        if mod.enabled and not (_finite(mod.omega_d) and mod.omega_d > 0):
            out.append(Violation("modulation.omega_d", "must be > 0 when enabled"))
        for name in ("g_bar", "omega_2"):
            if not _finite(getattr(mod, name)):
                out.append(Violation(f"modulation.{name}", "must be finite"))
        if not (isinstance(mod.coupling_index, (int, np.integer)) and 0 <= mod.coupling_index < len(spec.couplings)):
            out.append(Violation("modulation.coupling_index", f"dangling index {mod.coupling_index}"))
    return out


def check_spec(spec: SystemSpec) -> SystemSpec:
    bad = validate_spec(spec)
    if bad:
        raise SpecError("invalid system: " + "; ".join(map(str, bad)))
    return spec
