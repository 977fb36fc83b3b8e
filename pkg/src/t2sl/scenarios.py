"""Named parameter presets and the features each one is expected to show.

All rates are in units of the cavity linewidth (kappa = 1) and the first
mechanical mode has omega_m = 1, so frequencies in the feature descriptors
are simultaneously in units of omega_m.  Parameter values are chosen inside
the physical regime each preset targets; the descriptors are positional or
structural and never encode an expected magnitude that was not derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .detection import FilterSpec
from .model import Coupling, MechanicalMode, Modulation, OpticalMode, SystemSpec, check_spec, drift_linear
from .propagator import TimeGrid
from .qlt import stability_check


# ---------------------------------------------------------------------------
# feature descriptors (pure data; see checks.py for evaluation)


@dataclass(frozen=True)
class FloorLevel:
    """Field PSD in shot-noise units is flat at ``level``."""

    level: float = 1.0
    mean_tol: float = 0.03
    max_z: float = 5.0
    kind: str = "floor"


@dataclass(frozen=True)
class QltMatch:
    """Homodyne PSD matches the linear oracle in a band (units of omega_m)."""

    thetas: Tuple[float, ...]
    band: Tuple[float, float] = (0.5, 1.5)
    rms_tol: float = 0.05
    rebin: int = 8
    kind: str = "qlt-match"


@dataclass(frozen=True)
class SubFloor:
    """Some (omega, theta) dips below the floor in both simulation and oracle."""

    thetas: Tuple[float, ...]
    band: Tuple[float, float] = (0.5, 1.5)
    n_se: float = 3.0
    rebin: int = 8
    kind: str = "sub-floor"


@dataclass(frozen=True)
class HeterodyneMatch:
    """r-heterodyne filtered quadrature matches the oracle target."""

    theta: float = 0.0
    band: Tuple[float, float] = (0.5, 1.5)
    rms_tol: float = 0.10
    rebin: int = 8
    kind: str = "heterodyne-match"


@dataclass(frozen=True)
class Peaks:
    """Local maxima of a spectrum at the listed positions within ``tol_bins``.

    ``trace`` is "field" or "quad" (then ``theta`` selects the quadrature).
    """

    positions: Tuple[float, ...]
    trace: str = "quad"
    theta: float = math.pi / 2
    tol_bins: int = 1
    search: float = 0.04
    exclude_dc: bool = False
    kind: str = "peaks"


@dataclass(frozen=True)
class Splitting:
    lower: float
    upper: float
    trace: str = "quad"
    theta: float = math.pi / 2
    tol_bins: int = 1
    search: float = 0.04
    kind: str = "splitting"


@dataclass(frozen=True)
class PeakDominance:
    """Peak near ``strong`` is higher than the peak near ``weak``; both above the floor."""

    strong: float
    weak: float
    trace: str = "quad"
    theta: float = math.pi / 2
    halfwidth: float = 0.3
    n_se: float = 3.0
    exclude_dc: bool = True
    kind: str = "peak-dominance"


@dataclass(frozen=True)
class ModulationScan:
    """Height of the peak at ``position`` vs omega_2/omega_d is non-monotonic.

    Asserts suppression then recovery: some interior ratio lies more than
    ``n_se`` standard errors below an earlier and a later one.
    """

    ratios: Tuple[float, ...]
    position: float
    trace: str = "quad"
    theta: float = math.pi / 2
    search: float = 0.04
    n_se: float = 3.0
    kind: str = "modulation-scan"


@dataclass(frozen=True)
class MechSymmetry:
    n_se: float = 3.0
    kind: str = "mech-symmetry"


@dataclass(frozen=True)
class NoDivergence:
    kind: str = "no-divergence"


@dataclass(frozen=True)
class G2Scaling:
    """Excess band power from g2 grows as g2^2 over a factor-2 sweep.

    For each (detuning, band centre) pair the excess over a g2 = 0 run with
    the same seeds must be significant at the larger coupling, and the ratio
    of excesses must equal ``factor**2`` within ``n_se`` standard errors.
    The dominant band must change with detuning.
    """

    detunings: Tuple[float, ...]
    centres: Tuple[float, ...]
    g2_values: Tuple[float, float]
    halfwidth: float = 0.3
    n_se: float = 3.0
    kind: str = "g2-scaling"


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    spec: SystemSpec
    grid: TimeGrid
    thetas: Tuple[float, ...] = ()
    omega_het: float = 0.0
    n_traj: int = 100
    features: Tuple = ()
    filter: FilterSpec = FilterSpec()
    readout: int = 0
    expensive: bool = False
    ci_n_traj: Optional[int] = None
    regime: str = ""

    @property
    def omega_ref(self) -> float:
        return self.spec.mechanical[0].omega_m

    def with_overrides(self, **kw) -> "ScenarioPreset":
        return replace(self, **kw)


_KAPPA = 1.0
_OMEGA_M = 1.0


def _squeezing_linear() -> ScenarioPreset:
    thetas = (0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8)
    spec = SystemSpec(
        [OpticalMode(_KAPPA, 0.0, 0.0)],
        [MechanicalMode(0.1, _OMEGA_M, 0.0)],
        [Coupling(0, 0, g1=0.3)],
    )
    return ScenarioPreset(
        "squeezing_linear", spec, TimeGrid.from_samples(2 ** 15, 0.01, 2),
        thetas=thetas, omega_het=10.0, n_traj=500,
        filter=FilterSpec("r-heterodyne", 0.0, 5.0),
        features=(
            QltMatch(thetas),
            SubFloor(thetas),
            HeterodyneMatch(0.0),
            MechSymmetry(),
            NoDivergence(),
        ),
        regime="linear coupling, resolved sidebands, back-action dominated at T = 0",
    )


def _decoupled_floor() -> ScenarioPreset:
    spec = SystemSpec(
        [OpticalMode(_KAPPA, 0.0, 0.0)],
        [MechanicalMode(0.1, _OMEGA_M, 0.0)],
        [Coupling(0, 0, 0.0, 0.0)],
    )
    return ScenarioPreset(
        "decoupled_floor", spec, TimeGrid.from_samples(2 ** 14, 0.01, 2),
        thetas=(0.0,), n_traj=500,
        features=(FloorLevel(), MechSymmetry(), NoDivergence()),
        regime="no coupling, vacuum input",
    )


# T = 100 pi puts omega_m (= 50 bins) and omega_d (= 5 bins) exactly on the grid
_MOD_DT = 100 * math.pi / 2 ** 14
_OMEGA_D = 0.1


def _modulated() -> ScenarioPreset:
    spec = SystemSpec(
        [OpticalMode(_KAPPA, 0.0, 0.0)],
        [MechanicalMode(0.02, _OMEGA_M, 0.0)],
        [Coupling(0, 0, g1=0.0)],
        Modulation(g_bar=0.1, omega_d=_OMEGA_D, omega_2=0.0),
    )
    lo, hi = _OMEGA_M - _OMEGA_D, _OMEGA_M + _OMEGA_D
    return ScenarioPreset(
        "modulated_split_sideband", spec, TimeGrid.from_samples(2 ** 14, _MOD_DT, 2),
        thetas=(math.pi / 2,), n_traj=1000,
        features=(
            Peaks((-hi, -lo, lo, hi)),
            Splitting(lo, hi),
            ModulationScan((0.0, 0.7, 1.43, 2.0, 2.6), hi),
            MechSymmetry(),
            NoDivergence(),
        ),
        regime="slow modulation omega_d << omega_m of coupling and trap frequency",
    )


def _mixed() -> ScenarioPreset:
    spec = SystemSpec(
        [OpticalMode(_KAPPA, 0.0, 0.0)],
        [MechanicalMode(0.1, _OMEGA_M, 10.0)],
        [Coupling(0, 0, g1=0.1, g2=0.02)],
    )
    return ScenarioPreset(
        "mixed_g1_g2", spec, TimeGrid.from_samples(2 ** 13, 0.02, 2),
        thetas=(math.pi / 2,), n_traj=500,
        features=(
            Peaks((0.0, 2.0), search=0.3, tol_bins=4, exclude_dc=True),
            PeakDominance(0.0, 2.0),
            MechSymmetry(),
            NoDivergence(),
        ),
        regime="linear plus position-squared coupling, resolved sidebands",
    )


def _pure_g2() -> ScenarioPreset:
    spec = SystemSpec(
        [OpticalMode(_KAPPA, 0.0, 0.0)],
        [MechanicalMode(0.1, _OMEGA_M, 0.0)],
        [Coupling(0, 0, g1=0.0, g2=0.01)],
    )
    return ScenarioPreset(
        "pure_g2_ground_state", spec, TimeGrid.from_samples(2 ** 13, 0.02, 2),
        thetas=(), n_traj=10000, expensive=True, ci_n_traj=300,
        features=(
            G2Scaling(detunings=(0.0, 2.0 * _OMEGA_M), centres=(0.0, 2.0 * _OMEGA_M), g2_values=(0.01, 0.02)),
            MechSymmetry(),
            NoDivergence(),
        ),
        regime="pure position-squared coupling, zero bath temperature",
    )


_BUILDERS = {
    "squeezing_linear": _squeezing_linear,
    "modulated_split_sideband": _modulated,
    "mixed_g1_g2": _mixed,
    "pure_g2_ground_state": _pure_g2,
    "decoupled_floor": _decoupled_floor,
}

PRESET_NAMES = tuple(_BUILDERS)


def preset(name: str) -> ScenarioPreset:
    try:
        p = _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    check_spec(p.spec)
    return p


def linear_reduction_stable(p: ScenarioPreset) -> bool:
    return stability_check(drift_linear(p.spec.static())).stable
