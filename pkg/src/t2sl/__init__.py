"""Two-timescale stochastic Langevin simulation of cavity optomechanics.

Typical use::

    from t2sl import preset, run_ensemble, Analysis
    p = preset("squeezing_linear")
    res = run_ensemble(p.spec, p.grid, 100, master_seed=1, analysis=Analysis(thetas=p.thetas))
    s = res.spectrum("quad", p.thetas[0], norm="shot-noise-unit")
"""

__version__ = "0.1.0"

from .detection import (  # noqa: E402
    RAW,
    SNU,
    DetectionConfig,
    FilterSpec,
    Spectrum,
    psd,
    psd_components,
    quadrature_trace,
    r_heterodyne_filter,
    shot_noise_floor,
)
from .ensemble import Analysis, EnsembleResult, run_ensemble  # noqa: E402
from .model import (  # noqa: E402
    Coupling,
    MechanicalMode,
    Modulation,
    OpticalMode,
    SpecError,
    SystemSpec,
    check_spec,
    drift_linear,
    drift_nonlinear,
    validate_spec,
)
from .noise import NoiseStream, draw_kick, draw_kicks, fork_stream  # noqa: E402
from .propagator import TimeGrid, TrajectoryRecord, propagate, run_batch, run_trajectory  # noqa: E402
from .qlt import (  # noqa: E402
    UnstableSystemError,
    qlt_heterodyne_target,
    qlt_mechanical_spectrum,
    qlt_output_spectra,
    stability_check,
)
from .scenarios import PRESET_NAMES, ScenarioPreset, preset  # noqa: E402

__all__ = [
    "RAW", "SNU", "DetectionConfig", "FilterSpec", "Spectrum", "psd", "psd_components", "quadrature_trace",
    "r_heterodyne_filter", "shot_noise_floor", "Analysis", "EnsembleResult", "run_ensemble", "Coupling",
    "MechanicalMode", "Modulation", "OpticalMode", "SpecError", "SystemSpec", "check_spec", "drift_linear",
    "drift_nonlinear", "validate_spec", "NoiseStream", "draw_kick", "draw_kicks", "fork_stream", "TimeGrid",
    "TrajectoryRecord", "propagate", "run_batch", "run_trajectory", "UnstableSystemError",
    "qlt_heterodyne_target", "qlt_mechanical_spectrum", "qlt_output_spectra", "stability_check",
    "PRESET_NAMES", "ScenarioPreset", "preset",
]
