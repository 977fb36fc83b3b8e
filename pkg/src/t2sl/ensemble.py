"""Parallel trajectory ensembles reduced to averaged periodograms.

Trajectory indices are split into fixed-size batches independent of the
worker count; each batch returns per-bin sums and sums of squares, and the
coordinator adds them in batch order.  The output therefore depends only on
(spec, grid, seed, n_traj, batch_size), not on how many workers ran it.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import detection as det
from .detection import RAW, DetectionConfig, FilterSpec, Spectrum
from .model import SystemSpec
from .propagator import TimeGrid, TrajectoryRecord, run_batch

log = logging.getLogger(__name__)

WORKERS_ENV = "T2SL_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Analysis:
    """Which spectra to accumulate from each batch."""

    thetas: Tuple[float, ...] = ()
    field: bool = True
    components: bool = False
    mechanical: bool = True
    omega_het: float = 0.0
    het_thetas: Tuple[float, ...] = ()
    rhet: Optional[FilterSpec] = None
    window: Optional[str] = None
    # per-trajectory integrated field power over (lo, hi) angular bands
    bands: Tuple[Tuple[float, float], ...] = ()


Key = Tuple


class SpectralSums:
    """Per-bin sums of periodograms (and squares) over trajectories."""

    def __init__(self):
        self.sums: Dict[Key, np.ndarray] = {}
        self.squares: Dict[Key, np.ndarray] = {}
        self.count = 0
        self.diverged: list = []
        self.indices: list = []
        self.failed: list = []  # (trajectory indices, error text) per failed batch
        self.band_rows: Dict[Tuple[float, float], list] = {}

    def add(self, key: Key, P: np.ndarray, squares: bool = True):
        s = P.sum(axis=0)
        if key in self.sums:
            self.sums[key] = self.sums[key] + s
        else:
            self.sums[key] = s
        if squares:
            q = (np.abs(P) ** 2).sum(axis=0)
            self.squares[key] = self.squares[key] + q if key in self.squares else q

    def merge(self, other: "SpectralSums") -> "SpectralSums":
        for k, v in other.sums.items():
            self.sums[k] = self.sums[k] + v if k in self.sums else v.copy()
        for k, v in other.squares.items():
            self.squares[k] = self.squares[k] + v if k in self.squares else v.copy()
        self.count += other.count
        self.diverged.extend(other.diverged)
        self.indices.extend(other.indices)
        self.failed.extend(other.failed)
        for k, v in other.band_rows.items():
            self.band_rows.setdefault(k, []).extend(v)
        return self

    def band_powers(self, band) -> np.ndarray:
        return np.asarray(self.band_rows[tuple(band)], float)

    def mean(self, key: Key) -> np.ndarray:
        return self.sums[key] / self.count

    def stderr(self, key: Key) -> np.ndarray:
        n = self.count
        if n < 2:
            return np.full(self.sums[key].shape, np.nan)
        m = self.sums[key] / n
        var = (self.squares[key] - n * np.abs(m) ** 2) / (n - 1)
        return np.sqrt(np.maximum(var, 0.0) / n)


def analyse_batch(rec: TrajectoryRecord, analysis: Analysis) -> SpectralSums:
    out = SpectralSums()
    ok = rec.ok
    out.count = int(ok.sum())
    out.diverged = [(int(i), int(s)) for i, s in zip(rec.trajectory_index, rec.diverged) if s >= 0]
    out.indices = [int(i) for i in np.atleast_1d(rec.trajectory_index)[ok]]
    if out.count == 0:
        return out
    dt = rec.coarse_step
    a = rec.a_out[ok]
    w = analysis.window
    if analysis.bands:
        f = det.frequencies(a.shape[-1], dt)
        P = det.periodograms(a, dt, w)
        for lo, hi in analysis.bands:
            m = (f >= lo) & (f <= hi)
            out.band_rows[(lo, hi)] = list(P[:, m].sum(axis=1) * (f[1] - f[0]))
    if analysis.field or analysis.components or analysis.thetas:
        F = det.fourier(a, dt, w)
        Fr = det.reversed_bins(F)
        aa = np.abs(F) ** 2
        if analysis.field or analysis.components:
            out.add(("field",), aa)
        if analysis.components:
            out.add(("S_aa",), F * Fr)
        for th in analysis.thetas:
            P = aa + np.abs(Fr) ** 2 + 2.0 * np.real(np.exp(-2j * th) * F * Fr)
            out.add(("quad", float(th)), P)
    if analysis.mechanical:
        for k in range(rec.x.shape[-1]):
            out.add(("mech", k), det.periodograms(rec.x[ok][..., k], dt, w))
    if analysis.omega_het > 0:
        for th in analysis.het_thetas:
            y = det.quadrature_trace(a, rec.t, DetectionConfig(float(th), analysis.omega_het))
            out.add(("het", float(th)), det.periodograms(y, dt, w))
            if analysis.rhet is not None and analysis.rhet.kind == "r-heterodyne":
                z = det.r_heterodyne_filter(y, rec.t, analysis.omega_het, analysis.rhet, dt)
                q = det.rheterodyne_quadrature(z, analysis.rhet.demod_phase)
                out.add(("rhet", float(th)), det.periodograms(q, dt, w))
    return out


def _batch_task(args) -> SpectralSums:
    spec, grid, seed, indices, readout, analysis, oc = args
    try:
        rec = run_batch(spec, grid, seed, indices, readout, output_constant=oc)
        return analyse_batch(rec, analysis)
    except Exception as exc:  # reported by the coordinator, other batches continue
        out = SpectralSums()
        out.failed = [(list(indices), f"{type(exc).__name__}: {exc}")]
        return out


@dataclass
class EnsembleResult:
    spec: SystemSpec
    grid: TimeGrid
    readout: int
    sums: SpectralSums
    n_requested: int
    wall_time: float
    output_constant: Optional[object] = None

    @property
    def n_ok(self) -> int:
        return self.sums.count

    @property
    def diverged(self) -> list:
        return self.sums.diverged

    @property
    def failed(self) -> list:
        return self.sums.failed

    @property
    def freqs(self) -> np.ndarray:
        return det.frequencies(self.grid.n_coarse, self.grid.coarse_step)

    def floor(self, kind: str) -> Optional[float]:
        n_p = self.spec.optical[self.readout].n_occ
        if kind == "field":
            return det.shot_noise_floor(n_p, "field")
        if kind in ("quad", "het"):
            return det.shot_noise_floor(n_p, "quadrature")
        if kind == "rhet":
            return 2.0 * det.shot_noise_floor(n_p, "quadrature")
        return None

    def keys(self):
        return list(self.sums.sums)

    def spectrum(self, kind: str, arg=None, norm: str = RAW) -> Spectrum:
        key = (kind,) if arg is None else (kind, float(arg) if kind != "mech" else int(arg))
        if key not in self.sums.sums:
            raise KeyError(f"spectrum {key} was not accumulated")
        s = Spectrum(self.freqs, self.sums.mean(key).real, self.n_ok, RAW, self.sums.stderr(key))
        return det.normalise(s, norm, self.floor(kind)) if norm != RAW else s

    def components(self) -> det.ComponentSpectra:
        return det.ComponentSpectra(self.freqs, self.sums.mean(("field",)), self.sums.mean(("S_aa",)), self.n_ok)


def batches(n_traj: int, batch_size: int, start: int = 0) -> list:
    idx = list(range(start, start + n_traj))
    return [idx[i:i + batch_size] for i in range(0, n_traj, batch_size)]


def run_ensemble(spec: SystemSpec, grid: TimeGrid, n_traj: int, master_seed: int, analysis: Analysis,
                 readout: int = 0, *, workers: Optional[int] = None, batch_size: int = 100,
                 output_constant=None, deterministic: bool = True, first_index: int = 0) -> EnsembleResult:
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(spec, grid, master_seed, b, readout, analysis, output_constant)
             for b in batches(n_traj, batch_size, first_index)]
    t0 = time.perf_counter()
    total = SpectralSums()
    if workers == 1 or len(tasks) == 1:
        for task in tasks:
            total.merge(_batch_task(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            if deterministic:
                for part in pool.map(_batch_task, tasks):
                    total.merge(part)
            else:
                futures = [pool.submit(_batch_task, t) for t in tasks]
                for fut in as_completed(futures):
                    total.merge(fut.result())
    for idx, msg in total.failed:
        log.error("batch with trajectories %d..%d failed: %s", idx[0], idx[-1], msg)
    if total.diverged:
        log.warning("%d of %d trajectories diverged and were excluded", len(total.diverged), n_traj)
    return EnsembleResult(spec, grid, readout, total, n_traj, time.perf_counter() - t0, output_constant)
