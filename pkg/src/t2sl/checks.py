"""Evaluate a preset's declared features against simulated ensembles."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from . import scenarios as sc
from .detection import RAW, SNU, Spectrum
from .ensemble import Analysis, EnsembleResult, run_ensemble
from .model import SystemSpec
from .propagator import TimeGrid, run_batch
from .qlt import qlt_heterodyne_target, qlt_output_spectra

log = logging.getLogger(__name__)


@dataclass
class FeatureResult:
    name: str
    passed: bool
    value: float = float("nan")
    error: float = float("nan")
    threshold: float = float("nan")
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: value={self.value:.4g} +/- {self.error:.2g} (threshold {self.threshold:.4g}) {self.detail}".rstrip()

    def as_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


@dataclass
class Comparison:
    """Simulated vs oracle curve on a common (rebinned) grid."""

    label: str
    freqs: np.ndarray
    sim: np.ndarray
    sim_se: np.ndarray
    oracle: np.ndarray
    band: np.ndarray

    @property
    def rms_rel(self) -> float:
        r = (self.sim[self.band] - self.oracle[self.band]) / self.oracle[self.band]
        return float(np.sqrt(np.mean(r ** 2)))

    @property
    def rms_rel_noise(self) -> float:
        """Expected RMS relative deviation from Monte-Carlo error alone."""
        r = self.sim_se[self.band] / self.oracle[self.band]
        return float(np.sqrt(np.mean(r ** 2)))


def _rebinned(freqs, values, k):
    return Spectrum(freqs, values, 1).rebin(k).values


def analysis_for(p: sc.ScenarioPreset, mechanical: bool = True, components: bool = False) -> Analysis:
    het = p.omega_het > 0
    bands = ()
    for f in p.features:
        if isinstance(f, sc.G2Scaling):
            w = p.omega_ref
            bands = tuple(((c - f.halfwidth) * w, (c + f.halfwidth) * w) for c in f.centres)
    het_thetas = tuple(sorted({float(f.theta) for f in p.features if isinstance(f, sc.HeterodyneMatch)}
                              | {float(t) for t in p.thetas}))
    quad = {float(t) for t in p.thetas}
    for f in p.features:
        quad |= {float(t) for t in getattr(f, "thetas", ())}
        if getattr(f, "trace", "quad") == "quad" and hasattr(f, "theta") and not isinstance(f, sc.HeterodyneMatch):
            quad.add(float(f.theta))
    return Analysis(
        thetas=tuple(sorted(quad)),
        field=True,
        components=components,
        mechanical=mechanical,
        omega_het=p.omega_het if het else 0.0,
        het_thetas=het_thetas,
        rhet=p.filter if het and p.filter.kind == "r-heterodyne" else None,
        bands=bands,
    )


def _with_coupling(spec: SystemSpec, **kw) -> SystemSpec:
    c = replace(spec.couplings[0], **kw)
    return replace(spec, couplings=(c,) + spec.couplings[1:])


def _with_detuning(spec: SystemSpec, detuning: float) -> SystemSpec:
    o = replace(spec.optical[0], detuning=detuning)
    return replace(spec, optical=(o,) + spec.optical[1:])


class Evaluator:
    """Runs the ensembles a preset's features need and scores them.

    Variant runs (parameter scans, g2 sweeps) reuse the trajectory seeds of
    the base run so that differences between them are measured with common
    random numbers.
    """

    def __init__(self, p: sc.ScenarioPreset, n_traj: Optional[int] = None, seed: int = 1,
                 workers: Optional[int] = None, batch_size: int = 100, deterministic: bool = True,
                 components: bool = False, output_constant=None):
        self.preset = p
        self.n_traj = int(n_traj or p.n_traj)
        self.seed = seed
        self.workers = workers
        self.batch_size = batch_size
        self.deterministic = deterministic
        self.output_constant = output_constant
        self.analysis = analysis_for(p, components=components)
        self._cache: Dict[SystemSpec, EnsembleResult] = {}
        self.comparisons: List[Comparison] = []

    def run(self, spec: Optional[SystemSpec] = None) -> EnsembleResult:
        spec = spec or self.preset.spec
        if spec not in self._cache:
            self._cache[spec] = run_ensemble(
                spec, self.preset.grid, self.n_traj, self.seed, self.analysis, self.preset.readout,
                workers=self.workers, batch_size=self.batch_size, deterministic=self.deterministic,
                output_constant=self.output_constant)
        return self._cache[spec]

    @property
    def base(self) -> EnsembleResult:
        return self.run()

    @property
    def runs(self) -> List[EnsembleResult]:
        return list(self._cache.values())

    def evaluate(self) -> List[FeatureResult]:
        out = []
        for f in self.preset.features:
            fn = getattr(self, "_" + f.kind.replace("-", "_"))
            res = fn(f)
            out.extend(res if isinstance(res, list) else [res])
        return out

    # -- helpers ---------------------------------------------------------

    def _trace(self, r: EnsembleResult, trace: str, theta: float, norm=SNU) -> Spectrum:
        return r.spectrum("quad", theta, norm) if trace == "quad" else r.spectrum("field", None, norm)

    def _band(self, freqs, band) -> np.ndarray:
        w = self.preset.omega_ref
        return (freqs >= band[0] * w) & (freqs <= band[1] * w)

    @staticmethod
    def _fill_dc(s: Spectrum) -> Spectrum:
        i = s.index_of(0.0)
        v = s.values.copy()
        se = None if s.stderr is None else s.stderr.copy()
        v[i] = 0.5 * (v[i - 1] + v[i + 1])
        if se is not None:
            se[i] = 0.5 * (se[i - 1] + se[i + 1])
        return Spectrum(s.freqs, v, s.n_avg, s.norm, se)

    @staticmethod
    def _peak(s: Spectrum, centre: float, half: float):
        m = s.band(centre - half, centre + half)
        idx = np.flatnonzero(m)
        i = idx[np.argmax(s.values[idx])]
        return i

    # -- features --------------------------------------------------------

    def _floor(self, f: sc.FloorLevel) -> FeatureResult:
        s = self.base.spectrum("field", None, SNU)
        mean = float(np.mean(s.values))
        err = float(np.sqrt(np.sum(s.stderr ** 2)) / len(s.values))
        # pooled error under the flat hypothesis: a bin's own sample error
        # shrinks with its value and would inflate downward deviations
        pooled = float(np.sqrt(np.mean(s.stderr ** 2)))
        z = np.abs(s.values - f.level) / pooled
        ok = abs(mean - f.level) < f.mean_tol and float(z.max()) < f.max_z
        return FeatureResult("shot-noise floor", ok, mean, err, f.mean_tol,
                             f"|mean-{f.level}|={abs(mean - f.level):.4f}, max z={z.max():.2f} (limit {f.max_z})")

    def qlt_comparison(self, theta: float, k: int = 8, band=(0.5, 1.5)) -> Comparison:
        r = self.base
        s = r.spectrum("quad", theta, SNU)
        q = qlt_output_spectra(r.spec, theta, s.freqs, r.readout)
        oracle = q.quadrature(theta) / q.quadrature_floor
        sr = s.rebin(k)
        return Comparison(f"homodyne theta={theta:.4f}", sr.freqs, sr.values, sr.stderr,
                          _rebinned(s.freqs, oracle, k), self._band(sr.freqs, band))

    def _qlt_match(self, f: sc.QltMatch) -> List[FeatureResult]:
        out = []
        for th in f.thetas:
            c = self.qlt_comparison(th, f.rebin, f.band)
            self.comparisons.append(c)
            out.append(FeatureResult(f"QLT match theta={th:.4f}", c.rms_rel < f.rms_tol, c.rms_rel,
                                     c.rms_rel_noise, f.rms_tol, "RMS relative deviation; error = noise-only RMS"))
        return out

    def _sub_floor(self, f: sc.SubFloor) -> FeatureResult:
        best = None
        for th in f.thetas:
            c = self.qlt_comparison(th, f.rebin, f.band)
            j = np.flatnonzero(c.band)[np.argmin(c.oracle[c.band])]
            if best is None or c.oracle[j] < best[0]:
                best = (c.oracle[j], c.sim[j], c.sim_se[j], th, c.freqs[j])
        q, s, se, th, w = best
        ok = q < 1 and s < 1 and abs(s - q) < f.n_se * se
        return FeatureResult("sub-floor squeezing", bool(ok), s, se, 1.0,
                             f"at omega={w / self.preset.omega_ref:.4f} omega_m theta={th:.4f}: QLT={q:.4f}, "
                             f"T2SL={s:.4f}, |diff|/se={abs(s - q) / se:.2f} (limit {f.n_se})")

    def heterodyne_comparison(self, theta: float, k: int = 8, band=(0.5, 1.5)) -> Comparison:
        r = self.base
        p = self.preset
        s = r.spectrum("rhet", theta, RAW)
        target = qlt_heterodyne_target(r.spec, (theta + p.filter.demod_phase) % (2 * math.pi),
                                       p.omega_het, s.freqs, r.readout)
        sr = s.rebin(k)
        return Comparison(f"r-heterodyne theta={theta:.4f}", sr.freqs, sr.values, sr.stderr,
                          _rebinned(s.freqs, target, k), self._band(sr.freqs, band))

    def _heterodyne_match(self, f: sc.HeterodyneMatch) -> FeatureResult:
        c = self.heterodyne_comparison(f.theta, f.rebin, f.band)
        self.comparisons.append(c)
        return FeatureResult("r-heterodyne vs target", c.rms_rel < f.rms_tol, c.rms_rel, c.rms_rel_noise,
                             f.rms_tol, "RMS relative deviation; error = noise-only RMS")

    def _locate(self, f, r: EnsembleResult, pos: float):
        s = self._trace(r, f.trace, f.theta)
        if getattr(f, "exclude_dc", False):
            s = self._fill_dc(s)
        w = self.preset.omega_ref
        i = self._peak(s, pos * w, f.search * w)
        return s, i

    def _peaks(self, f: sc.Peaks) -> List[FeatureResult]:
        out = []
        w = self.preset.omega_ref
        for pos in f.positions:
            s, i = self._locate(f, self.base, pos)
            off = abs(s.freqs[i] - pos * w) / s.bin_width
            flank_idx = [s.index_of((pos - 2 * f.search) * w), s.index_of((pos + 2 * f.search) * w)]
            flank = max(s.values[flank_idx])
            prom = (s.values[i] - flank) / s.stderr[i]
            ok = off <= f.tol_bins + 1e-9 and prom > 3.0
            out.append(FeatureResult(f"peak at {pos:+.3f} omega_m", bool(ok), s.freqs[i] / w,
                                     s.bin_width / w, f.tol_bins,
                                     f"offset {off:.1f} bins (limit {f.tol_bins}); prominence {prom:.1f} se"))
        return out

    def _splitting(self, f: sc.Splitting) -> FeatureResult:
        w = self.preset.omega_ref
        s, i = self._locate(f, self.base, f.lower)
        _, j = self._locate(f, self.base, f.upper)
        split = s.freqs[j] - s.freqs[i]
        off = abs(split - (f.upper - f.lower) * w) / s.bin_width
        return FeatureResult("sideband splitting", off <= f.tol_bins + 1e-9, split / w, s.bin_width / w,
                             (f.upper - f.lower), f"expected {(f.upper - f.lower):.4f} omega_m, off by {off:.1f} bins")

    def _peak_dominance(self, f: sc.PeakDominance) -> FeatureResult:
        w = self.preset.omega_ref
        s = self._trace(self.base, f.trace, f.theta)
        if f.exclude_dc:
            s = self._fill_dc(s)
        i = self._peak(s, f.strong * w, f.halfwidth * w)
        j = self._peak(s, f.weak * w, f.halfwidth * w)
        hi, lo = s.values[i], s.values[j]
        se = math.hypot(s.stderr[i], s.stderr[j])
        ok = hi - lo > f.n_se * se and lo - 1.0 > f.n_se * s.stderr[j]
        return FeatureResult(f"peak {f.strong:g} omega_m above peak {f.weak:g} omega_m", bool(ok), hi / lo, se / lo,
                             1.0, f"heights {hi:.3f} and {lo:.3f} (shot-noise units)")

    def _modulation_scan(self, f: sc.ModulationScan) -> FeatureResult:
        base = self.preset.spec
        mod = base.modulation
        heights, errs = [], []
        for r in f.ratios:
            spec = replace(base, modulation=replace(mod, omega_2=r * mod.omega_d))
            s, i = self._locate(f, self.run(spec), f.position)
            heights.append(float(s.values[i]))
            errs.append(float(s.stderr[i]))
        h, e = np.array(heights), np.array(errs)

        def below(a, b):
            return h[b] + f.n_se * math.hypot(e[a], e[b]) < h[a]

        ok = any(below(i, j) and below(k, j) for i, j, k in itertools.combinations(range(len(h)), 3))
        jmin = int(np.argmin(h))
        pairs = ", ".join(f"{r:g}:{v:.3f}" for r, v in zip(f.ratios, h))
        return FeatureResult("omega_m+omega_d peak suppressed then recovers", bool(ok), h[jmin], e[jmin],
                             float("nan"), f"height by omega_2/omega_d = {{{pairs}}}")

    def _mech_symmetry(self, f: sc.MechSymmetry) -> List[FeatureResult]:
        out = []
        for r in self.runs or [self.base]:
            for k in range(r.spec.n_mechanical):
                s = r.spectrum("mech", k).trimmed()
                v, se = s.values, s.stderr
                diff = np.abs(v - v[::-1])
                comb = np.hypot(se, se[::-1])
                worst = float(np.max(diff / np.where(comb > 0, comb, np.inf)))
                ok = bool(np.all(diff <= f.n_se * comb + 1e-12 * np.abs(v)))
                out.append(FeatureResult(f"mechanical spectrum symmetric (mode {k}, spec {r.spec.fingerprint()})",
                                         ok, worst, float("nan"), f.n_se, "max |S(w)-S(-w)| / se"))
        return out

    def _no_divergence(self, f: sc.NoDivergence) -> FeatureResult:
        runs = self.runs or [self.base]
        bad = sorted({i for r in runs for i, _ in r.diverged})
        detail = f"across {len(runs)} run(s)" + (f"; diverged trajectories: {bad[:20]}" if bad else "")
        return FeatureResult("no diverged trajectories", not bad, len(bad), float("nan"), 0, detail)

    def _g2_scaling(self, f: sc.G2Scaling) -> List[FeatureResult]:
        p = self.preset
        w = p.omega_ref
        bands = [((c - f.halfwidth) * w, (c + f.halfwidth) * w) for c in f.centres]
        ga, gb = f.g2_values
        expect = (gb / ga) ** 2
        out = []
        dominant = []
        for dt_ in f.detunings:
            s0 = _with_detuning(p.spec, dt_)
            runs = [self.run(_with_coupling(s0, g2=g)) for g in (0.0, ga, gb)]
            common = set(runs[0].sums.indices)
            for r in runs[1:]:
                common &= set(r.sums.indices)
            common = sorted(common)
            best = None
            for c, band in zip(f.centres, bands):
                P = []
                for r in runs:
                    pos = {i: n for n, i in enumerate(r.sums.indices)}
                    vals = r.sums.band_powers(band)
                    P.append(np.array([vals[pos[i]] for i in common]))
                d1, d2 = P[1] - P[0], P[2] - P[0]
                n = len(common)
                m1, m2 = d1.mean(), d2.mean()
                cov = np.cov(np.vstack([d1, d2])) / n
                if best is None or m2 > best[1]:
                    best = (c, m2, m1, cov)
            c, m2, m1, cov = best
            dominant.append(c)
            R = m2 / m1
            var = (cov[1, 1] + R * R * cov[0, 0] - 2 * R * cov[0, 1]) / (m1 * m1)
            sR = math.sqrt(max(var, 0.0))
            sig = m2 / math.sqrt(cov[1, 1])
            out.append(FeatureResult(f"g2 feature present at detuning {dt_:g}", bool(sig > f.n_se), m2,
                                     math.sqrt(cov[1, 1]), f.n_se,
                                     f"dominant band at {c:g} omega_m, significance {sig:.1f} se"))
            out.append(FeatureResult(f"g2^2 scaling at detuning {dt_:g}", bool(abs(R - expect) < f.n_se * sR), R, sR,
                                     expect, f"excess ratio for g2 {ga:g} -> {gb:g}; |R-{expect:g}|/se = "
                                     f"{abs(R - expect) / sR if sR > 0 else float('inf'):.2f} (limit {f.n_se})"))
        distinct = len(set(dominant)) == len(dominant)
        out.append(FeatureResult("g2 feature structure depends on detuning", distinct, len(set(dominant)),
                                 float("nan"), len(dominant), f"dominant bands {dominant}"))
        return out


@dataclass
class PairingWitness:
    value: complex
    stderr: float
    target: float

    @property
    def z(self) -> float:
        return abs(self.value.real - self.target) / self.stderr


def pairing_covariance(spec: SystemSpec, grid: TimeGrid, n_traj: int, seed: int = 1, readout: int = 0,
                       paired: bool = True, batch_size: int = 100, output_constant=None) -> PairingWitness:
    """Ensemble covariance <a_out(t_j) dW_j*> against (C - sqrt(kappa)) kappa (n_p + 1/2) dt.

    Each trajectory contributes its time average over j; the error bar is
    the spread of those averages across trajectories.
    """
    per_traj = []
    C = None
    for start in range(0, n_traj, batch_size):
        idx = range(start, min(n_traj, start + batch_size))
        rec = run_batch(spec, grid, seed, idx, readout, full=True, paired=paired, output_constant=output_constant)
        C = rec.output_constant
        w = rec.kicks[:, :, readout]
        per_traj.append(np.mean(rec.a_out * np.conj(w), axis=1)[rec.ok])
    v = np.concatenate(per_traj)
    m = spec.optical[readout]
    target = (C - math.sqrt(m.kappa)) * m.kappa * (m.n_occ + 0.5) * grid.coarse_step
    se = float(np.sqrt(np.var(v.real, ddof=1) / len(v)))
    return PairingWitness(complex(v.mean()), se, float(target))
