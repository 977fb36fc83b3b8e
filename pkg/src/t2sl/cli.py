"""Command-line batch runner: config -> ensembles -> spectra files and a report.

Exit status: 0 when every declared feature passes, 1 when any fails,
2 for usage/config errors and 3 when trajectory batches crashed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from . import scenarios as sc
from .checks import Evaluator, FeatureResult
from .config import ConfigError, RunConfig, dump_config, load_config, parse_config
from .detection import RAW, SNU, FilterSpec, Spectrum
from .ensemble import WORKERS_ENV
from .model import SpecError
from .qlt import qlt_output_spectra

log = logging.getLogger("t2sl")

EXIT_FEATURE = 1
EXIT_USAGE = 2
EXIT_WORKER = 3


@dataclass
class RunReport:
    scenario: str
    spec_hash: str
    n_requested: int
    n_completed: int
    diverged: list
    failed: list
    wall_time: float
    master_seed: int
    comparisons: List[dict] = field(default_factory=list)
    features: List[FeatureResult] = field(default_factory=list)
    files: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.features)

    @property
    def exit_code(self) -> int:
        if self.failed:
            return EXIT_WORKER
        return 0 if self.passed else EXIT_FEATURE

    def to_text(self) -> str:
        out = [
            f"scenario          {self.scenario} (spec {self.spec_hash})",
            f"master seed       {self.master_seed}",
            f"trajectories      {self.n_completed} completed of {self.n_requested}; "
            f"{len(self.diverged)} diverged; {sum(len(i) for i, _ in self.failed)} in failed batches",
            f"wall time         {self.wall_time:.1f} s",
        ]
        if self.diverged:
            out.append("diverged          " + ", ".join(f"{i}@{s}" for i, s in self.diverged[:50]))
        for idx, msg in self.failed:
            out.append(f"failed batch      trajectories {idx[0]}..{idx[-1]}: {msg}")
        if self.comparisons:
            out.append("")
            out.append("comparisons (RMS relative deviation; noise-only level scales as 1/sqrt(n_traj))")
            for c in self.comparisons:
                out.append(f"  {c['label']:<28} rms={c['rms_rel']:.4f}  noise={c['rms_noise']:.4f}")
        out.append("")
        out.append("features")
        for f in self.features:
            out.append("  " + f.line())
        out.append("")
        out.append("RESULT " + ("PASS" if self.passed and not self.failed else "FAIL"))
        return "\n".join(out) + "\n"

    def to_json(self) -> str:
        d = {
            "scenario": self.scenario, "spec_hash": self.spec_hash, "master_seed": self.master_seed,
            "n_requested": self.n_requested, "n_completed": self.n_completed,
            "diverged": [list(x) for x in self.diverged],
            "failed": [{"trajectories": i, "error": m} for i, m in self.failed],
            "wall_time": self.wall_time, "comparisons": self.comparisons,
            "features": [f.as_dict() for f in self.features], "files": self.files,
            "passed": self.passed,
        }
        return json.dumps(d, indent=2, default=float)


# ---------------------------------------------------------------------------
# spectra files


def fold_one_sided(s: Spectrum) -> Spectrum:
    """omega >= 0 half; each bin is the mean of the +omega and -omega bins."""
    t = s.trimmed()
    n = len(t.freqs)
    pos = np.arange(n // 2, n)
    neg = n - 1 - pos
    v = 0.5 * (t.values[pos] + t.values[neg])
    se = None if t.stderr is None else 0.5 * np.hypot(t.stderr[pos], t.stderr[neg])
    return Spectrum(t.freqs[pos], v, t.n_avg, t.norm, se)


def write_spectrum(path: str, freqs, values, n_avg: int, norm: str, w_ref: float, note: str = "") -> str:
    freqs = np.asarray(freqs) / w_ref
    values = np.real(np.asarray(values))
    with open(path, "w") as fh:
        fh.write(f"# norm={norm}; omega in units of omega_m={w_ref!r}" + (f"; {note}" if note else "") + "\n")
        fh.write("omega,psd,n_avg\n")
        for f, v in zip(freqs, values):
            fh.write(f"{float(f)!r},{float(v)!r},{n_avg}\n")
    return path


def write_components(path: str, comp, w_ref: float) -> str:
    with open(path, "w") as fh:
        fh.write(f"# norm={RAW}; omega in units of omega_m={w_ref!r}; S_aa is complex\n")
        fh.write("omega,S_aadag,S_adaga,S_aa_re,S_aa_im,n_avg\n")
        for f, a, b, c in zip(comp.freqs / w_ref, comp.S_aadag, comp.S_adaga, comp.S_aa):
            fh.write(f"{float(f)!r},{float(a)!r},{float(b)!r},{float(c.real)!r},{float(c.imag)!r},{comp.n_avg}\n")
    return path


def _qlt_capable(spec) -> bool:
    try:
        qlt_output_spectra(spec, 0.0, np.zeros(1))
        return True
    except SpecError:
        return False


def run(cfg: RunConfig) -> RunReport:
    """Execute a configured run; writes spectra and the report into ``cfg.output_dir``."""
    p = cfg.preset
    flags = cfg.flags
    os.makedirs(cfg.output_dir, exist_ok=True)
    t0 = time.perf_counter()
    ev = Evaluator(p, cfg.n_traj, cfg.master_seed, cfg.workers, cfg.batch_size, flags.deterministic_reduce,
                   components=flags.components, output_constant=cfg.output_constant)
    features = ev.evaluate()
    base = ev.base

    if flags.qlt_compare and _qlt_capable(base.spec):
        have = {c.label for c in ev.comparisons}
        for th in p.thetas:
            c = ev.qlt_comparison(th)
            if c.label not in have:
                ev.comparisons.append(c)
        if p.omega_het > 0 and p.filter.kind == "r-heterodyne":
            for th in p.thetas:
                c = ev.heterodyne_comparison(th)
                if c.label not in have:
                    ev.comparisons.append(c)
    elif flags.qlt_compare:
        log.warning("QLT comparison skipped: spec is modulated, nonlinear or unstable")

    files = []
    w = p.omega_ref
    out = cfg.output_dir
    meta = f"scenario={p.name}; n_traj={base.n_ok}; seed={cfg.master_seed}"

    def emit(name, s: Spectrum):
        if flags.one_sided:
            s = fold_one_sided(s)
        files.append(write_spectrum(os.path.join(out, name), s.freqs, s.values, s.n_avg, s.norm, w,
                                    meta + ("; one-sided" if flags.one_sided else "")))

    emit("psd_field.csv", base.spectrum("field", None, SNU))
    for th in p.thetas:
        emit(f"psd_quad_theta{th:.4f}.csv", base.spectrum("quad", th, SNU))
    for key in base.keys():
        if key[0] in ("het", "rhet"):
            emit(f"psd_{key[0]}_theta{key[1]:.4f}.csv", base.spectrum(key[0], key[1], RAW))
    if flags.mechanical_spectrum:
        for k in range(base.spec.n_mechanical):
            emit(f"mech_spectrum_{k}.csv", base.spectrum("mech", k))
    if flags.components:
        files.append(write_components(os.path.join(out, "components.csv"), base.components(), w))
    for c in ev.comparisons:
        tag = "qlt" if c.label.startswith("homodyne") else "target"
        th = c.label.split("theta=")[-1]
        norm = SNU if tag == "qlt" else RAW
        files.append(write_spectrum(os.path.join(out, f"{tag}_theta{th}.csv"), c.freqs, c.oracle, 0, norm, w,
                                    f"oracle curve on the {len(c.freqs)}-bin comparison grid"))

    report = RunReport(
        scenario=p.name, spec_hash=base.spec.fingerprint(), n_requested=cfg.n_traj, n_completed=base.n_ok,
        diverged=base.diverged, failed=[f for r in ev.runs for f in r.failed],
        wall_time=time.perf_counter() - t0, master_seed=cfg.master_seed,
        comparisons=[{"label": c.label, "rms_rel": c.rms_rel, "rms_noise": c.rms_rel_noise} for c in ev.comparisons],
        features=features,
    )
    if flags.plots:
        from .plotting import render_run

        report.files.extend(render_run(os.path.join(out, "plots"), report, ev, cfg))
    report.files = files + report.files
    with open(os.path.join(out, "config.toml"), "w") as fh:
        fh.write(dump_config(cfg))
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(report.to_text())
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(report.to_json())
    return report


# ---------------------------------------------------------------------------
# argument handling


_ANGLE = re.compile(r"^([-+]?)((?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)?\s*\*?\s*(pi)?\s*(?:/\s*(\d+\.?\d*))?$")


def _floats(text: str) -> List[float]:
    """Comma-separated angles such as ``0, pi/8, 3pi/8, 0.4``."""
    vals = []
    for tok in text.split(","):
        m = _ANGLE.match(tok.strip().lower())
        if not m or not (m.group(2) or m.group(3)):
            raise ValueError(f"cannot parse angle {tok.strip()!r}")
        sign, num, pi, den = m.groups()
        v = float(num) if num else 1.0
        if pi:
            v *= math.pi
        if den:
            v /= float(den)
        vals.append(-v if sign == "-" else v)
    return vals


def _filter(text: str) -> FilterSpec:
    parts = text.split(":")
    if parts[0] == "none":
        return FilterSpec()
    if parts[0] != "r-heterodyne":
        raise argparse.ArgumentTypeError("filter must be 'none' or 'r-heterodyne[:cutoff[:phase]]'")
    cutoff = float(parts[1]) if len(parts) > 1 else 0.0
    phase = float(parts[2]) if len(parts) > 2 else 0.0
    return FilterSpec("r-heterodyne", phase, cutoff)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="t2sl", description="Two-timescale stochastic Langevin ensembles.")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--scenario", choices=sc.PRESET_NAMES, help="preset name")
    src.add_argument("--config", help="scenario config file (TOML)")
    ap.add_argument("--ntraj", type=int, help="number of trajectories")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    ap.add_argument("--outdir", help="output directory")
    ap.add_argument("--theta-sweep", help="comma-separated homodyne phases, e.g. 0,pi/8,pi/4")
    ap.add_argument("--heterodyne", type=float, metavar="OMEGA", help="heterodyne offset frequency")
    ap.add_argument("--filter", type=_filter, help="none | r-heterodyne[:cutoff[:demod_phase]]")
    ap.add_argument("--qlt-compare", action="store_true", help="compare with the linear oracle")
    ap.add_argument("--components", action="store_true", help="write S_aadag, S_adaga, S_aa")
    ap.add_argument("--mech-spectrum", action="store_true", help="write mechanical position spectra")
    red = ap.add_mutually_exclusive_group()
    red.add_argument("--deterministic-reduce", dest="deterministic", action="store_true", default=None,
                     help="fixed reduction order (bit-identical output; default)")
    red.add_argument("--free-reduce", dest="deterministic", action="store_false",
                     help="reduce batches as they finish")
    ap.add_argument("--one-sided", action="store_true", help="fold spectra to omega >= 0")
    ap.add_argument("--plots", action="store_true", help="also render PNG figures")
    ap.add_argument("--output-constant", help="'paper', 'calibrated' or a number")
    ap.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    ap.add_argument("--list", action="store_true", help="list presets and exit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def config_from_args(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = parse_config(f'scenario = "{args.scenario or "decoupled_floor"}"\n')
    p = cfg.preset
    if args.theta_sweep:
        p = replace(p, thetas=tuple(t % (2 * math.pi) for t in _floats(args.theta_sweep)))
    if args.heterodyne is not None:
        p = replace(p, omega_het=args.heterodyne)
    if args.filter is not None:
        filt = args.filter
        if filt.kind == "r-heterodyne" and filt.lowpass_cutoff == 0.0:
            filt = replace(filt, lowpass_cutoff=0.5 * (p.omega_het or p.filter.lowpass_cutoff * 2))
        p = replace(p, filter=filt)
    flags = cfg.flags
    flags = replace(flags,
                    qlt_compare=flags.qlt_compare or args.qlt_compare,
                    components=flags.components or args.components,
                    mechanical_spectrum=flags.mechanical_spectrum or args.mech_spectrum,
                    one_sided=flags.one_sided or args.one_sided,
                    plots=flags.plots or args.plots,
                    deterministic_reduce=flags.deterministic_reduce if args.deterministic is None else args.deterministic)
    oc = cfg.output_constant
    if args.output_constant:
        oc = args.output_constant if args.output_constant in ("paper", "calibrated") else float(args.output_constant)
    cfg = replace(cfg, preset=p, flags=flags, output_constant=oc,
                  n_traj=args.ntraj if args.ntraj is not None else cfg.n_traj,
                  master_seed=args.seed if args.seed is not None else cfg.master_seed,
                  workers=args.workers if args.workers is not None else cfg.workers,
                  output_dir=args.outdir or cfg.output_dir)
    # re-validate the combined result through the config parser
    return parse_config(dump_config(cfg))


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        for name in sc.PRESET_NAMES:
            q = sc.preset(name)
            print(f"{name:<26} n_traj={q.n_traj:<6} {q.regime}")
        return 0
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"t2sl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return 0
    report = run(cfg)
    sys.stdout.write(report.to_text())
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
