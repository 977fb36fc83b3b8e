"""Figures for a finished run, rendered off-screen to PNG files."""

from __future__ import annotations

import os
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def spectrum_figure(path: str, w_ref: float, curves: List[Dict], title: str, ylabel: str,
                    xlim: Optional[tuple] = None, floor: Optional[float] = None, logy: bool = False) -> str:
    """Each curve is a dict with freqs, values, optional stderr, label and style."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for c in curves:
        x = np.asarray(c["freqs"]) / w_ref
        y = np.asarray(c["values"])
        style = c.get("style", "-")
        ax.plot(x, y, style, lw=1.0, label=c.get("label"))
        se = c.get("stderr")
        if se is not None:
            ax.fill_between(x, y - se, y + se, alpha=0.25, lw=0)
    if floor is not None:
        ax.axhline(floor, color="0.4", lw=0.8, ls=":")
    if xlim:
        ax.set_xlim(*xlim)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(r"$\omega/\omega_M$")
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    if any(c.get("label") for c in curves):
        ax.legend(fontsize=8)
    return _save(fig, path)


def render_run(outdir: str, report, ev, cfg) -> List[str]:
    """All figures for a run; returns written paths."""
    from .detection import SNU

    os.makedirs(outdir, exist_ok=True)
    r = ev.base
    w = cfg.preset.omega_ref
    lim = (-3.0, 3.0)
    paths = []
    for th in cfg.preset.thetas:
        s = r.spectrum("quad", th, SNU)
        curves = [dict(freqs=s.freqs, values=s.values, label="T2SL")]
        for c in ev.comparisons:
            if c.label == f"homodyne theta={th:.4f}":
                curves.append(dict(freqs=c.freqs, values=c.oracle, label="QLT", style="k--"))
        paths.append(spectrum_figure(os.path.join(outdir, f"psd_quad_theta{th:.4f}.png"), w, curves,
                                     f"{cfg.scenario}: homodyne, theta={th:.4f}", "PSD (shot-noise units)",
                                     lim, floor=1.0, logy=True))
    for c in ev.comparisons:
        if c.label.startswith("r-heterodyne"):
            curves = [dict(freqs=c.freqs, values=c.sim, stderr=c.sim_se, label="filtered"),
                      dict(freqs=c.freqs, values=c.oracle, label="target", style="k--")]
            paths.append(spectrum_figure(os.path.join(outdir, "rheterodyne.png"), w, curves,
                                         f"{cfg.scenario}: {c.label}", "PSD", lim, logy=True))
    for k in range(r.spec.n_mechanical):
        key = ("mech", k)
        if key in r.sums.sums:
            s = r.spectrum("mech", k)
            paths.append(spectrum_figure(os.path.join(outdir, f"mech_spectrum_{k}.png"), w,
                                         [dict(freqs=s.freqs, values=s.values)],
                                         f"{cfg.scenario}: mechanical mode {k}", r"$S_{xx}$", lim, logy=True))
    return paths
