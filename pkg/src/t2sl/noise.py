"""Coarse-grid Gaussian kicks from reproducible, splittable random streams.

Each trajectory owns a Philox stream keyed by (master_seed, trajectory_index)
through ``numpy.random.SeedSequence``.  A kick for mode k is

    dW_k = sqrt(rate_k (n_k + 1/2)) * zeta_k,   <zeta zeta*> = dt,

with independent real and imaginary parts of variance dt/2 each.
"""

from __future__ import annotations

import numpy as np

from .model import SystemSpec


class NoiseStream:
    """Deterministic kick source for one trajectory.

    ``counter`` is the index of the next kick; drawing in blocks or one kick
    at a time yields the same sequence bit for bit.
    """

    def __init__(self, master_seed: int, trajectory_index: int):
        self.master_seed = int(master_seed)
        self.trajectory_index = int(trajectory_index)
        self.counter = 0
        seq = np.random.SeedSequence(self.master_seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(self.trajectory_index,))
        self._gen = np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"NoiseStream(seed={self.master_seed}, index={self.trajectory_index}, counter={self.counter})"

    def standard(self, n: int, n_mod: int) -> np.ndarray:
        """Next ``n`` unit complex Gaussians per mode, shape (n, n_mod), <|z|^2> = 1."""
        z = self._gen.standard_normal((n, 2 * n_mod))
        self.counter += n
        return (z[:, 0::2] + 1j * z[:, 1::2]) * np.sqrt(0.5)


def fork_stream(master_seed: int, trajectory_index: int) -> NoiseStream:
    return NoiseStream(master_seed, trajectory_index)


def kick_scale(spec: SystemSpec, dt_coarse: float) -> np.ndarray:
    """Per-mode amplitude sqrt(rate (n + 1/2) dt) multiplying a unit complex Gaussian."""
    return np.sqrt(spec.rates() * (spec.occupancies() + 0.5) * dt_coarse)


def draw_kicks(stream: NoiseStream, spec: SystemSpec, dt_coarse: float, n: int) -> np.ndarray:
    """Block of ``n`` consecutive kick vectors, shape (n, n_mod)."""
    if dt_coarse <= 0:
        raise ValueError("coarse step must be positive")
    return stream.standard(n, spec.n_mod) * kick_scale(spec, dt_coarse)


def draw_kick(stream: NoiseStream, spec: SystemSpec, dt_coarse: float) -> np.ndarray:
    return draw_kicks(stream, spec, dt_coarse, 1)[0]
