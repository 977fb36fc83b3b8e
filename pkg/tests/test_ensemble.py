import numpy as np
import pytest

import t2sl.ensemble as ens
from t2sl.ensemble import Analysis, SpectralSums, batches, default_workers, run_ensemble
from t2sl.propagator import TimeGrid

from helpers import simple_spec

SPEC = simple_spec(detuning=-1.0, g1=0.2, n_m=1.0)
GRID = TimeGrid.from_samples(256, 0.05, 2, transient=5.0)
AN = Analysis(thetas=(0.0, np.pi / 2), components=True, omega_het=20.0, het_thetas=(0.0,))


def test_batches_cover_indices():
    b = batches(10, 4, start=3)
    assert b == [[3, 4, 5, 6], [7, 8, 9, 10], [11, 12]]


def test_worker_count_does_not_change_results():
    one = run_ensemble(SPEC, GRID, 12, 5, AN, workers=1, batch_size=4)
    two = run_ensemble(SPEC, GRID, 12, 5, AN, workers=2, batch_size=4)
    assert one.keys() == two.keys()
    for k in one.keys():
        assert np.array_equal(one.sums.sums[k], two.sums.sums[k])


def test_batching_and_reduction_order_agree_closely():
    ref = run_ensemble(SPEC, GRID, 12, 5, AN, batch_size=4)
    other = run_ensemble(SPEC, GRID, 12, 5, AN, batch_size=5)
    free = run_ensemble(SPEC, GRID, 12, 5, AN, workers=2, batch_size=3, deterministic=False)
    for r in (other, free):
        for k in ref.keys():
            assert np.allclose(ref.sums.sums[k], r.sums.sums[k], rtol=1e-10, atol=1e-12)


def test_spectra_and_floors():
    r = run_ensemble(SPEC, GRID, 8, 2, AN)
    assert r.n_ok == 8 and r.diverged == [] and r.failed == []
    assert r.floor("field") == 0.5 and r.floor("quad") == 1.0 and r.floor("rhet") == 2.0
    s = r.spectrum("quad", 0.0, "shot-noise-unit")
    assert s.norm == "shot-noise-unit" and len(s.values) == 256 and s.n_avg == 8
    c = r.components()
    assert np.allclose(c.quadrature(np.pi / 2).real, r.spectrum("quad", np.pi / 2).values, rtol=1e-9)
    assert r.spectrum("mech", 0).values.shape == (256,)
    with pytest.raises(KeyError):
        r.spectrum("quad", 1.0)


def test_failed_batch_is_reported_and_others_kept(monkeypatch, caplog):
    real = ens.run_batch

    def flaky(spec, grid, seed, indices, *a, **kw):
        if 4 in indices:
            raise RuntimeError("boom")
        return real(spec, grid, seed, indices, *a, **kw)

    monkeypatch.setattr(ens, "run_batch", flaky)
    r = run_ensemble(SPEC, GRID, 12, 5, AN, workers=1, batch_size=4)
    assert r.n_ok == 8
    assert r.failed == [([4, 5, 6, 7], "RuntimeError: boom")]
    assert "failed" in caplog.text


def test_standard_error_scales_with_ensemble_size():
    small = run_ensemble(SPEC, GRID, 100, 3, Analysis(thetas=(0.0,)))
    big = run_ensemble(SPEC, GRID, 400, 3, Analysis(thetas=(0.0,)))
    ratio = np.median(small.spectrum("quad", 0.0).stderr / big.spectrum("quad", 0.0).stderr)
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_band_powers_are_per_trajectory():
    an = Analysis(thetas=(), bands=((-1.0, 1.0),))
    r = run_ensemble(SPEC, GRID, 6, 1, an, batch_size=4)
    bp = r.sums.band_powers((-1.0, 1.0))
    assert bp.shape == (6,) and (bp > 0).all()
    assert list(r.sums.indices) == list(range(6))


def test_merge_accumulates():
    a, b = SpectralSums(), SpectralSums()
    a.add(("x",), np.ones((2, 3)))
    b.add(("x",), 2 * np.ones((1, 3)))
    a.count, b.count = 2, 1
    a.merge(b)
    assert a.count == 3 and np.allclose(a.mean(("x",)), 4 / 3)
    assert np.allclose(a.stderr(("x",)), np.sqrt((6 - 3 * (4 / 3) ** 2) / 2 / 3))


def test_workers_env(monkeypatch):
    monkeypatch.setenv("T2SL_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("T2SL_WORKERS", "lots")
    assert default_workers() == 1


def test_rejects_empty_ensemble():
    with pytest.raises(ValueError):
        run_ensemble(SPEC, GRID, 0, 1, AN)
