import numpy as np
import pytest

from conftest import smooth_image
from jointrecon.dtv import make_context
from jointrecon.errors import ParamError, ScheduleError
from jointrecon.fidelity import Fidelity
from jointrecon.grid import Grid, ImageGrid
from jointrecon.operators import FourierSampling, Radon
from jointrecon.palm import PalmConfig, PalmState, Problem, palm_run
from jointrecon.scalespace import (
    ScaleSchedule,
    SolverSettings,
    downsample_image,
    resample_image,
    run_scalespace,
    upsample_image,
)
from jointrecon.warp import affine_field, warp


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        ScaleSchedule((16, 16), (2.0, 1.0))
    with pytest.raises(ScheduleError):
        ScaleSchedule((16, 32), (1.0, 2.0))
    with pytest.raises(ScheduleError):
        ScaleSchedule((), ())
    with pytest.raises(ScheduleError):
        ScaleSchedule((16,), (0.0,))
    s = ScaleSchedule.halvings(72, 4, 30.0, 10.0)
    assert s.resolutions == (9, 18, 36, 72)
    assert np.allclose(s.alphas, (30000, 3000, 300, 30))
    assert s.last(2).resolutions == (36, 72) and len(s) == 4


def test_checkerboard_downsamples_to_half():
    n = 8
    cb = (np.indices((n, n)).sum(axis=0) % 2).astype(float)
    small = downsample_image(ImageGrid.standard(cb), 4)
    assert np.allclose(small.values, 0.5)


def test_constants_survive_resampling():
    c = ImageGrid.standard(np.full((12, 12), 3.0))
    assert np.allclose(downsample_image(c, 6).values, 3.0)
    assert np.allclose(upsample_image(c, 24).values, 3.0)
    assert np.allclose(upsample_image(downsample_image(c, 6), 12).values, 3.0)


def test_downsample_preserves_mean(rng):
    v = ImageGrid.standard(rng.standard_normal((18, 18)))
    assert np.isclose(downsample_image(v, 9).values.mean(), v.values.mean())
    assert np.isclose(downsample_image(v, 7).values.mean(), v.values.mean())


def test_direction_errors(rng):
    v = ImageGrid.standard(rng.standard_normal((8, 8)))
    with pytest.raises(ParamError):
        downsample_image(v, 16)
    with pytest.raises(ParamError):
        upsample_image(v, 4)
    assert resample_image(v, 8) is v


def radon_problem(n, rng, theta=0.0):
    g = Grid.standard(n)
    u = np.abs(smooth_image(n, rng))
    v = ImageGrid(u.copy(), g)
    moved = warp(v, affine_field([np.cos(theta) - 1, -np.sin(theta), np.sin(theta), np.cos(theta) - 1, 0, 0], g))
    op = Radon.equispaced(g, 16, 24)
    return op, op.apply(moved.values), v


def test_single_stage_equals_palm_run(rng):
    op, f, v = radon_problem(16, rng)
    cfg = PalmConfig(iterations=15)
    settings = SolverSettings(palm=cfg, start="zero", nonneg=False)
    res = run_scalespace(f, op, v, ScaleSchedule((16,), (0.05,)), settings)
    ctx = make_context(v.values, 0.05)
    state = PalmState(u=np.zeros((16, 16)), phi=np.zeros(6))
    palm_run(state, Problem(op, Fidelity("l2", f), ctx), cfg)
    assert np.array_equal(res.u.values, state.u)
    assert np.array_equal(res.phi, state.phi)


def test_last_resolution_must_match(rng):
    op, f, v = radon_problem(16, rng)
    with pytest.raises(ScheduleError):
        run_scalespace(f, op, v, ScaleSchedule((8,), (1.0,)))


def test_multistage_histories_and_descent(rng):
    op, f, v = radon_problem(16, rng, theta=0.05)
    settings = SolverSettings(palm=PalmConfig(iterations=10))
    seen = []
    res = run_scalespace(f, op, v, ScaleSchedule((8, 16), (0.1, 0.01)), settings, callback=seen.append)
    assert [s.resolution for s in res.stages] == [8, 16] and len(seen) == 2
    assert len(res.history) == 20
    for st in res.stages:
        obj = [r["objective"] for r in st.history]
        assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(obj, obj[1:]))
    assert res.u.values.min() >= 0


def test_complex_image_path(rng):
    n = 16
    g = Grid.standard(n)
    u = smooth_image(n, rng, complex_=True)
    op = FourierSampling.radial(g, spokes=6, lowpass=6)
    v = ImageGrid(np.abs(u), g)
    res = run_scalespace(op.apply(u), op, v, ScaleSchedule((8, 16), (0.1, 0.01)),
                         SolverSettings(palm=PalmConfig(iterations=5)))
    assert np.iscomplexobj(res.u.values)
