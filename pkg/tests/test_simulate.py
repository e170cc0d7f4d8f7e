import numpy as np
import pytest

from jointrecon.errors import ConfigError, ParamError
from jointrecon.grid import Grid, gradient
from jointrecon.metrics import max_displacement_px
from jointrecon.simulate import (
    ground_truth,
    ground_truth_field,
    load_dataset,
    make_phantom,
    save_dataset,
    simulate_dataset,
)


def edge_mask(img):
    g = np.sqrt((gradient(img) ** 2).sum(axis=0))
    return g > 0.1 * g.max()


@pytest.mark.parametrize("kind", ["brain", "urban"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_phantom_pair_shares_edges(kind, seed):
    u, v = make_phantom(kind, 64, seed)
    eu, ev = edge_mask(u.values), edge_mask(v.values)
    assert (eu & ev).sum() >= 0.9 * eu.sum()
    assert ev.sum() > eu.sum()  # the side image has one extra structure
    corr = np.corrcoef(u.values.ravel(), v.values.ravel())[0, 1]
    assert abs(corr) < 0.95
    assert u.values.min() == 0.0 and u.values.max() <= 1.0
    assert u.values[0, 0] == 0.0 and u.values[-1, -1] == 0.0


def test_phantom_validation_and_determinism():
    with pytest.raises(ParamError):
        make_phantom("brain", 16)
    with pytest.raises(ParamError):
        make_phantom("knee", 64)
    a = make_phantom("brain", 40, 5)
    b = make_phantom("brain", 40, 5)
    assert np.array_equal(a[1].values, b[1].values)
    _, v = make_phantom("urban", 32, 0, side_n=128)
    assert v.shape == (128, 128)


def test_field_examples():
    g = Grid.standard(9)
    assert np.allclose(ground_truth_field("rigid", g, theta=0.0, offset=(0.0, 0.0)).values, g.coordinates())
    z = ground_truth_field("zoom", g).values
    assert np.allclose(z[:, 4, 4], (-0.02, -0.08))  # the center pixel sits at x = 0
    pts = Grid((1, 1), (0.5, 0.5), (1.0, 1.0))  # a single pixel centered at (1, 1)
    diff = ground_truth_field("nonlinear", pts).values - ground_truth_field("rigid", pts, offset=(0.06, -0.04)).values
    assert np.allclose(diff[:, 0, 0], (0.05, -0.05))
    with pytest.raises(ParamError):
        ground_truth_field("twist", g)


def test_ground_truth_parameters():
    gt = ground_truth({"kind": "rigid", "theta": 0.2})
    assert gt.params["theta"] == 0.2 and gt.params["offset"] == (0.02, 0.08)
    assert ground_truth("nonlinear").affine is None
    with pytest.raises(ConfigError):
        ground_truth({"kind": "rigid", "zoom": 0.9})


def base_config(**over):
    cfg = {
        "phantom": {"kind": "brain", "n": 32},
        "operator": {"kind": "radon", "angles": 20, "bins": 40},
        "deformation": {"kind": "identity"},
        "noise": {"kind": "poisson", "background": 7, "counts": 2e4},
        "seed": 3,
    }
    cfg.update(over)
    return cfg


def test_poisson_budget_and_support():
    ds = simulate_dataset(base_config())
    mean = ds.operator.apply(ds.u_deformed.values) + 7
    assert abs(mean.sum() - 2e4) <= 0.01 * 2e4
    assert np.all(ds.f >= 0) and np.all(ds.f == np.rint(ds.f))
    with pytest.raises(ConfigError):
        simulate_dataset(base_config(noise={"kind": "poisson", "background": 7, "counts": 10}))


def test_bit_exact_per_seed():
    a = simulate_dataset(base_config())
    b = simulate_dataset(base_config())
    assert a.f.tobytes() == b.f.tobytes()
    c = simulate_dataset(base_config(seed=4))
    assert not np.array_equal(a.f, c.f)


def test_noiseless_identity_equals_forward_model():
    cfg = base_config(operator={"kind": "downsample", "factor": 4}, noise={"kind": "gaussian", "sigma_rel": 0.0})
    ds = simulate_dataset(cfg)
    assert np.array_equal(ds.f, ds.operator.apply(ds.u_gt.values))


def test_gaussian_complex_noise_level():
    cfg = base_config(operator={"kind": "fourier_mask"}, noise={"kind": "gaussian", "sigma_rel": 0.05},
                      phantom={"kind": "brain", "n": 64})
    ds = simulate_dataset(cfg)
    clean = ds.operator.apply(ds.u_deformed.values.astype(complex))
    rms = np.sqrt(np.mean(np.abs(clean) ** 2))
    noise = np.sqrt(np.mean(np.abs(ds.f - clean) ** 2))
    assert abs(noise / rms - 0.05) < 0.01
    assert ds.complex_image and ds.fidelity_kind == "l2"


def test_save_and_load_roundtrip(tmp_path):
    ds = simulate_dataset(base_config(deformation={"kind": "rigid"}))
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.f.tobytes() == ds.f.tobytes()
    assert np.array_equal(back.truth.affine, ds.truth.affine)
    assert back.fidelity_kind == "kl" and back.background == 7
    assert np.array_equal(back.operator.apply(ds.u_gt.values), ds.operator.apply(ds.u_gt.values))


def test_hyperspectral_geometry():
    # 100 data pixels and 400 side pixels across a domain of width 2
    _, v = make_phantom("urban", 100, 0, side_n=400)
    fine = v.grid
    assert np.isclose(fine.spacing[0], 0.005)
    assert np.isclose(Grid.standard(100).spacing[0], 0.02)
    gt = ground_truth({"kind": "rigid", "offset": (0.06, -0.04)})
    # the offset alone is |b| / h = 0.0721 / 0.005 fine pixels
    shift_px = np.hypot(0.06, -0.04) / 0.005
    assert 14.0 < shift_px < 14.5
    disp = max_displacement_px(gt.affine, np.zeros(6), fine)
    assert disp >= shift_px
