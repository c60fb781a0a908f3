import numpy as np
import pytest

from attnsteer.encoder import (
    ConvLayer,
    EncoderConfig,
    encode,
    flatten_cube,
    init_encoder,
    receptive_fields,
    unflatten_cube,
)
from attnsteer.tensor import ShapeError, Tensor


def test_default_shapes():
    cfg = EncoderConfig()
    assert cfg.total_stride == 8
    assert cfg.grid == (10, 20)
    cube = encode(np.random.default_rng(0).uniform(size=(80, 160, 3)), init_encoder(cfg, 0), cfg)
    assert cube.shape == (10, 20, 64)
    assert flatten_cube(cube).shape == (200, 64)
    assert np.isfinite(cube.data).all()
    assert cube.data.min() >= 0.0


def test_half_resolution_grid():
    cfg = EncoderConfig(input_size=(40, 80))
    cube = encode(np.zeros((2, 40, 80, 3)), init_encoder(cfg, 0), cfg)
    assert cube.shape == (2, 5, 10, 64)


def test_zero_input_with_zero_biases_gives_zero_cube():
    cfg = EncoderConfig(input_size=(40, 80))
    cube = encode(np.zeros((40, 80, 3)), init_encoder(cfg, 1), cfg)
    assert not cube.data.any()


def test_wrong_frame_shape_rejected():
    cfg = EncoderConfig(input_size=(40, 80))
    with pytest.raises(ShapeError):
        encode(np.zeros((80, 160, 3)), init_encoder(cfg, 0), cfg)


def test_config_must_divide_by_total_stride():
    with pytest.raises(ValueError):
        EncoderConfig(input_size=(42, 80))


def test_flatten_order_and_round_trip():
    data = np.random.default_rng(2).normal(size=(10, 20, 4))
    flat = flatten_cube(Tensor(data))
    for r, c in [(0, 0), (3, 7), (9, 19)]:
        np.testing.assert_array_equal(flat.data[r * 20 + c], data[r, c])
    np.testing.assert_array_equal(unflatten_cube(flat, (10, 20)).data, data)


def test_config_dict_round_trip():
    cfg = EncoderConfig(layers=(ConvLayer(3, 2, 8), ConvLayer(3, 2, 8)), input_size=(16, 32))
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


def test_zeroing_a_region_only_touches_overlapping_cells():
    cfg = EncoderConfig()
    params = init_encoder(cfg, 3)
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(80, 160, 3))
    base = encode(img, params, cfg).data
    r0, r1, c0, c1 = 30, 37, 100, 111           # inclusive
    hole = img.copy()
    hole[r0:r1 + 1, c0:c1 + 1] = 0.0
    changed = encode(hole, params, cfg).data
    rows, cols = receptive_fields(cfg)
    hit_r = (rows[:, 0] <= r1) & (rows[:, 1] >= r0)
    hit_c = (cols[:, 0] <= c1) & (cols[:, 1] >= c0)
    outside = ~np.outer(hit_r, hit_c)
    np.testing.assert_array_equal(changed[outside], base[outside])
    assert (changed[~outside] != base[~outside]).any()
