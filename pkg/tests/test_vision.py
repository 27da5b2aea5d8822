import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pushlab.checkpoint import CheckpointError
from pushlab.nets import NonFiniteError
from pushlab.physics2d import ShapeSpec
from pushlab.vision import (
    Camera,
    EncoderModel,
    encode,
    encode_batch,
    oracle_descriptor,
    random_masks,
    reconstruction_iou,
    render_mask,
    train_autoencoder,
)

BOUNDS = (-0.2, -0.2, 0.2, 0.2)
CAM = Camera.for_table(BOUNDS)


def test_camera_covers_table():
    assert CAM.meters_per_pixel == pytest.approx(0.4 / 64)
    xs, ys = CAM.pixel_centers()
    assert xs[0] == pytest.approx(-0.2 + 0.5 * CAM.meters_per_pixel)
    assert xs[-1] == pytest.approx(0.2 - 0.5 * CAM.meters_per_pixel)


def test_disc_area():
    m = render_mask(ShapeSpec.disc(0.05), (0.0, 0.0, 0.0), CAM)
    expected = math.pi * (0.05 / CAM.meters_per_pixel) ** 2
    assert abs(m.grid.sum() - expected) <= 0.05 * expected
    assert set(np.unique(m.grid)) == {0, 1}


def test_rectangle_quarter_turn_equals_swapped_extents():
    a = render_mask(ShapeSpec.rectangle(0.10, 0.06), (0.013, -0.021, math.pi / 2), CAM)
    b = render_mask(ShapeSpec.rectangle(0.06, 0.10), (0.013, -0.021, 0.0), CAM)
    assert np.array_equal(a.grid, b.grid)


@settings(max_examples=30)
@given(st.integers(-10, 10), st.integers(-10, 10), st.floats(-math.pi, math.pi))
def test_integer_pixel_shift(di, dj, theta):
    mpp = CAM.meters_per_pixel
    shape = ShapeSpec.rectangle(0.07, 0.05)
    base = (0.3 * mpp, 0.2 * mpp, theta)
    a = render_mask(shape, base, CAM).grid
    b = render_mask(shape, (base[0] + dj * mpp, base[1] + di * mpp, theta), CAM).grid
    assert np.array_equal(np.roll(a, (di, dj), axis=(0, 1)), b)


def test_render_deterministic_and_out_of_view():
    shape = ShapeSpec.disc(0.045)
    assert np.array_equal(render_mask(shape, (0.1, 0.0, 1.0), CAM).grid, render_mask(shape, (0.1, 0.0, 1.0), CAM).grid)
    with pytest.raises(ValueError):
        render_mask(shape, (1.0, 1.0, 0.0), CAM)


def test_descriptor_properties():
    disc = ShapeSpec.disc(0.05)
    d = oracle_descriptor(disc, (0.1, -0.05, 1.3), BOUNDS)
    assert d.shape == (6,)
    assert d[2] == 0 and d[3] == 0
    assert d[0] == pytest.approx(0.5) and d[1] == pytest.approx(-0.25)
    assert np.array_equal(d, oracle_descriptor(disc, (0.1, -0.05, -2.0), BOUNDS))
    box = ShapeSpec.rectangle(0.10, 0.06)
    assert np.allclose(oracle_descriptor(box, (0, 0, 0.4), BOUNDS), oracle_descriptor(box, (0, 0, 0.4 + math.pi), BOUNDS),
                       atol=1e-6)
    square = oracle_descriptor(ShapeSpec.rectangle(0.08, 0.08), (0, 0, 0.7), BOUNDS)
    assert square[2] == 0 and square[3] == 0
    # swapping the extents and turning by a quarter gives the same footprint and code
    assert np.allclose(oracle_descriptor(ShapeSpec.rectangle(0.06, 0.10), (0, 0, 0.4 + math.pi / 2), BOUNDS),
                       oracle_descriptor(box, (0, 0, 0.4), BOUNDS), atol=1e-6)


def test_untrained_encoder_outputs():
    model = train_autoencoder(random_masks(8, np.random.default_rng(0), CAM), epochs=0)
    assert model.epochs == 0 and math.isfinite(model.final_loss)
    z = encode(model, np.zeros((64, 64), dtype=np.uint8))
    assert z.shape == (6,) and np.isfinite(z).all()
    m = render_mask(ShapeSpec.disc(0.05), (0, 0, 0), CAM)
    assert np.array_equal(encode(model, m), encode(model, m))


def test_single_mask_overfit():
    mask = render_mask(ShapeSpec.rectangle(0.10, 0.06), (0.05, -0.03, 0.6), CAM)
    model = train_autoencoder([mask], epochs=300, seed=0, augment=False, lr=3e-3)
    assert reconstruction_iou(model, [mask])[0] > 0.95


def test_loss_trends_down_and_codes_distinct():
    masks = random_masks(256, np.random.default_rng(1), CAM)
    model = train_autoencoder(masks, epochs=40, seed=0)
    h = model.loss_history
    assert len(h) == 40 and np.mean(h[-5:]) < np.mean(h[:5])
    left = render_mask(ShapeSpec.disc(0.05), (-0.12, 0.0, 0.0), CAM)
    right = render_mask(ShapeSpec.disc(0.05), (0.12, 0.0, 0.0), CAM)
    codes = encode_batch(model, [left, right])
    assert np.linalg.norm(codes[0] - codes[1]) > 0


def test_training_is_seeded():
    masks = random_masks(64, np.random.default_rng(2), CAM)
    a = train_autoencoder(masks, epochs=3, seed=5)
    b = train_autoencoder(masks, epochs=3, seed=5)
    assert a.loss_history == b.loss_history


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train_autoencoder([], epochs=1)


def test_divergence_reported():
    masks = random_masks(16, np.random.default_rng(3), CAM)
    with pytest.raises(NonFiniteError, match="diverged at epoch"):
        train_autoencoder(masks, epochs=2, lr=float("nan"))


def test_checkpoint_round_trip(tmp_path):
    masks = random_masks(32, np.random.default_rng(4), CAM)
    model = train_autoencoder(masks, epochs=2, seed=0)
    path = tmp_path / "enc.bin"
    model.save(path)
    back = EncoderModel.load(path)
    assert back.epochs == 2
    assert np.array_equal(encode_batch(back, masks), encode_batch(model, masks))
    assert path.read_bytes()[:7] == b"PUSHAE1"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"PUSHRL1" + path.read_bytes()[7:])
    with pytest.raises(CheckpointError):
        EncoderModel.load(bad)


def test_iou_of_perfect_and_empty_prediction():
    model = train_autoencoder(random_masks(4, np.random.default_rng(5), CAM), epochs=0)
    with torch.no_grad():
        for p in model.net.decoder.parameters():
            p.zero_()
        model.net.decoder.net[-2].bias.fill_(-10.0)
    empty = np.zeros((64, 64), dtype=np.uint8)
    assert reconstruction_iou(model, [empty])[0] == 1.0
    full = render_mask(ShapeSpec.disc(0.05), (0, 0, 0), CAM)
    assert reconstruction_iou(model, [full])[0] == 0.0
