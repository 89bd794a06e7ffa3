import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from passmri.metrics import PSNR_CAP, evaluate, lf_metrics, psnr, ssim
from passmri.phantom import LesionBox, PhantomSpec, generate_phantom


@pytest.fixture
def ref():
    img, _ = generate_phantom(PhantomSpec(32, 32))
    return np.abs(img)


def test_psnr_perfect_is_sentinel(ref):
    assert psnr(ref, ref) == PSNR_CAP


def test_psnr_uniform_error_fixture():
    ref = np.zeros((8, 8))
    ref[0, 0] = 1.0
    x = ref + 0.1  # every magnitude off by 0.1 -> MSE = 0.01
    assert psnr(x, ref) == pytest.approx(20.0, abs=1e-9)


def test_psnr_scale_invariant(ref, rng):
    x = ref + 0.05 * rng.standard_normal(ref.shape)
    assert psnr(3.7 * x, 3.7 * ref) == pytest.approx(psnr(x, ref), abs=1e-9)


def test_psnr_zero_ref():
    with pytest.raises(ValueError):
        psnr(np.ones((4, 4)), np.zeros((4, 4)))


def test_psnr_monotone_in_noise(ref, rng):
    noise = rng.standard_normal(ref.shape)
    values = [psnr(ref + a * noise, ref) for a in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_ssim_self_is_one(ref, rng):
    assert abs(ssim(ref, ref) - 1.0) <= 1e-12
    z = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    assert abs(ssim(z, z) - 1.0) <= 1e-12


def test_ssim_inverted_checkerboard():
    board = (np.add.outer(np.arange(16), np.arange(16)) % 2).astype(float)
    assert ssim(1 - board, board) < 0.5


def test_ssim_symmetric_with_pinned_range(ref, rng):
    x = np.abs(ref + 0.1 * rng.standard_normal(ref.shape))
    assert ssim(x, ref, data_range=1.0) == pytest.approx(ssim(ref, x, data_range=1.0), abs=1e-14)


def test_ssim_matches_scikit_image(ref, rng):
    x = np.abs(ref + 0.05 * rng.standard_normal(ref.shape))
    expected = structural_similarity(
        x, ref, data_range=ref.max(), gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )
    assert ssim(x, ref) == pytest.approx(expected, abs=1e-10)


def test_ssim_small_image_error():
    with pytest.raises(ValueError, match="lf_metrics"):
        ssim(np.ones((8, 8)), np.ones((8, 8)))


def test_lf_perfect(ref):
    p, s, per_box = lf_metrics(ref, ref, [LesionBox(4, 12, 4, 12)])
    assert p == PSNR_CAP and s == pytest.approx(1.0, abs=1e-12)
    assert per_box[0]["psnr"] == PSNR_CAP


def test_lf_full_box_equals_global(ref, rng):
    x = ref + 0.05 * rng.standard_normal(ref.shape)
    p, s, _ = lf_metrics(x, ref, [LesionBox(0, 31, 0, 31)])
    assert p == pytest.approx(psnr(x, ref), abs=1e-10)
    assert s == pytest.approx(ssim(x, ref), abs=1e-6)


def test_lf_two_boxes_error_in_first(ref):
    boxes = [LesionBox(2, 9, 2, 9, "a"), LesionBox(20, 27, 20, 27, "b")]
    x = ref.copy()
    x[4, 5] += 0.2
    p, _, per_box = lf_metrics(x, ref, boxes)
    assert per_box[1]["psnr"] == PSNR_CAP
    expected_box1 = 10 * np.log10(ref.max() ** 2 / (0.2**2 / 64))
    assert per_box[0]["psnr"] == pytest.approx(expected_box1, abs=1e-9)
    assert p == pytest.approx((expected_box1 + PSNR_CAP) / 2, abs=1e-9)


def test_lf_skips_tiny_boxes(ref):
    p, s, per_box = lf_metrics(ref, ref, [LesionBox(0, 1, 0, 5), LesionBox(4, 8, 4, 8)])
    assert per_box[0]["skipped"] and per_box[0]["psnr"] is None
    assert p == PSNR_CAP


def test_lf_requires_boxes(ref):
    with pytest.raises(ValueError):
        lf_metrics(ref, ref, [])


def test_evaluate_report(ref):
    rep = evaluate(ref, ref, [LesionBox(4, 12, 4, 12)])
    assert rep.psnr_db == PSNR_CAP and rep.lf_psnr_db == PSNR_CAP
    assert -1 <= rep.ssim <= 1
    assert evaluate(ref, ref).lf_psnr_db is None



@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.001, 1.0))
def test_metric_ranges(seed, amp):
    r = np.random.default_rng(seed)
    ref = r.uniform(0, 1, (16, 16))
    x = ref + amp * r.standard_normal((16, 16))
    s = ssim(x, ref)
    assert -1 <= s <= 1
    assert psnr(x, ref) < PSNR_CAP
    assert ssim(x, ref, data_range=1.0) == pytest.approx(ssim(ref, x, data_range=1.0), abs=1e-12)
