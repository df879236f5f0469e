import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from varsep import metrics

unit = st.floats(0, 1, allow_nan=False)


def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).random((4, 4))
    assert metrics.psnr(a, a) == float("inf")


def test_psnr_known_value():
    assert np.isclose(metrics.psnr(np.zeros(4), np.full(4, 0.1)), 20.0)


@pytest.mark.parametrize("shape", [(11, 11), (32, 32), (64, 40)])
def test_ssim_matches_scikit_image(shape):
    rng = np.random.default_rng(shape[0])
    a = rng.random(shape)
    b = np.clip(a + 0.2 * rng.normal(size=shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, win_size=11)
    assert np.isclose(metrics.ssim(a, b), ref, rtol=0, atol=1e-10)


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


@given(arrays(np.float64, (12, 12), elements=unit), arrays(np.float64, (12, 12), elements=unit))
def test_ssim_symmetric_and_bounded(a, b):
    s = metrics.ssim(a, b)
    assert np.isclose(s, metrics.ssim(b, a))
    assert -1 - 1e-12 <= s <= 1 + 1e-12


@given(arrays(np.float64, (12, 12), elements=unit))
def test_ssim_self_is_one(a):
    assert np.isclose(metrics.ssim(a, a), 1.0)


def test_window_normalized():
    w = metrics.gaussian_window()
    assert w.shape == (11, 11) and np.isclose(w.sum(), 1.0)
