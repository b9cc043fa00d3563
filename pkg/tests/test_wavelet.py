import math

import numpy as np
import pytest

from mdme import tensor as T
from mdme import wavelet as W
from mdme.errors import ConfigError, DimensionError
from mdme.rng import Rng
from mdme.tensor import Tensor


def brute_dwt1d(x, filt):
    """Independent oracle: zero-padded full convolution, odd-phase downsample."""
    n, L = len(x), len(filt)
    full = np.zeros(n + L - 1)
    for m in range(n + L - 1):
        for j in range(n):
            k = m - j
            if 0 <= k < L:
                full[m] += x[j] * filt[k]
    return full[1::2]


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

def test_filter_identities():
    f = W.db2_filters()
    h, g = f.lo_array(), f.hi_array()
    assert abs(h.sum() - math.sqrt(2)) < 1e-12
    assert abs(h @ h - 1.0) < 1e-12
    assert abs(g @ g - 1.0) < 1e-12
    assert abs(g.sum()) < 1e-10
    assert abs((np.arange(4) * g).sum()) < 1e-10
    for n in range(4):
        assert g[n] == (-1) ** n * h[3 - n]


def test_filter_coefficients_match_analytic_solution():
    # orthonormality + two vanishing moments solved in closed form
    s3 = math.sqrt(3)
    expected = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2))
    assert np.allclose(W.db2_filters().lo_array(), expected, atol=1e-15)
    assert np.allclose(expected[:2], [0.48296291314453416, 0.8365163037378079])


# ---------------------------------------------------------------------------
# sizes
# ---------------------------------------------------------------------------

def test_band_length_chain():
    assert [W.band_length(n) for n in (25, 14, 8, 5)] == [14, 8, 5, 4]


def test_pyramid_sizes_quadruped_and_humanoid():
    shapes = W.subband_shapes(25, 25, 4)
    assert shapes == [(14, 14), (8, 8), (5, 5), (4, 4)]
    assert W.coefficient_count(25, 25, 4) == 919
    shapes = W.subband_shapes(15, 5, 2)
    assert shapes == [(9, 4), (6, 3)]
    assert W.coefficient_count(15, 5, 2) == 180


def test_single_level_matches_multilevel_base_case():
    x = Rng(0).normal(size=(4, 4))
    ll, lh, hl, hh = W.dwt2d_level(x)
    p = W.dwt2d_multilevel(x, 1)
    assert np.array_equal(p.ll.data, ll.data)
    for a, b in zip(p.details[0], (lh, hl, hh)):
        assert np.array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# transform correctness
# ---------------------------------------------------------------------------

def test_dwt1d_matches_brute_force_oracle():
    f = W.db2_filters()
    rng = Rng(1)
    for n in (1, 2, 3, 5, 11, 25):
        x = rng.normal(size=(n,))
        a, d = W.dwt1d(x)
        assert np.allclose(a.data, brute_dwt1d(x, f.lo_array()), atol=1e-12)
        assert np.allclose(d.data, brute_dwt1d(x, f.hi_array()), atol=1e-12)
        assert a.shape == ((n + 3) // 2,)


def test_dwt1d_constant_annihilation_interior():
    a, d = W.dwt1d(np.full(8, 3.0))
    assert np.abs(d.data[1:-1]).max() < 1e-12
    assert np.allclose(a.data[1:-1], 3.0 * math.sqrt(2))


def test_dwt1d_energy_conservation():
    rng = Rng(2)
    for n in (1, 4, 9, 25):
        x = rng.normal(size=(n,))
        a, d = W.dwt1d(x)
        total = (a.data ** 2).sum() + (d.data ** 2).sum()
        assert abs(total - (x ** 2).sum()) < 1e-9


def test_dwt1d_empty_signal_rejected():
    with pytest.raises(DimensionError):
        W.dwt1d(np.zeros(0))


def test_dwt2d_level_constant_annihilation():
    ll, lh, hl, hh = W.dwt2d_level(np.full((6, 6), 2.0))
    for band in (lh, hl, hh):
        assert np.abs(band.data[1:-1, 1:-1]).max() < 1e-12


def test_dwt2d_level_energy():
    x = Rng(3).normal(size=(6, 6))
    bands = W.dwt2d_level(x)
    total = sum((b.data ** 2).sum() for b in bands)
    assert abs(total - (x ** 2).sum()) < 1e-9


def test_multilevel_round_trip_zero_is_zero():
    p = W.dwt2d_multilevel(np.zeros((15, 5)), 2)
    rec = W.idwt2d_multilevel(p)
    assert np.array_equal(rec.data, np.zeros((15, 5)))


def test_multilevel_round_trip_random():
    rng = Rng(4)
    for shape, levels in (((4, 4), 2), ((15, 5), 2), ((25, 25), 4)):
        x = rng.normal(size=shape)
        rec = W.idwt2d_multilevel(W.dwt2d_multilevel(x, levels))
        assert np.abs(rec.data - x).max() < 1e-9


def test_multilevel_batched_matches_per_sample():
    rng = Rng(5)
    x = rng.normal(size=(3, 15, 5))
    p = W.dwt2d_multilevel(x, 2)
    flat = p.flatten()
    assert flat.shape == (3, 180)
    for i in range(3):
        pi = W.dwt2d_multilevel(x[i], 2)
        assert np.allclose(pi.flatten().data, flat.data[i])


def test_level_validation():
    with pytest.raises(ConfigError):
        W.dwt2d_multilevel(np.zeros((4, 4)), 0)
    with pytest.raises(ConfigError):
        W.subband_shapes(4, 4, 0)


def test_inverse_requires_shape_record():
    p = W.dwt2d_multilevel(np.zeros((4, 4)), 1)
    p.input_shapes = []
    with pytest.raises(DimensionError):
        W.idwt2d_multilevel(p)


# ---------------------------------------------------------------------------
# differentiability
# ---------------------------------------------------------------------------

def test_energy_gradient_is_two_x():
    x = Tensor(Rng(6).normal(size=(8, 8)))
    with T.Tape() as tape:
        loss = T.tsum(T.square(W.dwt2d_multilevel(x, 3).flatten()))
    tape.backward(loss)
    assert np.abs(x.grad - 2.0 * x.data).max() < 1e-8


def test_generic_loss_gradient_check():
    x = Tensor(Rng(7).normal(size=(6, 7)))
    err = T.check_gradients(
        lambda t: T.tsum(T.tanh(W.dwt2d_multilevel(t, 2).flatten())), x)
    assert err < 1e-4
