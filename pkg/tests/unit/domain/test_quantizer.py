"""
Tests for the ab codebook, soft-encoding and rebalancing weights
"""
import numpy as np
import pytest
import torch

from domain.model.errors import DegenerateGamut, EmptyDataset, NonFiniteInput
from domain.service.colorspace import srgb_to_lab_array
from domain.service.quantizer import (
    ab_lattice,
    build_codebook,
    decode_argmax,
    estimate_prior,
    in_gamut_bins,
    pixel_weight,
    pixel_weights_tensor,
    rebalancing_weights,
    smooth_prior,
    soft_encode,
    soft_encode_tensor,
)


def test_lattice_covers_square():
    lattice = ab_lattice()
    assert lattice.shape == (23 * 23, 2)
    assert lattice.min() == -110.0 and lattice.max() == 110.0


def test_default_gamut_sweep_keeps_313_bins():
    centre = in_gamut_bins(mode="centre")
    cell = in_gamut_bins(mode="cell")
    assert abs(len(in_gamut_bins()) - 313) <= 3
    assert len(in_gamut_bins()) == len(cell)
    assert len(cell) >= len(centre)
    assert len(cell) <= 23 * 23
    # neutral grey is always representable
    assert any(np.all(c == 0.0) for c in centre)


def test_gamut_sweep_rejects_degenerate_range():
    with pytest.raises(DegenerateGamut):
        in_gamut_bins(grid_size=10.0, ab_limit=0.0)


def test_soft_encode_is_a_sparse_distribution(toy_codebook):
    rng = np.random.default_rng(0)
    ab = rng.uniform(-15, 15, (6, 7, 2))
    z = soft_encode(ab, toy_codebook)
    assert z.shape == (6, 7, 5)
    np.testing.assert_allclose(z.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all((z > 0).sum(axis=-1) <= toy_codebook.k_soft)


def test_soft_encode_peaks_on_exact_centre(toy_codebook):
    z = soft_encode(np.array([[10.0, 0.0]]), toy_codebook)[0]
    assert np.argmax(z) == 1
    # neighbours at distance 10 and 10·√2 with sigma 5
    expected = np.array([np.exp(-2.0), 1.0, np.exp(-4.0), np.exp(-8.0), np.exp(-4.0)])
    np.testing.assert_allclose(z, expected / expected.sum(), rtol=1e-10)


def test_soft_encode_k1_is_one_hot(codebook_factory):
    cb = codebook_factory()
    cb = type(cb)(cb.bin_centres, cb.grid_size, cb.prior, cb.weights, k_soft=1)
    z = soft_encode(np.array([[4.0, 1.0]]), cb)[0]
    assert z.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_soft_encode_rejects_nan(toy_codebook):
    with pytest.raises(NonFiniteInput):
        soft_encode(np.array([[np.nan, 0.0]]), toy_codebook)


def test_tensor_encoding_matches_array_form(toy_codebook):
    rng = np.random.default_rng(3)
    ab = rng.uniform(-12, 12, (2, 3, 4, 2))
    z_np = soft_encode(ab, toy_codebook)
    centres = torch.from_numpy(toy_codebook.bin_centres)
    z_t = soft_encode_tensor(torch.from_numpy(ab).permute(0, 3, 1, 2), centres)
    np.testing.assert_allclose(z_t.permute(0, 2, 3, 1).numpy(), z_np, atol=1e-12)


def test_uniform_prior_gives_unit_weights():
    w = rebalancing_weights(np.full(8, 1 / 8), 0.5)
    np.testing.assert_allclose(w, 1.0)


def test_weights_have_unit_expectation():
    prior = np.random.default_rng(2).dirichlet(np.ones(20))
    for lam in (0.0, 0.25, 0.5, 1.0):
        w = rebalancing_weights(prior, lam)
        assert np.sum(prior * w) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        rebalancing_weights(prior, 1.5)


def test_rare_bins_weigh_more():
    prior = np.array([0.7, 0.2, 0.1])
    w = rebalancing_weights(prior, 0.5)
    assert w[0] < w[1] < w[2]


def test_pixel_weight_breaks_ties_by_lowest_index(toy_codebook):
    cb = toy_codebook
    weights = np.arange(1.0, 6.0)
    cb = type(cb)(cb.bin_centres, cb.grid_size, cb.prior, weights)
    z = np.array([0.0, 0.4, 0.4, 0.2, 0.0])
    assert pixel_weight(z, cb) == 2.0
    zt = torch.from_numpy(z).reshape(1, 5, 1, 1)
    assert pixel_weights_tensor(zt, torch.from_numpy(weights)).item() == 2.0


def test_decode_argmax(toy_codebook):
    z = np.zeros((2, 5))
    z[0, 3] = 1.0
    z[1, 2] = 0.6
    z[1, 0] = 0.4
    np.testing.assert_array_equal(decode_argmax(z, toy_codebook), [[-10.0, 0.0], [0.0, 10.0]])


def test_smooth_prior_is_normalised():
    centres = ab_lattice(10.0, 30.0)
    prior = np.zeros(len(centres))
    prior[len(centres) // 2] = 1.0
    smoothed = smooth_prior(prior, centres, 10.0, 5.0)
    assert smoothed.sum() == pytest.approx(1.0)
    assert smoothed.argmax() == len(centres) // 2
    assert (smoothed > 0).sum() > 1


def test_estimate_prior_requires_pixels(toy_codebook):
    with pytest.raises(EmptyDataset):
        estimate_prior([], toy_codebook.bin_centres)
    prior = estimate_prior([np.zeros((3, 3, 2))], toy_codebook.bin_centres)
    assert prior.sum() == pytest.approx(1.0)
    assert prior.argmax() == 0


def test_build_codebook_from_samples():
    rng = np.random.default_rng(4)
    images = [rng.normal(0.0, 20.0, (16, 16, 2)) for _ in range(3)]
    cb = build_codebook(images)
    assert cb.Q == len(in_gamut_bins())
    assert np.sum(cb.prior * cb.weights) == pytest.approx(1.0, abs=1e-3)
    assert cb.prior.sum() == pytest.approx(1.0)
    assert len(cb.fingerprint()) == 64


def test_fingerprint_tracks_content(toy_codebook):
    cb = toy_codebook
    other = type(cb)(cb.bin_centres, cb.grid_size, cb.prior, cb.weights * 2.0)
    assert cb.fingerprint() == type(cb)(cb.bin_centres, cb.grid_size, cb.prior, cb.weights).fingerprint()
    assert cb.fingerprint() != other.fingerprint()


@pytest.fixture(scope="module")
def default_codebook():
    rng = np.random.default_rng(11)
    pixels = rng.integers(0, 256, (4, 32, 32, 3), dtype=np.uint8)
    return build_codebook([srgb_to_lab_array(p)[..., 1:] for p in pixels])


def test_decoded_bin_lies_within_half_a_cell_diagonal(default_codebook):
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, (10000, 3), dtype=np.uint8)
    ab = srgb_to_lab_array(pixels)[:, 1:]
    decoded = decode_argmax(soft_encode(ab, default_codebook), default_codebook)
    error = np.linalg.norm(decoded - ab, axis=1)
    assert error.max() <= 10.0 / np.sqrt(2.0) + 1e-9


def test_equidistant_chroma_splits_evenly(toy_codebook):
    cb = type(toy_codebook)(toy_codebook.bin_centres, 10.0, toy_codebook.prior, toy_codebook.weights, k_soft=2)
    z = soft_encode(np.array([[5.0, 0.0]]), cb)[0]
    np.testing.assert_allclose(z, [0.5, 0.5, 0.0, 0.0, 0.0], atol=1e-12)


def test_full_mixing_gives_unit_weights_on_any_prior():
    prior = np.random.default_rng(6).dirichlet(np.full(30, 0.3))
    np.testing.assert_allclose(rebalancing_weights(prior, 1.0), 1.0, rtol=1e-12)


def test_single_colour_dataset_puts_lowest_weight_on_its_bin():
    images = [np.tile(np.array([20.0, -30.0]), (8, 8, 1)) for _ in range(2)]
    cb = build_codebook(images)
    occupied = int(np.flatnonzero(np.all(cb.bin_centres == [20.0, -30.0], axis=1))[0])
    assert cb.weights.argmin() == occupied
    assert cb.prior.argmax() == occupied


def test_soft_encode_matches_exhaustive_scan(default_codebook):
    cb = default_codebook
    rng = np.random.default_rng(8)
    ab = rng.uniform(-90.0, 90.0, (200, 2))
    z = soft_encode(ab, cb)
    for pixel, row in zip(ab, z):
        d2 = [float(np.sum((centre - pixel) ** 2)) for centre in cb.bin_centres]
        nearest = sorted(range(cb.Q), key=lambda i: (d2[i], i))[:cb.k_soft]
        expected = np.zeros(cb.Q)
        for i in nearest:
            expected[i] = np.exp(-d2[i] / (2.0 * cb.sigma_soft ** 2))
        np.testing.assert_allclose(row, expected / expected.sum(), rtol=1e-9, atol=1e-15)
