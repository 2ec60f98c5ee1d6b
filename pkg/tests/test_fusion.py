import numpy as np
import pytest

from oracles import b3_smooth_bruteforce, jacobi_eigh
from pansharp_lab import _kernels
from pansharp_lab.fusion import (
    FusionError,
    FusionMethod,
    UnbWeights,
    additive_inject,
    atrous_decompose,
    fuse,
    fuse_detailed,
    gs_fuse,
    gs_gains,
    ihs_fuse,
    levels_for_ratio,
    pca_fuse,
    pca_transform,
    ratio_inject,
    unb_fuse,
    unb_weights,
    wavelet_fuse,
)
from pansharp_lab.raster import RasterImage, degrade, upsample
from fusion_cases import wald_scene, identity_case, run_method


def test_dimension_contract_all_methods():
    rng = np.random.default_rng(1)
    ms = RasterImage(rng.uniform(0.1, 0.9, (4, 128, 128)), 10.0)
    pan = RasterImage(rng.uniform(0.1, 0.9, (1, 512, 512)), 2.5)
    for method in FusionMethod:
        out = fuse(ms, pan, method)
        assert out.shape == (4, 512, 512)
        assert out.pixel_size_m == 2.5
        assert out.data.min() >= 0 and out.data.max() <= 1
        assert np.all(np.isfinite(out.data))


def test_ratio_from_pixel_sizes():
    ms, pan = wald_scene()
    assert fuse_detailed(ms, pan, "ihs").ratio == 4


def test_non_integer_ratio_rejected():
    ms = RasterImage(np.full((4, 100, 100), 0.5), 10.0)
    pan = RasterImage(np.full((1, 250, 250), 0.5), 4.0)
    with pytest.raises(FusionError, match="non-integer"):
        fuse(ms, pan, "ihs")


def test_pixel_size_disagreement_rejected():
    ms = RasterImage(np.full((4, 8, 8), 0.5), 10.0)
    pan = RasterImage(np.full((1, 32, 32), 0.5), 5.0)
    with pytest.raises(FusionError, match="pixel sizes"):
        fuse(ms, pan, "gs")


def test_band_count_enforced():
    ms = RasterImage(np.full((3, 8, 8), 0.5), 10.0)
    pan = RasterImage(np.full((1, 32, 32), 0.5), 2.5)
    with pytest.raises(FusionError, match="4-band"):
        fuse(ms, pan, "ihs")


def test_unknown_method():
    with pytest.raises(ValueError, match="ihs,pca,gs,wavelet,unb"):
        FusionMethod.parse("brovey")


def test_method_level_dimension_mismatch():
    ms_up = RasterImage(np.full((4, 8, 8), 0.5))
    pan = RasterImage(np.full((1, 8, 9), 0.5))
    for f in (ihs_fuse, pca_fuse, gs_fuse, wavelet_fuse):
        with pytest.raises(FusionError, match="mismatch"):
            f(ms_up, pan)


# -- IHS ------------------------------------------------------------------------

def test_ihs_hand_example():
    ms = np.array([0.2, 0.4, 0.6, 0.8]).reshape(4, 1, 1)
    intensity = ms.mean(axis=0)
    assert intensity[0, 0] == pytest.approx(0.5)
    out = additive_inject(ms, intensity, np.full((1, 1), 0.7))
    np.testing.assert_allclose(out.ravel(), [0.4, 0.6, 0.8, 1.0], atol=1e-15)


def test_ihs_constant_inputs():
    ms_up = RasterImage(np.broadcast_to(np.array([0.2, 0.3, 0.4, 0.5])[:, None, None], (4, 6, 6)))
    pan = RasterImage(np.full((1, 6, 6), 0.9))
    np.testing.assert_allclose(ihs_fuse(ms_up, pan).data, ms_up.data, atol=1e-15)


# -- PCA ------------------------------------------------------------------------

def test_pca_toy_against_jacobi_oracle():
    ms_up = RasterImage(np.tile(np.array([0.0, 1.0]), (4, 1, 1)))  # 4 bands, 1x2 pixels
    pixels = ms_up.data.reshape(4, -1).T
    cov = np.cov(pixels.T, bias=True)
    vals, vecs = jacobi_eigh(cov)
    np.testing.assert_allclose(vals, [1.0, 0, 0, 0], atol=1e-12)
    top = np.array([row[0] for row in vecs])
    top *= np.sign(top.sum())
    np.testing.assert_allclose(top, 0.5, atol=1e-12)

    pca = pca_transform(pixels)
    np.testing.assert_allclose(pca.eigenvalues[0], vals[0], atol=1e-12)
    np.testing.assert_allclose(pca.eigenvectors[:, 0], top, atol=1e-12)
    # PC1 = [-1, 1]; PAN [0.2, 0.8] matched to PC1 stats = [-1, 1]; inverse gives [0, 1] per band
    out = pca_fuse(ms_up, RasterImage(np.array([[[0.2, 0.8]]])))
    np.testing.assert_allclose(out.data, np.tile([0.0, 1.0], (4, 1, 1)), atol=1e-12)


def test_pca_eigenvectors_match_jacobi_on_random_bands():
    rng = np.random.default_rng(3)
    pixels = rng.random((200, 4)) @ rng.random((4, 4))
    pca = pca_transform(pixels)
    vals, vecs = jacobi_eigh(np.cov(pixels.T, bias=True))
    np.testing.assert_allclose(pca.eigenvalues, vals, rtol=1e-10, atol=1e-14)
    assert np.all(np.diff(pca.eigenvalues) <= 0)
    for k in range(4):
        v = np.array([row[k] for row in vecs])
        assert abs(abs(v @ pca.eigenvectors[:, k]) - 1) < 1e-9
    assert pca.eigenvectors[:, 0].sum() > 0


def test_pca_round_trip_identity():
    rng = np.random.default_rng(4)
    pixels = rng.random((500, 4))
    pca = pca_transform(pixels)
    np.testing.assert_allclose(pca.inverse(pca.forward(pixels)), pixels, atol=1e-12)


def test_pca_zero_variance():
    with pytest.raises(FusionError, match="zero-variance"):
        pca_fuse(RasterImage(np.full((4, 3, 3), 0.4)), RasterImage(np.random.default_rng(0).random((1, 3, 3))))


def test_pca_warns_without_dominant_component():
    rng = np.random.default_rng(5)
    base = rng.standard_normal((2, 4000))
    pixels = np.stack([base[0], base[1], base[0] * 0 + 1, base[0] * 0 + 2], axis=1)
    pixels[:, 1] *= np.std(pixels[:, 0]) / np.std(pixels[:, 1])
    pixels[:, 1] -= np.mean(pixels[:, 1])
    pixels[:, 0] -= np.mean(pixels[:, 0])
    pixels[:, 1] -= (pixels[:, 1] @ pixels[:, 0]) / (pixels[:, 0] @ pixels[:, 0]) * pixels[:, 0]
    pixels[:, 1] *= np.linalg.norm(pixels[:, 0]) / np.linalg.norm(pixels[:, 1])
    with pytest.warns(RuntimeWarning, match="dominant"):
        pca_transform(pixels)


# -- Gram-Schmidt -----------------------------------------------------------------

def test_gs_gains_hand_example():
    # cov([0,2],[0,1]) = 0.5, var([0,1]) = 0.25 -> 2
    ms = np.array([[0.0, 2.0], [0.0, 1.0], [1.0, 1.0], [0.0, -1.0]])
    np.testing.assert_allclose(gs_gains(ms, np.array([0.0, 1.0])), [2.0, 1.0, 0.0, -1.0])


def test_gs_doubled_injection():
    ms_up = RasterImage(np.array([[0.0, 0.5], [0.0, 0.5], [0.0, 0.0], [0.0, 0.0]]).reshape(4, 1, 2))
    # LP = [0, 0.25]; gains (2, 2, 0, 0); reversed PAN matches to [0.25, 0]
    out = gs_fuse(ms_up, RasterImage(np.array([[[1.0, 0.0]]])))
    np.testing.assert_allclose(out.data[:, 0, :], [[0.5, 0.0], [0.5, 0.0], [0, 0], [0, 0]], atol=1e-15)


def test_gs_equal_bands_reduce_to_ihs():
    rng = np.random.default_rng(6)
    band = rng.uniform(0.3, 0.6, (1, 16, 16))
    ms_up = RasterImage(np.repeat(band, 4, axis=0))
    pan = RasterImage(rng.uniform(0.2, 0.8, (1, 16, 16)))
    np.testing.assert_allclose(gs_gains(ms_up.data, ms_up.data.mean(axis=0)), 1.0, atol=1e-12)
    np.testing.assert_allclose(gs_fuse(ms_up, pan).data, ihs_fuse(ms_up, pan).data, atol=1e-12)


def test_gs_degenerate_scene():
    with pytest.raises(FusionError, match="degenerate"):
        gs_fuse(RasterImage(np.full((4, 4, 4), 0.5)), RasterImage(np.random.default_rng(0).random((1, 4, 4))))


# -- a trous ------------------------------------------------------------------------

def test_atrous_constant_has_no_detail():
    stack = atrous_decompose(np.full((20, 20), 0.37), 2)
    for d in stack.details:
        np.testing.assert_allclose(d, 0, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_atrous_reconstruction(seed):
    band = np.random.default_rng(seed).random((23, 31))
    stack = atrous_decompose(band, 3)
    assert stack.levels == 3
    np.testing.assert_allclose(stack.reconstruct(), band, atol=1e-12)


@pytest.mark.parametrize("step", [1, 2])
def test_impulse_against_bruteforce_convolution(step):
    band = np.zeros((17, 17))
    band[8, 8] = 1.0
    smooth = b3_smooth_bruteforce(band.tolist(), step)
    if step == 1:
        stack = atrous_decompose(band, 1)
        np.testing.assert_allclose(stack.details[0], band - smooth, atol=1e-15)
    for impl in (_kernels.atrous_smooth_numpy, _kernels.atrous_smooth_numba):
        np.testing.assert_allclose(impl(band, step), smooth, atol=1e-15)


@pytest.mark.parametrize("step", [1, 2, 4])
def test_boundary_handling_against_bruteforce(step):
    band = np.random.default_rng(step).random((19, 21))
    smooth = b3_smooth_bruteforce(band.tolist(), step)
    for impl in (_kernels.atrous_smooth_numpy, _kernels.atrous_smooth_numba):
        np.testing.assert_allclose(impl(band, step), smooth, atol=1e-14)


def test_atrous_bad_levels_and_support():
    with pytest.raises(ValueError):
        atrous_decompose(np.zeros((9, 9)), 0)
    with pytest.raises(ValueError, match="support"):
        atrous_decompose(np.zeros((8, 8)), 2)


def test_levels_for_ratio_four():
    assert levels_for_ratio(round(10 / 2.5)) == 2
    with pytest.raises(FusionError):
        levels_for_ratio(3)


def test_wavelet_constant_pan_is_identity():
    ms, _ = wald_scene(7)
    ms_up = upsample(ms, 4)
    out = wavelet_fuse(ms_up, RasterImage(np.full((1, 32, 32), 0.4), 2.5))
    np.testing.assert_array_equal(out.data, np.clip(ms_up.data, 0, 1))


@pytest.mark.parametrize("seed", range(3))
def test_wavelet_wald_mean_consistency(seed):
    ms, pan = wald_scene(seed, n=64)
    out = fuse(ms, pan, "wavelet")
    low = degrade(out, 4)
    for k in range(4):
        assert abs(low.data[k].mean() - ms.data[k].mean()) <= 1e-3


# -- UNB -------------------------------------------------------------------------------

def _independent_ms(seed=0, n=16):
    rng = np.random.default_rng(seed)
    return RasterImage(rng.uniform(0.05, 0.95, (4, n, n)), 10.0)


def _pan_from_low(low: np.ndarray, ratio=4):
    return RasterImage(np.repeat(np.repeat(low, ratio, axis=0), ratio, axis=1)[None], 2.5)


def test_unb_weights_equal_mix():
    ms = _independent_ms()
    w = unb_weights(ms, _pan_from_low(0.25 * ms.data.sum(axis=0)))
    np.testing.assert_allclose(w.w, 0.25, atol=1e-6)
    assert w.residual_rms < 1e-9


def test_unb_weights_single_band():
    ms = _independent_ms(1)
    w = unb_weights(ms, _pan_from_low(ms.data[0]))
    np.testing.assert_allclose(w.w, [1, 0, 0, 0], atol=1e-6)


def test_unb_weights_clamp_negative_component():
    from oracles import simplex_grid_best

    # orthogonal band patterns (Walsh rows) on 4x4 pixels
    h = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=float)
    tiles = np.kron(h, np.ones((1, 4))).reshape(4, 4, 4)
    bands = 0.5 + 0.1 * tiles
    bands[1:] -= 0.5  # zero-mean, mutually orthogonal and orthogonal to band 0
    ms = RasterImage(bands, 10.0)
    target = ms.data[0] - 0.5 * ms.data[1]
    w = unb_weights(ms, _pan_from_low(target))
    assert w.w[1] == 0.0
    assert all(v >= 0 for v in w.w)
    np.testing.assert_allclose(w.w, [1, 0, 0, 0], atol=1e-6)
    A = ms.data.reshape(4, -1).T
    obj = float(np.sum((A @ np.array(w.w) - target.ravel()) ** 2))
    assert obj <= simplex_grid_best(A, target.ravel()) + 1e-12


def test_unb_hand_example():
    ms = np.array([0.2, 0.4, 0.6, 0.8]).reshape(4, 1, 1)
    intensity = np.tensordot(np.full(4, 0.25), ms, axes=1)
    assert intensity[0, 0] == pytest.approx(0.5)
    out = np.clip(ratio_inject(ms, intensity, np.ones((1, 1))), 0, 1)
    np.testing.assert_allclose(out.ravel(), [0.4, 0.8, 1.0, 1.0], atol=1e-15)


def test_unb_constant_inputs():
    ms_up = RasterImage(np.broadcast_to(np.array([0.2, 0.3, 0.4, 0.5])[:, None, None], (4, 4, 4)))
    out = unb_fuse(ms_up, RasterImage(np.full((1, 4, 4), 0.8)), UnbWeights((0.25,) * 4, 0.0))
    np.testing.assert_allclose(out.data, ms_up.data, atol=1e-12)


def test_unb_degenerate_intensity_warns():
    ms_up = RasterImage(np.zeros((4, 4, 4)))
    with pytest.warns(RuntimeWarning, match="degenerate intensity"):
        unb_fuse(ms_up, RasterImage(np.random.default_rng(0).random((1, 4, 4))), UnbWeights((1, 0, 0, 0), 0))


def test_unb_weights_validation():
    with pytest.raises(FusionError):
        UnbWeights((0, 0, 0, 0), 0)
    with pytest.raises(FusionError):
        UnbWeights((1, -0.1, 0, 0), 0)
    with pytest.raises(FusionError, match="all-zero"):
        unb_weights(RasterImage(np.zeros((4, 2, 2)), 10), RasterImage(np.ones((1, 8, 8)), 2.5))


# -- identity property for all five methods -------------------------------------------------

@pytest.mark.parametrize("method", list(FusionMethod))
def test_identity_property(method):
    ms_up, pan = identity_case(method)
    out = run_method(method, ms_up, pan)
    np.testing.assert_allclose(out.data, np.clip(ms_up.data, 0, 1), atol=1e-6, rtol=0)


def test_determinism():
    ms, pan = wald_scene(11)
    for method in FusionMethod:
        a, b = fuse(ms, pan, method), fuse(ms, pan, method)
        assert a.data.tobytes() == b.data.tobytes()
