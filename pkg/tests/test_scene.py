import json

import numpy as np
import pytest

from pansharp_lab.landcover import LandCoverClass
from pansharp_lab.raster import RasterImage, degrade, upsample
from pansharp_lab.scene import (
    DEFAULT_PAN_WEIGHTS,
    DEFAULT_SPECTRA,
    ClassSpectrum,
    SceneSpec,
    SceneSpecError,
    class_pixel_counts,
    make_ms,
    make_pan,
    synthesize_scene,
)


def test_default_spec_values():
    spec = SceneSpec()
    assert (spec.width, spec.height, spec.ratio, spec.seed) == (512, 512, 4, 0)
    assert DEFAULT_SPECTRA["VEG"] == (0.06, 0.12, 0.07, 0.50)
    assert DEFAULT_SPECTRA["SHA"] == (0.04, 0.04, 0.04, 0.03)
    assert all(s.noise_std == 0.02 for s in spec.class_spectra.values())
    assert DEFAULT_PAN_WEIGHTS == (0.3, 0.3, 0.3, 0.1)


def test_deterministic():
    spec = SceneSpec(width=128, height=128, seed=5)
    a, la = synthesize_scene(spec)
    b, lb = synthesize_scene(SceneSpec(width=128, height=128, seed=5))
    assert a.data.tobytes() == b.data.tobytes()
    assert la.tobytes() == lb.tobytes()
    c, _ = synthesize_scene(SceneSpec(width=128, height=128, seed=6))
    assert c.data.tobytes() != a.data.tobytes()


def test_zero_noise_gives_class_means():
    spectra = {k: ClassSpectrum(v, 0.0) for k, v in DEFAULT_SPECTRA.items()}
    hr, labels = synthesize_scene(SceneSpec(width=128, height=128, class_spectra=spectra))
    for c in LandCoverClass:
        mask = labels == int(c)
        assert mask.any()
        for k in range(4):
            assert np.all(hr.data[k][mask] == DEFAULT_SPECTRA[c.name][k])


def test_noise_does_not_move_layout():
    spectra = {k: ClassSpectrum(v, 0.0) for k, v in DEFAULT_SPECTRA.items()}
    _, quiet = synthesize_scene(SceneSpec(width=128, height=128, class_spectra=spectra))
    _, noisy = synthesize_scene(SceneSpec(width=128, height=128))
    np.testing.assert_array_equal(quiet, noisy)


def test_default_scene_class_coverage():
    hr, labels = synthesize_scene(SceneSpec())
    assert hr.shape == (4, 512, 512) and labels.shape == (512, 512)
    counts = class_pixel_counts(labels)
    assert all(n >= 600 for n in counts.values()), counts
    assert sum(counts.values()) == 512 * 512
    assert hr.data.min() >= 0 and hr.data.max() <= 1


def test_make_pan():
    px = RasterImage(np.array([0.2, 0.4, 0.6, 0.8]).reshape(4, 1, 1))
    assert make_pan(px).data[0, 0, 0] == pytest.approx(0.44)
    hr = RasterImage(np.random.default_rng(0).random((4, 8, 8)))
    np.testing.assert_array_equal(make_pan(hr, (1, 0, 0, 0)).data[0], hr.data[0])
    const = make_pan(RasterImage(np.full((4, 4, 4), 0.3)))
    assert np.ptp(const.data) < 1e-15
    with pytest.raises(ValueError, match="non-negative"):
        make_pan(hr, (1, -1, 0, 0))


def test_make_ms_and_wald_triple():
    spec = SceneSpec(width=128, height=128)
    hr, _ = synthesize_scene(spec)
    ms = make_ms(hr, 4)
    assert ms.shape == (4, 32, 32) and ms.pixel_size_m == 10.0
    np.testing.assert_array_equal(ms.data, degrade(hr, 4).data)
    assert abs(upsample(ms, 4, "nearest").data.mean() - hr.data.mean()) <= 1e-12
    np.testing.assert_allclose(make_ms(RasterImage(np.full((4, 8, 8), 0.2)), 4).data, 0.2, atol=1e-16)
    with pytest.raises(ValueError):
        make_ms(RasterImage(np.zeros((4, 6, 6))), 4)


@pytest.mark.parametrize("bad", [
    {"width": 130},
    {"ratio": 1},
    {"road_fraction": 1.5},
    {"road_fraction": 0.5, "building_fraction": 0.5, "water_fraction": 0.2},
    {"class_spectra": {"VEG": [0.1, 0.2, 1.3, 0.4]}},
    {"class_spectra": {"XYZ": [0.1, 0.2, 0.3, 0.4]}},
    {"colour": "blue"},
])
def test_invalid_specs(bad):
    with pytest.raises(SceneSpecError):
        SceneSpec.from_dict(bad)


def test_spec_json_round_trip():
    spec = SceneSpec(width=64, height=64, seed=3)
    back = SceneSpec.from_json(json.dumps(spec.to_dict()))
    assert back == spec
    with pytest.raises(SceneSpecError, match="JSON"):
        SceneSpec.from_json("{not json")
