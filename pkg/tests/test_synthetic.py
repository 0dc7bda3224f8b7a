import numpy as np
import pytest

from aogparse import (Configuration, DataError, ParameterError, Rect,
                      SyntheticSpec, config_match, generate, jitter_rois,
                      load_dataset, save_dataset)
from aogparse.synthetic import default_class_configs


def small_spec(**kw):
    defaults = dict(num_classes=3, grid_w=2, grid_h=2, feature_channels=4,
                    map_h=8, map_w=8, num_train=12, num_test=6,
                    noise_sigma=0.1, roi_jitter=0.0, seed=3)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


def test_generation_determinism_and_balance():
    spec = small_spec()
    a = generate(spec)
    b = generate(spec)
    assert len(a) == 12
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.feature, sb.feature)
        assert sa.roi == sb.roi and sa.label == sb.label
    labels = [s.label for s in a]
    assert all(labels.count(c) == 4 for c in range(3))


def test_zero_sigma_samples_identical_per_class():
    spec = small_spec(noise_sigma=0.0)
    samples = generate(spec)
    by_class = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    for group in by_class.values():
        for s in group[1:]:
            assert np.array_equal(s.feature, group[0].feature)


def test_zero_sigma_classes_differ():
    spec = small_spec(noise_sigma=0.0)
    samples = generate(spec)
    fg = {s.label: s for s in samples if s.label > 0}
    a, b = fg[1], fg[2]
    assert not np.array_equal(a.feature, b.feature)


def test_duplicate_configurations_rejected():
    config = Configuration(frozenset({Rect(0, 0, 1, 2), Rect(1, 0, 1, 2)}), 2, 2)
    spec = small_spec(class_configs=[config, config])
    with pytest.raises(ParameterError):
        generate(spec)


def test_background_has_no_ground_truth():
    for s in generate(small_spec()):
        assert (s.config is None) == (s.label == 0)


def test_default_configs_are_distinct_and_tile():
    spec = SyntheticSpec()
    configs = default_class_configs(spec)
    assert len({c.rects for c in configs}) == 3
    for c in configs:
        assert c.tiles_exactly()
        assert len(c.rects) >= 2


def test_jitter_identity_and_bounds():
    samples = generate(small_spec())
    assert jitter_rois(samples, 0.0, seed=0) is samples
    jittered = jitter_rois(samples, 0.1, seed=0)
    again = jitter_rois(samples, 0.1, seed=0)
    for s, j, k in zip(samples, jittered, again):
        assert j.roi == k.roi  # same seed, same jitter
        assert abs(j.roi.x0 - s.roi.x0) <= max(1, round(0.1 * s.roi.width))
        assert abs(j.roi.x1 - s.roi.x1) <= max(1, round(0.1 * s.roi.width))
        assert abs(j.roi.y0 - s.roi.y0) <= max(1, round(0.1 * s.roi.height))
        assert abs(j.roi.y1 - s.roi.y1) <= max(1, round(0.1 * s.roi.height))
        assert j.config == s.config
        assert j.roi.x0 < j.roi.x1 and j.roi.y0 < j.roi.y1


def test_config_match_identity_and_symmetry():
    a = Configuration(frozenset({Rect(0, 0, 2, 1), Rect(0, 1, 2, 1)}), 2, 2)
    b = Configuration(frozenset({Rect(0, 0, 1, 2), Rect(1, 0, 1, 2)}), 2, 2)
    assert config_match(a, a) == 1.0
    assert config_match(a, b) == config_match(b, a)
    assert config_match(a, b) < 1.0


def test_config_match_whole_vs_singletons():
    whole = Configuration(frozenset({Rect(0, 0, 2, 2)}), 2, 2)
    singles = Configuration(
        frozenset({Rect(x, y, 1, 1) for x in range(2) for y in range(2)}), 2, 2)
    assert config_match(whole, singles) == pytest.approx(0.25)


def test_config_match_grid_mismatch():
    a = Configuration(frozenset({Rect(0, 0, 2, 2)}), 2, 2)
    b = Configuration(frozenset({Rect(0, 0, 3, 3)}), 3, 3)
    with pytest.raises(DataError):
        config_match(a, b)


def test_dataset_round_trip(tmp_path):
    spec = small_spec()
    samples = generate(spec)
    path = tmp_path / "data.bin"
    save_dataset(samples, spec.grid_w, spec.grid_h, path)
    loaded, gw, gh = load_dataset(path)
    assert (gw, gh) == (2, 2)
    assert len(loaded) == len(samples)
    for a, b in zip(samples, loaded):
        assert np.array_equal(a.feature, b.feature)
        assert (a.roi.x0, a.roi.y0, a.roi.x1, a.roi.y1) == \
            (b.roi.x0, b.roi.y0, b.roi.x1, b.roi.y1)
        assert a.label == b.label
        assert a.config == b.config


def test_truncated_dataset_rejected(tmp_path):
    spec = small_spec()
    path = tmp_path / "data.bin"
    save_dataset(generate(spec), 2, 2, path)
    from aogparse.errors import FormatError
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(FormatError):
        load_dataset(path)
    path.write_bytes(b"NOTDS" + blob[5:])
    with pytest.raises(FormatError):
        load_dataset(path)
