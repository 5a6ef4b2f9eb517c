"""Synthetic data: renderers, corruption generators, dataset determinism."""

import numpy as np
import pytest

from admn.data import BLOB_WIDTH, CorruptionSpec, DEFAULT_GAUSSIAN_SPEC, \
    apply_corruption, corrupt_blur, corrupt_gaussian, corrupt_lowlight, \
    load_dataset, make_dataset, render_clean, save_dataset, sector_label
from admn.errors import ConfigError, RangeError
from admn.rng import RngState


class TestRenderClean:
    def test_center_blob_argmax(self):
        img = render_clean([0.5, 0.5], "blob")
        assert img.shape == (1, 16, 16)
        assert np.unravel_index(img.argmax(), img.shape) == (0, 8, 8)

    def test_nearby_positions_differ(self):
        a = render_clean([0.4, 0.5], "blob")
        b = render_clean([0.65, 0.5], "blob")
        assert np.linalg.norm(a - b) > 0.0

    def test_blob_mass_matches_gaussian_integral(self):
        # numeric integral of the blob vs closed-form 2*pi*width^2
        img = render_clean([0.5, 0.5], "blob")
        expected = 2.0 * np.pi * BLOB_WIDTH**2
        assert abs(img.sum() - expected) / expected < 0.02

    def test_ring_is_not_a_blob(self):
        blob = render_clean([0.5, 0.5], "blob")
        ring = render_clean([0.5, 0.5], "ring")
        assert ring[0, 8, 8] < 0.1       # hole in the middle
        assert np.linalg.norm(blob - ring) > 1.0

    def test_out_of_range_position(self):
        with pytest.raises(RangeError):
            render_clean([1.2, 0.5], "blob")

    def test_sector_labels_cover_octants(self):
        angles = np.linspace(-np.pi + 0.01, np.pi - 0.01, 64)
        labels = {
            sector_label([0.5 + 0.3 * np.cos(a), 0.5 + 0.3 * np.sin(a)])
            for a in angles
        }
        assert labels == set(range(8))


class TestCorruptGaussian:
    def test_sigma_zero_is_identity(self):
        img = render_clean([0.3, 0.7], "blob")
        out = corrupt_gaussian(img, 0.0, RngState(1))
        assert np.array_equal(out, img)

    def test_monte_carlo_noise_std(self):
        noise = corrupt_gaussian(np.zeros((1, 320, 320)), 1.0, RngState(2))
        assert 0.99 < noise.std() < 1.01

    def test_negative_sigma_rejected(self):
        with pytest.raises(RangeError):
            corrupt_gaussian(np.zeros((1, 4, 4)), -1.0, RngState(3))

    def test_paper_sigma_set_frequencies(self):
        # defaults draw each of the four levels with frequency 1/4
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 10_000, 7)
        values = np.concatenate([s.value_indices[:, 0] for s in ds.splits.values()])
        freq = np.bincount(values, minlength=4) / values.size
        assert np.abs(freq - 0.25).max() < 0.02


class TestCorruptLowlight:
    def test_none_is_identity(self):
        img = render_clean([0.5, 0.5], "blob")
        assert np.array_equal(corrupt_lowlight(img, "none", RngState(4)), img)

    def test_severe_darkens_below_20_percent(self):
        img = render_clean([0.5, 0.5], "blob")
        out = corrupt_lowlight(img, "severe", RngState(5))
        assert out.mean() < 0.2 * img.mean()

    def test_monotone_darkening(self):
        img = render_clean([0.5, 0.5], "blob")
        medium = corrupt_lowlight(img, "medium", RngState(6))
        severe = corrupt_lowlight(img, "severe", RngState(7))
        assert severe.mean() < medium.mean() < img.mean()


class TestCorruptBlur:
    def test_none_is_identity(self):
        img = render_clean([0.5, 0.5], "blob")
        assert np.array_equal(corrupt_blur(img, "none"), img)

    def test_delta_reveals_normalized_kernel(self):
        delta = np.zeros((1, 17, 17))
        delta[0, 8, 8] = 1.0
        out = corrupt_blur(delta, "medium")
        assert abs(out.sum() - 1.0) < 1e-6          # mass preserved
        assert out[0, 8, 8] == out.max()

    def test_blur_spreads_the_blob(self):
        img = render_clean([0.5, 0.5], "blob")[0]
        blurred = corrupt_blur(img[None], "severe")[0]

        def spread(field):
            ys, xs = np.indices(field.shape)
            w = field / field.sum()
            cy, cx = (w * ys).sum(), (w * xs).sum()
            return (w * ((ys - cy) ** 2 + (xs - cx) ** 2)).sum()

        assert spread(blurred) > spread(img)


class TestMakeDataset:
    def test_pure_function_of_inputs(self):
        a = make_dataset(DEFAULT_GAUSSIAN_SPEC, 60, 5)
        b = make_dataset(DEFAULT_GAUSSIAN_SPEC, 60, 5)
        for name in ("train", "val", "test"):
            for m in range(2):
                assert np.array_equal(a.splits[name].inputs[m],
                                      b.splits[name].inputs[m])
            assert np.array_equal(a.splits[name].labels, b.splits[name].labels)

    def test_label_distribution_uniform(self):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 10_000, 11)
        labels = np.concatenate([s.labels for s in ds.splits.values()])
        assert np.abs(labels.mean(axis=0) - 0.5).max() < 0.02

    def test_per_modality_corruption_independence(self):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 10_000, 13)
        values = np.concatenate([s.corruption_values for s in ds.splits.values()])
        corr = np.corrcoef(values[:, 0], values[:, 1])[0, 1]
        assert abs(corr) < 0.05

    def test_splits_disjoint_and_complete(self):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 100, 17)
        ids = np.concatenate([s.sample_ids for s in ds.splits.values()])
        assert sorted(ids.tolist()) == list(range(100))

    def test_too_small_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset(DEFAULT_GAUSSIAN_SPEC, 10, 1)

    def test_degenerate_ratios_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset(DEFAULT_GAUSSIAN_SPEC, 60, 1, split_ratios=(0.9, 0.2, 0.1))

    def test_classification_labels(self):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 60, 23, task="classify")
        labels = np.concatenate([s.labels for s in ds.splits.values()])
        assert labels.dtype == np.int64
        assert labels.min() >= 0 and labels.max() < 8

    def test_descriptor_round_trip(self):
        # stored (value, sub_seed) re-applied to the clean render reproduces
        # every stored input bitwise
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 40, 29)
        split = ds.splits["test"]
        for i in range(len(split)):
            z = None
            for m, kind in enumerate(ds.modality_kinds):
                sample = split.sample(i)
                # labels are the latent position for the regression task
                clean = render_clean(split.labels[i], kind)
                value = ds.spec.value_sets[m][split.value_indices[i, m]]
                redone = apply_corruption(clean, ds.spec, value,
                                          sample.sub_seeds[m])
                normalized = (redone - ds.norm_mean[m]) / ds.norm_std[m]
                assert np.array_equal(normalized, sample.inputs[m])


class TestDatasetIo:
    def test_save_load_round_trip(self, tmp_path):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 40, 31)
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.task == ds.task and back.n == ds.n
        for name in ("train", "val", "test"):
            for m in range(2):
                assert np.array_equal(back.splits[name].inputs[m],
                                      ds.splits[name].inputs[m])
            assert np.array_equal(back.splits[name].sub_seeds,
                                  ds.splits[name].sub_seeds)
            assert np.array_equal(back.splits[name].corruption_category,
                                  ds.splits[name].corruption_category)

    def test_save_twice_is_byte_identical(self, tmp_path):
        ds = make_dataset(DEFAULT_GAUSSIAN_SPEC, 40, 37)
        save_dataset(ds, tmp_path / "a")
        save_dataset(ds, tmp_path / "b")
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() \
                == (tmp_path / "b" / name).read_bytes()

    def test_severity_spec_round_trip(self, tmp_path):
        spec = CorruptionSpec("blur", (("none", "medium", "severe"), ("none",)))
        ds = make_dataset(spec, 40, 41)
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.spec.value_sets == spec.value_sets
