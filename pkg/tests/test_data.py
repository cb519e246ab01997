import numpy as np
import pytest

from asympatch.data import (AugmentParams, augment,
                            cifar_augment_params, identity_augment_params,
                            imagenet_augment_params, load_cifar,
                            synth_dataset, synth_manifest)


def write_cifar(path, records):
    """records: list of (label, r_plane, g_plane, b_plane) byte arrays."""
    with open(path, "wb") as fh:
        for label, r, g, b in records:
            fh.write(bytes([label]) + bytes(r) + bytes(g) + bytes(b))


PLANE = 1024


class TestLoadCifar:
    def test_single_record(self, tmp_path):
        path = tmp_path / "batch.bin"
        write_cifar(path, [(0, [0] * PLANE, [0] * PLANE, [0] * PLANE)])
        records = load_cifar(path)
        assert len(records) == 1
        assert records[0].label == 0
        assert not records[0].pixels.any()        # all-zero record: black
        assert records[0].pixels.shape == (32, 32, 3)

    def test_red_plane_saturated(self, tmp_path):
        path = tmp_path / "batch.bin"
        write_cifar(path, [(3, [255] * PLANE, [0] * PLANE, [0] * PLANE)])
        rec = load_cifar(path)[0]
        assert rec.label == 3
        assert np.allclose(rec.pixels[..., 0], 1.0)
        assert not rec.pixels[..., 1:].any()

    def test_plane_order_is_row_major(self, tmp_path):
        # first green byte belongs to pixel (0, 0)
        g = [0] * PLANE
        g[0] = 255
        path = tmp_path / "batch.bin"
        write_cifar(path, [(1, [0] * PLANE, g, [0] * PLANE)])
        rec = load_cifar(path)[0]
        assert rec.pixels[0, 0, 1] == 1.0
        assert rec.pixels.sum() == 1.0

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 3072)
        with pytest.raises(ValueError, match="3073"):
            load_cifar(path)

    def test_label_out_of_range_reported(self, tmp_path):
        path = tmp_path / "bad.bin"
        write_cifar(path, [(12, [0] * PLANE, [0] * PLANE, [0] * PLANE)])
        with pytest.raises(ValueError, match="label 12"):
            load_cifar(path)


class TestSynthDataset:
    def test_deterministic(self):
        a = synth_dataset(4, 2, 16, seed=9)
        b = synth_dataset(4, 2, 16, seed=9)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.pixels, rb.pixels)
            assert ra.label == rb.label

    def test_pixel_range_and_shape(self):
        for rec in synth_dataset(2, 3, 16, seed=0):
            assert rec.pixels.shape == (16, 16, 3)
            assert rec.pixels.min() >= 0.0 and rec.pixels.max() <= 1.0

    def test_nearest_centroid_separability(self):
        # pixel-mean classifier must beat chance on two classes
        records = synth_dataset(40, 2, 16, seed=1)
        feats = np.stack([r.pixels.mean(axis=(0, 1)) for r in records])
        labels = np.array([r.label for r in records])
        train = np.arange(0, len(records), 2)
        test = np.arange(1, len(records), 2)
        cents = np.stack([feats[train][labels[train] == c].mean(axis=0)
                          for c in (0, 1)])
        pred = np.linalg.norm(feats[test][:, None, :] - cents[None], axis=2
                              ).argmin(axis=1)
        acc = (pred == labels[test]).mean()
        assert acc > 0.9

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            synth_dataset(0, 2, 16, seed=0)

    def test_manifest(self):
        text = synth_manifest(8, 2, 16, seed=3)
        assert "seed=3" in text and "classes=2" in text


class TestAugment:
    def test_identity_configuration_exact(self):
        rec = synth_dataset(1, 1, 16, seed=2)[0]
        params = identity_augment_params(view_size=16)
        view, box = augment(rec, params, np.random.default_rng(0))
        assert np.array_equal(view, rec.pixels)
        assert (box.rect.x0, box.rect.y0, box.rect.x1, box.rect.y1) \
            == (0.0, 0.0, 16.0, 16.0)
        assert box.flip is False

    def test_forced_flip_mirrors_pixels(self):
        rec = synth_dataset(1, 1, 16, seed=3)[0]
        params = identity_augment_params(16)
        params = AugmentParams(**{**params.__dict__, "flip_prob": 1.0})
        view, box = augment(rec, params, np.random.default_rng(0))
        assert box.flip is True
        assert np.allclose(view, rec.pixels[:, ::-1, :])

    def test_grayscale_equalizes_channels(self):
        rec = synth_dataset(1, 1, 16, seed=4)[0]
        params = identity_augment_params(16)
        params = AugmentParams(**{**params.__dict__, "grayscale_prob": 1.0})
        view, _ = augment(rec, params, np.random.default_rng(0))
        assert np.allclose(view[..., 0], view[..., 1])
        assert np.allclose(view[..., 1], view[..., 2])

    def test_crop_box_inside_source(self):
        rec = synth_dataset(1, 1, 32, seed=5)[0]
        params = cifar_augment_params(32)
        rng = np.random.default_rng(6)
        for _ in range(50):
            _, box = augment(rec, params, rng)
            r = box.rect
            assert 0.0 <= r.x0 < r.x1 <= 32.0
            assert 0.0 <= r.y0 < r.y1 <= 32.0

    def test_color_ops_never_change_the_box(self):
        # the geometric draws precede the photometric ones, so two parameter
        # sets differing only in color settings produce identical boxes
        rec = synth_dataset(1, 1, 32, seed=7)[0]
        base = cifar_augment_params(32)
        no_color = AugmentParams(**{
            **base.__dict__, "jitter_prob": 0.0, "grayscale_prob": 0.0,
        })
        _, box_a = augment(rec, base, np.random.default_rng(11))
        _, box_b = augment(rec, no_color, np.random.default_rng(11))
        assert box_a.rect == box_b.rect
        assert box_a.flip == box_b.flip

    def test_determinism_under_seed(self):
        rec = synth_dataset(1, 1, 32, seed=8)[0]
        params = cifar_augment_params(32)
        va, ba = augment(rec, params, np.random.default_rng(5))
        vb, bb = augment(rec, params, np.random.default_rng(5))
        assert np.array_equal(va, vb)
        assert ba == bb

    def test_cifar_preset_values(self):
        p = cifar_augment_params()
        assert p.area_range == (0.15, 1.0)
        assert p.aspect_range == (0.75, 4.0 / 3.0)
        assert (p.flip_prob, p.jitter_prob, p.grayscale_prob) == (0.5, 0.8, 0.2)
        assert (p.brightness, p.contrast, p.saturation, p.hue) \
            == (0.4, 0.4, 0.4, 0.1)
        assert p.blur_prob == 0.0 and p.solarize_prob == 0.0

    def test_imagenet_presets_asymmetric(self):
        t1, t2 = imagenet_augment_params()
        assert t1.blur_prob == 1.0 and t2.blur_prob == 0.1
        assert t1.solarize_prob == 0.0 and t2.solarize_prob == 0.2
        assert t1.saturation == 0.2
        assert t1.area_range == (0.08, 1.0)

    def test_blur_and_solarize_paths_run(self):
        rec = synth_dataset(1, 1, 32, seed=9)[0]
        t1, t2 = imagenet_augment_params(view_size=32)
        rng = np.random.default_rng(12)
        view, _ = augment(rec, t1, rng)
        assert view.shape == (32, 32, 3)
        assert view.min() >= 0.0 and view.max() <= 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            AugmentParams(view_size=16, area_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            AugmentParams(view_size=16, flip_prob=1.5)
