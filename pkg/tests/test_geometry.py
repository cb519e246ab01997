import numpy as np
import pytest

from asympatch.geometry import (CropBox, PatchGrid, Rect, full_image_crop,
                                intersection_area, intersection_areas,
                                map_patch_to_image, overlap_ratio,
                                patch_rects)


def make_grid(rect, flip=False, view_size=32, patch_size=2, source=32.0):
    crop = CropBox(rect=rect, flip=flip, view_size=view_size,
                   source_size=(source, source))
    return PatchGrid(crop=crop, patch_size=patch_size)


class TestRect:
    def test_area(self):
        assert Rect(0, 0, 4, 4).area == 16

    @pytest.mark.parametrize("coords", [(0, 0, 0, 4), (2, 0, 1, 4), (0, 3, 4, 3)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValueError):
            Rect(*coords)

    def test_crop_outside_image_rejected(self):
        with pytest.raises(ValueError):
            CropBox(rect=Rect(0, 0, 40, 40), flip=False, view_size=32,
                    source_size=(32.0, 32.0))


class TestMapPatchToImage:
    def test_identity_crop_unit_scale(self):
        grid = make_grid(Rect(0, 0, 32, 32))
        assert map_patch_to_image(grid, 0) == Rect(0, 0, 2, 2)

    def test_flip_mirrors_first_column(self):
        grid = make_grid(Rect(0, 0, 32, 32), flip=True)
        assert map_patch_to_image(grid, 0) == Rect(30, 0, 32, 2)

    def test_scaled_crop(self):
        # crop (8,8,24,24) resized to 32: scale 16/32, hand affine computation
        grid = make_grid(Rect(8, 8, 24, 24), patch_size=16)
        assert map_patch_to_image(grid, 0) == Rect(8, 8, 16, 16)

    def test_index_out_of_range(self):
        grid = make_grid(Rect(0, 0, 32, 32))
        with pytest.raises(IndexError):
            map_patch_to_image(grid, grid.n_patches)
        with pytest.raises(IndexError):
            map_patch_to_image(grid, -1)

    def test_grid_must_tile_view(self):
        crop = full_image_crop(32)
        with pytest.raises(ValueError):
            PatchGrid(crop=crop, patch_size=5)


class TestIntersectionArea:
    def test_self_intersection(self):
        r = Rect(0, 0, 4, 4)
        assert intersection_area(r, r) == 16

    def test_edge_adjacent_is_zero(self):
        assert intersection_area(Rect(0, 0, 2, 2), Rect(2, 0, 4, 2)) == 0.0

    def test_partial_overlap(self):
        assert intersection_area(Rect(0, 0, 4, 4), Rect(2, 2, 6, 6)) == 4

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        a = np.sort(rng.random((20, 2, 2)) * 10, axis=1).transpose(0, 2, 1)
        a = a.reshape(20, 4)[:, [0, 2, 1, 3]]
        b = np.sort(rng.random((15, 2, 2)) * 10, axis=1).transpose(0, 2, 1)
        b = b.reshape(15, 4)[:, [0, 2, 1, 3]]
        mat = intersection_areas(a, b)
        for i in range(5):
            for j in range(5):
                ra = Rect(*a[i])
                rb = Rect(*b[j])
                assert mat[i, j] == pytest.approx(intersection_area(ra, rb))


class TestOverlapRatio:
    def test_full_overlap(self):
        p = Rect(0, 0, 2, 2)
        assert overlap_ratio([p], p) == 1.0

    def test_disjoint(self):
        assert overlap_ratio([Rect(10, 10, 12, 12)], Rect(0, 0, 2, 2)) == 0.0

    def test_two_quarters(self):
        # two view-1 rects each covering one quarter of patch2
        patch2 = Rect(0, 0, 4, 4)
        quarters = [Rect(0, 0, 2, 2), Rect(2, 2, 4, 4)]
        assert overlap_ratio(quarters, patch2) == pytest.approx(0.5)

    def test_empty_union(self):
        assert overlap_ratio([], Rect(0, 0, 2, 2)) == 0.0

    def test_affine_rescale_invariance(self):
        rng = np.random.default_rng(1)
        rects = [Rect(0, 0, 2, 2), Rect(2, 0, 4, 2), Rect(1.5, 1.5, 3, 3)]
        # the third rect overlaps the first two, but overlap_ratio only needs
        # the *sampled* rects disjoint; use the first two as the union
        patch2 = Rect(1, 0.5, 3.5, 3)
        base = overlap_ratio(rects[:2], patch2)
        for _ in range(5):
            s = float(rng.uniform(0.1, 7.0))
            scaled = [Rect(r.x0 * s, r.y0 * s, r.x1 * s, r.y1 * s)
                      for r in rects[:2]]
            p2 = Rect(patch2.x0 * s, patch2.y0 * s, patch2.x1 * s, patch2.y1 * s)
            assert overlap_ratio(scaled, p2) == pytest.approx(base, rel=1e-12)


class TestGridInvariants:
    @pytest.mark.parametrize("flip", [False, True])
    def test_patches_pairwise_disjoint(self, flip):
        grid = make_grid(Rect(3.7, 1.2, 19.9, 27.4), flip=flip, view_size=8,
                         patch_size=2)
        rects = patch_rects(grid)
        areas = intersection_areas(rects, rects)
        off_diag = areas - np.diag(np.diag(areas))
        assert np.all(np.abs(off_diag) < 1e-12)

    @pytest.mark.parametrize("flip", [False, True])
    def test_patches_tile_the_crop(self, flip):
        grid = make_grid(Rect(3.7, 1.2, 19.9, 27.4), flip=flip, view_size=8,
                         patch_size=2)
        total = sum(map_patch_to_image(grid, i).area
                    for i in range(grid.n_patches))
        assert total == pytest.approx(grid.crop.rect.area, rel=1e-12)

    def test_overlap_area_conservation(self):
        # sum over grid-2 patches of ratio * patch area equals the
        # intersection of the union with crop 2
        rng = np.random.default_rng(2)
        grid1 = make_grid(Rect(2.5, 4.5, 22.5, 24.5), view_size=8, patch_size=2)
        grid2 = make_grid(Rect(10.1, 0.3, 30.1, 20.3), flip=True, view_size=8,
                          patch_size=2)
        sampled = rng.choice(grid1.n_patches, size=6, replace=False)
        rects1 = patch_rects(grid1, sampled)
        total = 0.0
        for i in range(grid2.n_patches):
            p = map_patch_to_image(grid2, i)
            total += overlap_ratio(rects1, p) * p.area
        expected = sum(
            intersection_area(map_patch_to_image(grid1, int(i)), grid2.crop.rect)
            for i in sampled
        )
        assert total == pytest.approx(expected, rel=1e-10)

    def test_ratio_bounds_random(self):
        rng = np.random.default_rng(3)
        grid1 = make_grid(Rect(0.7, 0.9, 28.7, 28.9), view_size=8, patch_size=2)
        rects1 = patch_rects(
            grid1, rng.choice(grid1.n_patches, size=8, replace=False))
        grid2 = make_grid(Rect(5.2, 7.8, 21.2, 23.8), view_size=8, patch_size=2)
        for i in range(grid2.n_patches):
            r = overlap_ratio(rects1, map_patch_to_image(grid2, i))
            assert 0.0 <= r <= 1.0
