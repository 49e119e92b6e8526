"""Tests for voxel clouds, voxelization and LR/HR mappings."""

import numpy as np
import pytest

from colorflow.errors import (
    DegenerateGridError,
    DuplicateCoordinateError,
    InvalidRatioError,
    MappingError,
    ShapeError,
)
from colorflow.geometry import (
    LrHrMapping,
    PointCloud,
    compute_offsets,
    deduplicate,
    devoxelize,
    recover_mapping,
    validate_ratio,
    voxel_centers,
    voxelize,
)


def random_cloud(n=200, extent=16, seed=0):
    rng = np.random.default_rng(seed)
    coords = np.unique(rng.integers(0, extent, size=(n, 3)), axis=0)
    colors = rng.uniform(0, 1, size=(len(coords), 3))
    return PointCloud(coords=coords, colors=colors, extent=extent)


class TestPointCloud:
    """Tests for PointCloud validation."""

    def test_valid_cloud(self):
        """Test constructing a valid colored cloud."""
        cloud = PointCloud(coords=[[0, 0, 0], [1, 2, 3]], colors=[[0, 0, 0], [1, 1, 1]], extent=4)

        assert len(cloud) == 2
        assert cloud.coords.dtype == np.int64
        assert cloud.has_colors

    def test_arrays_are_read_only(self):
        """Test that cloud arrays cannot be modified."""
        cloud = PointCloud(coords=[[0, 0, 0]], colors=[[0.5, 0.5, 0.5]], extent=2)

        with pytest.raises(ValueError):
            cloud.coords[0, 0] = 1

    def test_rejects_duplicates(self):
        """Test that duplicate coordinates are rejected."""
        with pytest.raises(DuplicateCoordinateError):
            PointCloud(coords=[[1, 1, 1], [1, 1, 1]], colors=None, extent=4)

    def test_rejects_out_of_grid(self):
        """Test that coordinates outside the grid are rejected."""
        with pytest.raises(ShapeError, match="must lie in"):
            PointCloud(coords=[[0, 0, 4]], colors=None, extent=4)
        with pytest.raises(ShapeError):
            PointCloud(coords=[[-1, 0, 0]], colors=None, extent=4)

    def test_rejects_bad_shapes(self):
        """Test that misshapen arrays are rejected."""
        with pytest.raises(ShapeError):
            PointCloud(coords=[[0, 0]], colors=None, extent=4)
        with pytest.raises(ShapeError):
            PointCloud(coords=[[0, 0, 0]], colors=[[0, 0]], extent=4)

    def test_rejects_colors_outside_unit_range(self):
        """Test that colors outside [0, 1] are rejected."""
        with pytest.raises(ShapeError, match=r"\[0, 1\]"):
            PointCloud(coords=[[0, 0, 0]], colors=[[1.5, 0, 0]], extent=4)

    def test_from_arrays_infers_extent(self):
        """Test extent inference from coordinates."""
        cloud = PointCloud.from_arrays([[0, 0, 0], [5, 1, 2]])

        assert cloud.extent == 6
        assert cloud.colors is None

    def test_recentered(self):
        """Test shifting a cloud to the origin."""
        cloud = PointCloud(coords=[[2, 3, 4], [3, 5, 4]], colors=None, extent=8).recentered()

        np.testing.assert_array_equal(cloud.coords, [[0, 0, 0], [1, 2, 0]])


class TestValidateRatio:
    """Tests for ratio validation."""

    def test_accepts_integer_ratios(self):
        """Test that integer ratios of 2 and above pass."""
        assert validate_ratio(2) == 2
        assert validate_ratio(np.int64(5), extent=10) == 5

    @pytest.mark.parametrize("v", [1, 0, -3, 2.5, True])
    def test_rejects_invalid(self, v):
        """Test that small, fractional and boolean ratios fail."""
        with pytest.raises(InvalidRatioError):
            validate_ratio(v)

    def test_ratio_must_be_smaller_than_extent(self):
        """Test that the ratio must fit inside the grid."""
        with pytest.raises(DegenerateGridError):
            validate_ratio(8, extent=8)


class TestVoxelize:
    """Tests for HR to LR voxelization."""

    def test_small_example(self):
        """Test voxelizing four points at ratio 2."""
        hr = PointCloud(
            coords=[[0, 0, 0], [1, 1, 1], [2, 0, 0], [3, 1, 1]],
            colors=[[1, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1]],
            extent=4,
        )

        lr, mapping = voxelize(hr, 2)

        np.testing.assert_array_equal(lr.coords, [[0, 0, 0], [1, 0, 0]])
        np.testing.assert_array_equal(mapping.map, [0, 0, 1, 1])
        np.testing.assert_allclose(lr.colors, [[0.5, 0, 0.5], [0, 1, 0.5]])
        assert lr.extent == 2
        assert mapping.n_lr == 2
        assert mapping.n_hr == 4

    def test_lr_colors_are_member_means(self):
        """Test that each LR color is the mean of its HR members."""
        hr = random_cloud()
        lr, mapping = voxelize(hr, 3)

        for i in range(len(lr)):
            members = hr.colors[mapping.map == i]
            np.testing.assert_allclose(lr.colors[i], members.mean(axis=0), rtol=0, atol=1e-12)

    def test_matches_dictionary_grouping(self):
        """Test voxelization against grouping by floor division."""
        rng = np.random.default_rng(11)
        coords = rng.permutation(50**3)[:1000]
        coords = np.stack(np.unravel_index(coords, (50, 50, 50)), axis=1)
        hr = PointCloud(coords=coords, colors=rng.uniform(0, 1, (1000, 3)), extent=50)

        lr, mapping = voxelize(hr, 5)

        groups = {}
        for coord, color in zip(hr.coords.tolist(), hr.colors, strict=True):
            groups.setdefault(tuple(c // 5 for c in coord), []).append(color)
        assert {tuple(c) for c in lr.coords.tolist()} == set(groups)
        for i, key in enumerate(map(tuple, lr.coords.tolist())):
            np.testing.assert_allclose(lr.colors[i], np.mean(groups[key], axis=0), rtol=0, atol=1e-12)
        assert len(mapping.map) == 1000

    def test_devoxelized_colors_are_voxel_means(self):
        """Test that devoxelizing gives each HR point its voxel mean."""
        hr = random_cloud(n=600, extent=24, seed=5)
        lr, mapping = voxelize(hr, 3)

        coarse = devoxelize(lr.colors, mapping)

        for j in range(len(hr)):
            siblings = hr.colors[mapping.map == mapping.map[j]]
            np.testing.assert_allclose(coarse[j], siblings.mean(axis=0), rtol=0, atol=1e-12)

    def test_every_hr_point_inside_its_voxel(self):
        """Test that every HR point maps to the voxel containing it."""
        hr = random_cloud(extent=20, seed=3)
        lr, mapping = voxelize(hr, 4)

        np.testing.assert_array_equal(hr.coords // 4, lr.coords[mapping.map])
        assert mapping.children_per_lr.sum() == len(hr)
        assert mapping.children_per_lr.min() >= 1

    def test_lr_extent_rounds_up(self):
        """Test that the LR extent rounds up."""
        hr = PointCloud(coords=[[9, 9, 9]], colors=None, extent=10)

        lr, _ = voxelize(hr, 3)

        assert lr.extent == 4
        assert lr.colors is None


class TestRecoverMapping:
    """Tests for rebuilding the mapping from coordinates."""

    def test_matches_voxelize_for_permuted_lr(self):
        """Test recovering the mapping for a shuffled LR cloud."""
        hr = random_cloud(seed=1)
        lr, mapping = voxelize(hr, 2)
        perm = np.random.default_rng(0).permutation(len(lr))
        shuffled = PointCloud(coords=lr.coords[perm], colors=lr.colors[perm], extent=lr.extent)

        recovered = recover_mapping(shuffled, hr, 2)

        np.testing.assert_array_equal(perm[recovered.map], mapping.map)

    def test_orphan_hr_point_raises(self):
        """Test that an HR point without a parent is an error."""
        lr = PointCloud(coords=[[0, 0, 0]], colors=[[0, 0, 0]], extent=2)
        hr = PointCloud(coords=[[0, 0, 0], [3, 3, 3]], colors=None, extent=4)

        with pytest.raises(MappingError, match="no LR point"):
            recover_mapping(lr, hr, 2)

    def test_lr_point_without_children_raises(self):
        """Test that an LR point without children is an error."""
        lr = PointCloud(coords=[[0, 0, 0], [1, 1, 1]], colors=[[0, 0, 0], [1, 1, 1]], extent=2)
        hr = PointCloud(coords=[[0, 0, 0]], colors=None, extent=4)

        with pytest.raises(MappingError, match="not surjective"):
            recover_mapping(lr, hr, 2)


class TestLrHrMapping:
    """Tests for mapping validation."""

    def test_entries_must_be_in_range(self):
        """Test that mapping entries must index LR rows."""
        with pytest.raises(MappingError):
            LrHrMapping(map=np.array([0, 2]), voxel_size=2, n_lr=2)

    def test_invalid_ratio(self):
        """Test that the mapping ratio is validated."""
        with pytest.raises(InvalidRatioError):
            LrHrMapping(map=np.array([0]), voxel_size=1, n_lr=1)


class TestOffsets:
    """Tests for normalized in-voxel offsets."""

    def test_ratio_two_hits_corners(self):
        """Test that ratio 2 offsets are only -1 and 1."""
        hr = PointCloud(coords=[[0, 0, 0], [1, 0, 1], [1, 1, 1]], colors=None, extent=2 + 1)
        lr = PointCloud(coords=[[0, 0, 0]], colors=[[0, 0, 0]], extent=2)
        mapping = LrHrMapping(map=np.zeros(3, dtype=np.int64), voxel_size=2, n_lr=1)

        offsets = compute_offsets(hr, lr, mapping)

        np.testing.assert_array_equal(offsets, [[-1, -1, -1], [1, -1, 1], [1, 1, 1]])

    def test_ratio_three_has_center(self):
        """Test that ratio 3 offsets include the voxel center."""
        hr = PointCloud(coords=[[3, 4, 5]], colors=None, extent=6)
        lr = PointCloud(coords=[[1, 1, 1]], colors=[[0, 0, 0]], extent=2)
        mapping = LrHrMapping(map=np.array([0]), voxel_size=3, n_lr=1)

        np.testing.assert_array_equal(compute_offsets(hr, lr, mapping), [[-1, 0, 1]])

    def test_offsets_in_unit_cube(self):
        """Test that offsets stay in [-1, 1]."""
        hr = random_cloud(extent=30, seed=5)
        lr, mapping = voxelize(hr, 5)

        offsets = compute_offsets(hr, lr, mapping)

        assert offsets.shape == (len(hr), 3)
        assert offsets.min() >= -1.0
        assert offsets.max() <= 1.0

    def test_size_mismatch(self):
        """Test that mismatched clouds are rejected."""
        hr = random_cloud()
        lr, mapping = voxelize(hr, 2)
        fewer = PointCloud(coords=hr.coords[:-1], colors=None, extent=hr.extent)

        with pytest.raises(ShapeError):
            compute_offsets(fewer, lr, mapping)


class TestDevoxelize:
    """Tests for devoxelization and voxel centers."""

    def test_copies_parent_colors(self):
        """Test that HR points take their parent colors."""
        hr = random_cloud(seed=2)
        lr, mapping = voxelize(hr, 2)

        colors = devoxelize(lr.colors, mapping)

        np.testing.assert_array_equal(colors, lr.colors[mapping.map])

    def test_wrong_row_count(self):
        """Test that the wrong number of LR colors is rejected."""
        mapping = LrHrMapping(map=np.array([0, 1]), voxel_size=2, n_lr=2)

        with pytest.raises(ShapeError):
            devoxelize(np.zeros((3, 3)), mapping)

    def test_voxel_centers(self):
        """Test voxel centers in HR units."""
        np.testing.assert_allclose(voxel_centers(np.array([[0, 0, 0], [1, 2, 3]]), 2), [[0.5] * 3, [2.5, 4.5, 6.5]])
        np.testing.assert_allclose(voxel_centers(np.array([[1, 0, 0]]), 3), [[4, 1, 1]])


class TestDeduplicate:
    """Tests for merging points that share a voxel."""

    def test_averages_colors(self):
        """Test that merged points average their colors."""
        cloud = deduplicate(
            np.array([[1, 1, 1], [0, 0, 0], [1, 1, 1]]),
            np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 1.0]]),
            extent=4,
        )

        np.testing.assert_array_equal(cloud.coords, [[0, 0, 0], [1, 1, 1]])
        np.testing.assert_allclose(cloud.colors, [[0, 0, 0], [0.5, 0, 0.5]])

    def test_without_colors(self):
        """Test merging colorless points."""
        cloud = deduplicate(np.array([[2, 2, 2], [2, 2, 2]]), None, extent=3)

        assert len(cloud) == 1
        assert cloud.colors is None
