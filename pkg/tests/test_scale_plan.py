import numpy as np
import pytest

from voxcascade.exceptions import CoverageError, GeometryError
from voxcascade.logic.scale_plan import (Assembler, assemble, extract_patch,
                                         patch_grid, patch_job, plan_scales,
                                         plan_to_json, upsample_patch)
from voxcascade.logic.volume import Volume3, resample_trilinear

LADDERS = [
    ((64, 64, 64), 32, 16),
    ((128, 128, 128), 64, 32),
    ((155, 240, 240), 64, 32),
]


class TestPlan:
    def test_power_of_two_ladder(self):
        plan = plan_scales((512, 512, 512), 64, 32)
        assert plan.n_scales == 3
        assert [plan.working_side_at(i) for i in range(4)] == [64, 128, 256, 512]
        assert plan.lr_sketch_shape == (128, 128, 128)
        assert plan.crop_window == ((0, 512), (0, 512), (0, 512))

    def test_non_power_of_two_is_cropped_from_the_next_cube(self):
        plan = plan_scales((155, 240, 240))
        assert plan.n_scales == 2
        assert plan.working_shape == (256, 256, 256)
        assert plan.crop_window == ((50, 205), (8, 248), (8, 248))

    def test_small_volume_needs_no_hr_scale(self):
        plan = plan_scales((40, 64, 10))
        assert plan.n_scales == 0
        assert plan.working_shape == (64, 64, 64)

    @pytest.mark.parametrize("shape, lr, patch", [
        ((64, 64), 64, 32), ((0, 4, 4), 64, 32), ((64, 64, 64), 64, 30), ((64, 64, 64), 32, 32),
    ])
    def test_rejected_plans(self, shape, lr, patch):
        with pytest.raises(GeometryError):
            plan_scales(shape, lr, patch)

    def test_scale_out_of_range(self):
        with pytest.raises(GeometryError):
            plan_scales((128, 128, 128)).working_side_at(2)


class TestPatchJobs:
    def test_first_patch_reads_a_padded_region(self):
        plan = plan_scales((128, 128, 128), 64, 32)
        job = patch_job(plan, 1, (0, 0, 0))
        assert job.out_region == ((0, 32),) * 3
        assert job.in_region == ((-8, 24),) * 3
        assert job.padding == ((8, 0),) * 3

    def test_last_patch_pads_the_high_side(self):
        plan = plan_scales((128, 128, 128), 64, 32)
        job = patch_job(plan, 1, (96, 0, 96))
        assert job.in_region[0] == (40, 72)
        assert job.padding[0] == (0, 8)

    def test_margin_four_on_128(self):
        plan = plan_scales((128, 128, 128), 64, 32)
        jobs = patch_grid(plan, 1, valid_margin=4)
        assert len(jobs) == 125
        assert sorted({job.out_region[2][0] for job in jobs}) == [0, 24, 48, 72, 96]

    @pytest.mark.parametrize("shape, lr, patch", LADDERS)
    @pytest.mark.parametrize("margin", [0, 4])
    def test_paste_regions_partition_every_scale(self, shape, lr, patch, margin):
        plan = plan_scales(shape, lr, patch)
        for scale in range(1, plan.n_scales + 1):
            counts = np.zeros(plan.working_shape_at(scale), dtype=np.int32)
            total = 0
            for job in patch_grid(plan, scale, margin):
                counts[tuple(slice(lo, hi) for lo, hi in job.paste_region)] += 1
                total += np.prod([hi - lo for lo, hi in job.paste_region])
                for (p_lo, p_hi), (o_lo, o_hi) in zip(job.paste_region, job.out_region):
                    assert o_lo <= p_lo < p_hi <= o_hi
            assert total == counts.size
            assert np.all(counts == 1)

    @pytest.mark.parametrize("shape, lr, patch", LADDERS)
    def test_in_region_center_maps_onto_out_region(self, shape, lr, patch):
        plan = plan_scales(shape, lr, patch)
        quarter = patch // 4
        for scale in range(1, plan.n_scales + 1):
            for job in patch_grid(plan, scale, 4):
                for (i_lo, _), (o_lo, o_hi) in zip(job.in_region, job.out_region):
                    assert o_lo % 2 == 0
                    assert (2 * (i_lo + quarter), 2 * (i_lo + 3 * quarter)) == (o_lo, o_hi)

    def test_margin_must_leave_a_paste_region(self):
        plan = plan_scales((128, 128, 128), 64, 32)
        with pytest.raises(GeometryError):
            patch_grid(plan, 1, valid_margin=16)
        with pytest.raises(GeometryError):
            patch_grid(plan, 0)


class TestExtract:
    def test_interior_region_is_a_plain_slice(self, random_volume):
        v = random_volume(16, 16, 16)
        region = ((2, 10), (4, 12), (8, 16))
        assert np.array_equal(extract_patch(v, region), v.voxels[2:10, 4:12, 8:16])

    def test_constant_volume_gives_a_constant_patch(self):
        patch = extract_patch(Volume3(np.full((32, 32, 32), 0.3)), ((-2, 30),) * 3)
        assert patch.shape == (32, 32, 32)
        assert np.all(patch == 0.3)

    def test_high_face_replicates_the_last_slice(self):
        ramp = np.broadcast_to(np.arange(8.0), (8, 8, 8))
        patch = extract_patch(Volume3(ramp), ((0, 8), (0, 8), (4, 12)))
        assert patch[0, 0].tolist() == [4, 5, 6, 7, 7, 7, 7, 7]


class TestAssemble:
    @pytest.fixture
    def plan(self):
        return plan_scales((64, 64, 64), 32, 16)

    @pytest.mark.parametrize("margin", [0, 4])
    def test_upsampled_patches_rebuild_the_global_upsampling(self, plan, random_volume, margin):
        prev = random_volume(32, 32, 32)
        out_shape = plan.working_shape_at(1)
        pairs = [(job, upsample_patch(extract_patch(prev, job.in_region), job, prev.shape, out_shape))
                 for job in patch_grid(plan, 1, margin)]
        assembled = assemble(pairs, out_shape, dtype=np.float64)
        expected = resample_trilinear(prev, out_shape)
        assert np.max(np.abs(assembled.voxels - expected.voxels)) < 1e-6

    def test_missing_job_names_its_paste_box(self, plan, rng):
        jobs = patch_grid(plan, 1, 4)
        missing = jobs[len(jobs) // 2]
        pairs = [(job, rng.random((16, 16, 16))) for job in jobs if job is not missing]
        with pytest.raises(CoverageError) as err:
            assemble(pairs, plan.working_shape_at(1))
        assert err.value.box == missing.paste_region

    def test_assembly_is_write_once(self, plan, rng):
        jobs = patch_grid(plan, 1, 4)
        patches = [rng.random((16, 16, 16)).astype(np.float32) for _ in jobs]
        assembled = assemble(zip(jobs, patches), plan.working_shape_at(1))
        for job, patch in zip(jobs, patches):
            paste = tuple(slice(lo, hi) for lo, hi in job.paste_region)
            local = tuple(slice(lo - o, hi - o) for (lo, hi), (o, _) in zip(job.paste_region, job.out_region))
            assert np.array_equal(assembled.voxels[paste], patch[local])

    def test_overlapping_paste_is_refused(self, plan):
        job = patch_grid(plan, 1, 0)[0]
        assembler = Assembler(plan.working_shape_at(1))
        assembler.paste(job, np.zeros((16, 16, 16)))
        with pytest.raises(GeometryError):
            assembler.paste(job, np.zeros((16, 16, 16)))

    def test_patch_shape_is_checked(self, plan):
        job = patch_grid(plan, 1, 0)[0]
        with pytest.raises(GeometryError):
            Assembler(plan.working_shape_at(1)).paste(job, np.zeros((8, 8, 8)))


def test_plan_json():
    description = plan_to_json(plan_scales((512, 512, 512), 64, 32), 4)
    assert description["n_scales"] == 3
    assert [scale["job_count"] for scale in description["scales"]] == [125, 11 ** 3, 21 ** 3]
    job = description["scales"][0]["jobs"][0]
    assert job["in_region"] == [[-8, 24]] * 3
    assert job["padding"] == [[8, 0]] * 3
    assert "jobs" not in plan_to_json(plan_scales((128, 128, 128)), 4, with_jobs=False)["scales"][0]
