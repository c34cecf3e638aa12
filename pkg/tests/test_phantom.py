"""Phantom generator and perturbations: determinism, contrast rules, windows."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evidseg.errors import ConfigError, ShapeError
from evidseg.phantom import (
    PHASES,
    PerturbSpec,
    PhaseStack,
    _gaussian_kernel,
    generate_phantom,
    hu_window,
    perturb,
)


class TestPhaseStack:
    def test_orders_phases_canonically(self):
        img = np.zeros((16, 16))
        stack = PhaseStack(
            phases={"pv": img, "nc": img.copy(), "art": img.copy()},
            mask=np.zeros((16, 16), dtype=np.int64),
        )
        assert stack.present == ("nc", "art", "pv")
        assert stack.size == 16

    def test_rejects_bad_inputs(self):
        img = np.zeros((16, 16))
        mask = np.zeros((16, 16), dtype=np.int64)
        with pytest.raises(ShapeError):
            PhaseStack(phases={}, mask=mask)
        with pytest.raises(ConfigError):
            PhaseStack(phases={"t2w": img}, mask=mask)
        with pytest.raises(ShapeError):
            PhaseStack(phases={"nc": np.zeros((8, 8))}, mask=mask)
        with pytest.raises(ShapeError):
            PhaseStack(phases={"nc": np.full((16, 16), np.nan)}, mask=mask)


class TestGeneratePhantom:
    def test_shape_contract(self):
        (sample,) = generate_phantom(1, size=32, seed=0)
        assert sample.present == PHASES
        for img in sample.phases.values():
            assert img.shape == (32, 32)
            assert img.dtype == np.float64
        assert sample.mask.shape == (32, 32)
        assert set(np.unique(sample.mask)) <= {0, 1}

    def test_intensities_stay_in_unit_interval(self):
        for sample in generate_phantom(20, size=32, seed=3):
            for img in sample.phases.values():
                assert img.min() >= 0.0
                assert img.max() <= 1.0

    def test_same_seed_is_bitwise_identical(self):
        a = generate_phantom(6, size=32, seed=9)
        b = generate_phantom(6, size=32, seed=9)
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.mask, t.mask)
            for name in PHASES:
                np.testing.assert_array_equal(s.phases[name], t.phases[name])

    def test_samples_are_independent_of_run_length(self):
        # sample i depends only on (seed, i), not on how many samples the
        # run asked for
        long = generate_phantom(8, size=32, seed=4)
        short = generate_phantom(3, size=32, seed=4)
        np.testing.assert_array_equal(long[2].mask, short[2].mask)
        np.testing.assert_array_equal(long[2].phases["art"], short[2].phases["art"])

    def test_different_seeds_differ(self):
        a = generate_phantom(1, size=32, seed=0)[0]
        b = generate_phantom(1, size=32, seed=1)[0]
        assert not np.array_equal(a.phases["nc"], b.phases["nc"])

    def test_case_grouping(self):
        samples = generate_phantom(12, size=32, seed=0, slices_per_case=5)
        assert [s.case_id for s in samples] == [0] * 5 + [1] * 5 + [2, 2]
        assert [s.sample_id for s in samples] == list(range(12))

    def test_phase_contrast_ordering_on_lesions(self):
        # arterial lesions are enhanced, portal-venous lesions washed out,
        # non-contrast sits in between: check the mean lesion intensity
        # ordering on every generated sample that has a lesion
        samples = [s for s in generate_phantom(40, size=32, seed=7) if s.mask.any()]
        assert len(samples) > 10
        for s in samples:
            lesion = s.mask == 1
            art = s.phases["art"][lesion].mean()
            nc = s.phases["nc"][lesion].mean()
            pv = s.phases["pv"][lesion].mean()
            assert art > nc > pv

    def test_some_samples_have_no_lesion(self):
        samples = generate_phantom(60, size=32, seed=11)
        empties = sum(1 for s in samples if not s.mask.any())
        assert 0 < empties < len(samples)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            generate_phantom(0, size=32)
        with pytest.raises(ConfigError):
            generate_phantom(1, size=8)
        with pytest.raises(ConfigError):
            generate_phantom(1, size=32, slices_per_case=0)


class TestPerturbSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            PerturbSpec(kind="gamma")
        with pytest.raises(ConfigError):
            PerturbSpec(kind="noise", noise_var=-0.1)
        with pytest.raises(ConfigError):
            PerturbSpec(kind="blur", blur_var=0.0, kernel_size=9)
        with pytest.raises(ConfigError):
            PerturbSpec(kind="blur", blur_var=10.0, kernel_size=4)
        with pytest.raises(ConfigError):
            PerturbSpec(kind="missing", n_missing=0)


@pytest.fixture(scope="module")
def sample():
    return generate_phantom(1, size=32, seed=17)[0]


class TestNoisePerturbation:
    def test_zero_variance_is_identity(self, sample):
        out = perturb(sample, PerturbSpec(kind="noise", noise_var=0.0, seed=1))
        for name in PHASES:
            np.testing.assert_array_equal(out.phases[name], sample.phases[name])

    def test_changes_pixels_and_keeps_range(self, sample):
        out = perturb(sample, PerturbSpec(kind="noise", noise_var=0.05, seed=1))
        for name in PHASES:
            assert not np.array_equal(out.phases[name], sample.phases[name])
            assert out.phases[name].min() >= 0.0
            assert out.phases[name].max() <= 1.0

    def test_mask_untouched_and_deterministic(self, sample):
        spec = PerturbSpec(kind="noise", noise_var=0.1, seed=5)
        a = perturb(sample, spec)
        b = perturb(sample, spec)
        np.testing.assert_array_equal(a.mask, sample.mask)
        for name in PHASES:
            np.testing.assert_array_equal(a.phases[name], b.phases[name])


class TestBlurPerturbation:
    def test_kernel_normalization(self):
        for k, var in [(1, 1.0), (9, 10.0), (13, 10.0), (23, 20.0)]:
            kernel = _gaussian_kernel(k, var)
            assert kernel.shape == (k,)
            assert abs(kernel.sum() - 1.0) < 1e-12
            np.testing.assert_allclose(kernel, kernel[::-1])  # symmetric

    def test_unit_kernel_is_identity(self, sample):
        out = perturb(sample, PerturbSpec(kind="blur", blur_var=10.0, kernel_size=1))
        for name in PHASES:
            np.testing.assert_array_equal(out.phases[name], sample.phases[name])

    def test_constant_image_is_preserved(self):
        stack = PhaseStack(
            phases={"nc": np.full((32, 32), 0.4)},
            mask=np.zeros((32, 32), dtype=np.int64),
        )
        out = perturb(stack, PerturbSpec(kind="blur", blur_var=20.0, kernel_size=9))
        np.testing.assert_allclose(out.phases["nc"], 0.4, atol=1e-12)

    def test_blur_reduces_variance(self, sample):
        out = perturb(sample, PerturbSpec(kind="blur", blur_var=10.0, kernel_size=9))
        for name in PHASES:
            assert out.phases[name].var() < sample.phases[name].var()
            assert out.phases[name].min() >= 0.0
            assert out.phases[name].max() <= 1.0


class TestMissingPerturbation:
    def test_drops_requested_count(self, sample):
        out = perturb(sample, PerturbSpec(kind="missing", n_missing=1, seed=3))
        assert len(out.present) == 3
        for name in out.present:
            np.testing.assert_array_equal(out.phases[name], sample.phases[name])
        out2 = perturb(sample, PerturbSpec(kind="missing", n_missing=2, seed=3))
        assert len(out2.present) == 2

    def test_never_drops_all_phases(self, sample):
        with pytest.raises(ConfigError):
            perturb(sample, PerturbSpec(kind="missing", n_missing=4, seed=0))

    def test_choice_is_seed_dependent_but_deterministic(self, sample):
        spec = PerturbSpec(kind="missing", n_missing=2, seed=8)
        assert perturb(sample, spec).present == perturb(sample, spec).present
        picks = {
            perturb(sample, PerturbSpec(kind="missing", n_missing=2, seed=s)).present
            for s in range(12)
        }
        assert len(picks) > 1


class TestHuWindow:
    def test_window_center_maps_to_half(self):
        assert hu_window(np.array([40.0])) == pytest.approx(0.5)
        assert hu_window(np.array([100.0]), level=100.0, width=50.0) == pytest.approx(0.5)

    def test_clamp_edges(self):
        # level=40, width=140: everything at or below -30 HU is 0, at or
        # above 110 HU is 1
        raw = np.array([-200.0, -30.0, 40.0, 110.0, 400.0])
        np.testing.assert_allclose(hu_window(raw), [0.0, 0.0, 0.5, 1.0, 1.0])

    def test_linear_in_between(self):
        raw = np.array([-30.0 + 35.0, -30.0 + 105.0])
        np.testing.assert_allclose(hu_window(raw), [0.25, 0.75])

    def test_rejects_non_positive_width(self):
        with pytest.raises(ConfigError):
            hu_window(np.zeros(3), level=40.0, width=0.0)

    @given(st.floats(-1000.0, 1000.0), st.floats(-1000.0, 1000.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_input(self, a, b):
        lo, hi = min(a, b), max(a, b)
        out = hu_window(np.array([lo, hi]))
        assert out[0] <= out[1]
