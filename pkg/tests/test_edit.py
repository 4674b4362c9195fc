"""Edit engine: variance profiles, drop distributions, masks, applications."""

import numpy as np
import pytest

from conftest import random_dataset
from featedit.edit import (
    EditConfig,
    EditMask,
    apply_mask,
    build_all_masks,
    build_mask,
    drop_distribution,
    edit_dataset,
    merge_datasets,
    random_edit,
    read_masks_csv,
    variance_profile,
    write_masks_csv,
)
from featedit.errors import (
    DegenerateDatasetError,
    DomainError,
    MissingClassError,
    ShapeError,
)
from featedit.oracles import oracle_apply_mask, oracle_mask, oracle_profile, oracle_stats
from featedit.stats import ChannelStatsMatrix, stats_matrix
from featedit.store import Dataset, FeatureMap, LabeledSample


def _profile(intra, inter=None):
    """Build a VarianceProfile-shaped object directly from intra rows."""
    intra = np.asarray(intra, dtype=np.float64)
    stats = None
    from featedit.edit import VarianceProfile

    t, c = intra.shape
    class_means = np.zeros((t, c))
    grand = np.zeros(c)
    if inter is None:
        inter = np.zeros(c)
    return VarianceProfile(
        intra=intra,
        class_means=class_means,
        grand_mean=grand,
        inter=np.asarray(inter, dtype=np.float64),
    )


class TestVarianceProfile:
    def test_identical_rows_give_all_zero(self):
        row = np.array([1.5, -2.0, 0.25])
        stats = ChannelStatsMatrix(np.tile(row, (4, 1)))
        p = variance_profile(stats, [0, 0, 0, 0], 1)
        np.testing.assert_array_equal(p.intra, np.zeros((1, 3)))
        np.testing.assert_array_equal(p.inter, np.zeros(3))

    def test_two_class_hand_case(self):
        # Channel 0 stats {0,0} vs {2,2}; channel 1 stats {1,1} vs {1,1}.
        # Intra variances are all zero; inter for channel 0 is
        # ((0-1)^2 + (2-1)^2) / 2 = 1, for channel 1 it is 0.
        stats = ChannelStatsMatrix(np.array([[0.0, 1.0], [0.0, 1.0], [2.0, 1.0], [2.0, 1.0]]))
        p = variance_profile(stats, [0, 0, 1, 1], 2)
        np.testing.assert_array_equal(p.intra, np.zeros((2, 2)))
        np.testing.assert_array_equal(p.class_means, [[0.0, 1.0], [2.0, 1.0]])
        np.testing.assert_array_equal(p.grand_mean, [1.0, 1.0])
        np.testing.assert_array_equal(p.inter, [1.0, 0.0])

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(71)
        values = rng.normal(size=(100, 8)) * 3.0
        labels = np.repeat(np.arange(5), 20)
        stats = ChannelStatsMatrix(values)
        p = variance_profile(stats, labels, 5)
        intra, class_means, grand_mean, inter = oracle_profile(values.tolist(), labels, 5)
        np.testing.assert_allclose(p.intra, intra, rtol=1e-12)
        np.testing.assert_allclose(p.class_means, class_means, rtol=1e-12)
        np.testing.assert_allclose(p.grand_mean, grand_mean, rtol=1e-12)
        np.testing.assert_allclose(p.inter, inter, rtol=1e-12, atol=1e-15)

    def test_missing_class_rejected(self):
        stats = ChannelStatsMatrix(np.zeros((3, 2)))
        with pytest.raises(MissingClassError):
            variance_profile(stats, [0, 0, 2], 3)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(72)
        values = rng.normal(size=(30, 5))
        labels = np.array([0, 1, 2] * 10)
        p1 = variance_profile(ChannelStatsMatrix(values), labels, 3)
        perm = rng.permutation(30)
        p2 = variance_profile(ChannelStatsMatrix(values[perm]), labels[perm], 3)
        np.testing.assert_allclose(p1.intra, p2.intra, atol=1e-12)
        np.testing.assert_allclose(p1.inter, p2.inter, atol=1e-12)


class TestDropDistribution:
    def test_uniform(self):
        p = drop_distribution([1.0, 1.0, 1.0, 1.0])
        np.testing.assert_array_equal(p.entries, [0.25, 0.25, 0.25, 0.25])
        assert not p.undefined

    def test_direct_normalization(self):
        p = drop_distribution([3.0, 1.0, 0.0, 0.0])
        np.testing.assert_array_equal(p.entries, [0.75, 0.25, 0.0, 0.0])

    def test_all_zero_is_undefined(self):
        assert drop_distribution(np.zeros(6)).undefined

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            drop_distribution([1.0, -0.5])


class TestBuildMask:
    def test_default_cardinalities_at_256(self):
        rng = np.random.default_rng(81)
        profile = _profile(rng.uniform(0.1, 1.0, size=(2, 256)), rng.uniform(0.1, 1.0, size=256))
        mask = build_mask(profile, 0, EditConfig())
        assert len(mask.dropped_intra) == 51
        assert len(mask.dropped_inter) == 76
        assert 76 <= len(mask.dropped()) <= 127

    def test_tie_break_takes_lowest_indices(self):
        profile = _profile(np.ones((1, 10)), np.arange(10, dtype=float) + 1.0)
        mask = build_mask(profile, 0, EditConfig(intra_frac=0.2, inter_frac=0.0))
        assert mask.dropped_intra == frozenset({0, 1})

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(82)
        for trial in range(10):
            intra = rng.uniform(size=(3, 32))
            inter = rng.uniform(size=32)
            profile = _profile(intra, inter)
            cfg = EditConfig()
            for cls in range(3):
                mask = build_mask(profile, cls, cfg)
                want_intra, want_inter = oracle_mask(intra[cls], inter, 0.20, 0.30)
                assert mask.dropped_intra == want_intra
                assert mask.dropped_inter == want_inter

    def test_undefined_intra_contributes_empty_set(self):
        profile = _profile(np.zeros((1, 10)), np.arange(10, dtype=float) + 1.0)
        mask = build_mask(profile, 0, EditConfig())
        assert mask.dropped_intra == frozenset()
        assert len(mask.dropped_inter) == 3

    def test_undefined_inter_contributes_empty_set(self):
        profile = _profile(np.arange(10, dtype=float).reshape(1, 10) + 1.0, np.zeros(10))
        mask = build_mask(profile, 0, EditConfig())
        assert mask.dropped_inter == frozenset()
        assert len(mask.dropped_intra) == 2

    def test_both_undefined_rejected(self):
        profile = _profile(np.zeros((1, 10)), np.zeros(10))
        with pytest.raises(DegenerateDatasetError):
            build_mask(profile, 0, EditConfig())

    def test_inter_drops_shared_across_classes(self):
        rng = np.random.default_rng(83)
        profile = _profile(rng.uniform(size=(4, 16)), rng.uniform(size=16))
        masks = build_all_masks(profile, EditConfig())
        for mask in masks[1:]:
            assert mask.dropped_inter == masks[0].dropped_inter


class TestApplyMask:
    def _mask(self, keep):
        keep = np.asarray(keep, dtype=np.uint8)
        dropped = frozenset(int(i) for i in np.nonzero(keep == 0)[0])
        return EditMask(class_id=0, keep=keep, dropped_intra=dropped, dropped_inter=frozenset())

    def test_all_keep_is_identity(self):
        rng = np.random.default_rng(91)
        fm = FeatureMap(rng.normal(size=(4, 6, 6)))
        out = apply_mask(fm, self._mask(np.ones(4)))
        assert out == fm
        assert out is not fm

    def test_single_channel_drop(self):
        rng = np.random.default_rng(92)
        fm = FeatureMap(rng.normal(size=(5, 6, 6)) + 1.0)
        keep = np.ones(5)
        keep[3] = 0
        out = apply_mask(fm, self._mask(keep))
        assert np.count_nonzero(out.values[3]) == 0
        assert out.values[3].size == 36
        for ch in (0, 1, 2, 4):
            np.testing.assert_array_equal(out.values[ch], fm.values[ch])

    def test_matches_unit_loop_oracle(self):
        rng = np.random.default_rng(93)
        fm = FeatureMap(rng.normal(size=(6, 4, 4)))
        keep = (rng.random(6) < 0.5).astype(np.uint8)
        got = apply_mask(fm, self._mask(keep))
        np.testing.assert_array_equal(got.values, oracle_apply_mask(fm.values, keep))

    def test_idempotent(self):
        rng = np.random.default_rng(94)
        fm = FeatureMap(rng.normal(size=(4, 3, 3)))
        keep = np.array([1, 0, 1, 0])
        once = apply_mask(fm, self._mask(keep))
        twice = apply_mask(once, self._mask(keep))
        assert once == twice

    def test_input_not_modified(self):
        rng = np.random.default_rng(95)
        fm = FeatureMap(rng.normal(size=(2, 3, 3)))
        before = fm.values.copy()
        apply_mask(fm, self._mask(np.zeros(2)))
        np.testing.assert_array_equal(fm.values, before)

    def test_shape_mismatch(self):
        fm = FeatureMap(np.ones((3, 2, 2)))
        with pytest.raises(ShapeError):
            apply_mask(fm, self._mask(np.ones(4)))


class TestRandomEdit:
    def test_zero_ratio_is_identity(self):
        rng = np.random.default_rng(101)
        fm = FeatureMap(rng.normal(size=(3, 4, 4)))
        assert random_edit(fm, 0.0, np.random.default_rng(0)) == fm

    def test_same_seed_same_output(self):
        rng = np.random.default_rng(102)
        fm = FeatureMap(rng.normal(size=(3, 4, 4)))
        a = random_edit(fm, 0.4, np.random.default_rng(7))
        b = random_edit(fm, 0.4, np.random.default_rng(7))
        assert a == b

    def test_exact_zero_count_at_full_scale(self):
        # k = 256*36 = 9216 units; ratio 0.5 zeroes floor(9216*0.5/1.5) = 3072.
        rng = np.random.default_rng(103)
        fm = FeatureMap(rng.uniform(1.0, 2.0, size=(256, 6, 6)))
        out = random_edit(fm, 0.5, np.random.default_rng(11))
        assert int((out.values == 0.0).sum()) == 3072

    def test_bad_ratio_rejected(self):
        fm = FeatureMap(np.ones((1, 2, 2)))
        with pytest.raises(DomainError):
            random_edit(fm, 1.0, np.random.default_rng(0))


class TestEditDataset:
    def _masks_for(self, d, dropped_by_class):
        masks = []
        for cls in range(d.num_classes):
            keep = np.ones(d.channels, dtype=np.uint8)
            dropped = frozenset(dropped_by_class.get(cls, ()))
            keep[sorted(dropped)] = 0
            masks.append(
                EditMask(class_id=cls, keep=keep, dropped_intra=dropped, dropped_inter=frozenset())
            )
        return masks

    def test_all_keep_masks_identity(self):
        rng = np.random.default_rng(111)
        d = random_dataset(rng, n=6, num_classes=2, channels=3)
        assert edit_dataset(d, self._masks_for(d, {})) == d

    def test_single_class_channel_zeroed_everywhere(self):
        rng = np.random.default_rng(112)
        d = random_dataset(rng, n=5, num_classes=1, channels=4)
        out = edit_dataset(d, self._masks_for(d, {0: {2}}))
        for sample in out:
            assert np.count_nonzero(sample.feature.values[2]) == 0

    def test_matches_per_sample_oracle(self):
        rng = np.random.default_rng(113)
        d = random_dataset(rng, n=9, num_classes=3, channels=5)
        dropped = {0: {0, 4}, 1: {1}, 2: {2, 3}}
        masks = self._masks_for(d, dropped)
        out = edit_dataset(d, masks)
        for sample_in, sample_out in zip(d, out):
            keep = masks[sample_in.class_id].keep
            np.testing.assert_array_equal(
                sample_out.feature.values, oracle_apply_mask(sample_in.feature.values, keep)
            )
            assert sample_out.class_id == sample_in.class_id
            assert sample_out.box == sample_in.box
            assert sample_out.image_id == sample_in.image_id
            assert sample_out.difficult == sample_in.difficult

    def test_missing_mask_rejected(self):
        rng = np.random.default_rng(114)
        d = random_dataset(rng, n=4, num_classes=2, channels=3)
        masks = self._masks_for(d, {})[:1]
        with pytest.raises(MissingClassError):
            edit_dataset(d, masks)


class TestMergeDatasets:
    def test_empty_is_identity_element(self):
        rng = np.random.default_rng(121)
        d = random_dataset(rng, n=4, num_classes=2, channels=3)
        empty = Dataset(samples=[], num_classes=2)
        assert merge_datasets(d, empty) == d
        assert merge_datasets(empty, d) == d

    def test_order_and_counts(self):
        rng = np.random.default_rng(122)
        a = random_dataset(rng, n=3, num_classes=2, channels=3)
        b = random_dataset(rng, n=2, num_classes=2, channels=3)
        merged = merge_datasets(a, b)
        assert len(merged) == 5
        assert merged.samples[:3] == a.samples
        assert merged.samples[3:] == b.samples

    def test_class_counts_add(self):
        rng = np.random.default_rng(123)
        a = random_dataset(rng, n=9, num_classes=3, channels=2)
        b = random_dataset(rng, n=6, num_classes=3, channels=2)
        np.testing.assert_array_equal(
            merge_datasets(a, b).class_counts(), a.class_counts() + b.class_counts()
        )

    def test_geometry_mismatch(self):
        rng = np.random.default_rng(124)
        a = random_dataset(rng, n=2, num_classes=1, channels=3)
        b = random_dataset(rng, n=2, num_classes=1, channels=4)
        with pytest.raises(ShapeError):
            merge_datasets(a, b)


class TestScaleInvariance:
    def test_masks_invariant_under_feature_scaling(self):
        rng = np.random.default_rng(131)
        cfg = EditConfig()
        for trial in range(3):
            d = random_dataset(rng, n=30, num_classes=3, channels=8)
            base = build_all_masks(
                variance_profile(stats_matrix(d), d.labels(), 3), cfg
            )
            for lam in (1e-3, 7.0, 1e3):
                scaled = Dataset(
                    samples=[
                        LabeledSample(
                            FeatureMap(s.feature.values.astype(np.float64) * lam),
                            s.class_id,
                            s.box,
                            s.image_id,
                            s.difficult,
                        )
                        for s in d
                    ],
                    num_classes=3,
                )
                masks = build_all_masks(
                    variance_profile(stats_matrix(scaled), scaled.labels(), 3), cfg
                )
                for m_base, m_scaled in zip(base, masks):
                    assert m_base.dropped_intra == m_scaled.dropped_intra
                    assert m_base.dropped_inter == m_scaled.dropped_inter


class TestMaskCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(141)
        profile = _profile(rng.uniform(size=(3, 12)), rng.uniform(size=12))
        masks = build_all_masks(profile, EditConfig())
        path = tmp_path / "masks.csv"
        write_masks_csv(masks, path)
        back = read_masks_csv(path)
        assert len(back) == 3
        for m1, m2 in zip(masks, back):
            assert m1.class_id == m2.class_id
            assert m1.dropped_intra == m2.dropped_intra
            assert m1.dropped_inter == m2.dropped_inter
            np.testing.assert_array_equal(m1.keep, m2.keep)

    def test_full_pipeline_cross_check(self):
        # End to end against the oracle chain on a seeded dataset.
        rng = np.random.default_rng(142)
        d = random_dataset(rng, n=30, num_classes=3, channels=16)
        stats = stats_matrix(d)
        profile = variance_profile(stats, d.labels(), 3)
        cfg = EditConfig()
        rows = oracle_stats(d)
        o_intra, _, _, o_inter = oracle_profile(rows, d.labels(), 3)
        for cls in range(3):
            mask = build_mask(profile, cls, cfg)
            want_intra, want_inter = oracle_mask(o_intra[cls], o_inter, 0.20, 0.30)
            assert mask.dropped_intra == want_intra
            assert mask.dropped_inter == want_inter
