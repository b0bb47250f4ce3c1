"""
Tests for the synthetic paired-view generator and target assignment.
"""

import numpy as np
import pytest

from cvr_net.config import GeneratorConfig
from cvr_net.data import LatentLesion, assign_targets, generate_case, generate_dataset, split_dataset
from cvr_net.data.io import encode_dataset
from cvr_net.numerics import Rng
from cvr_net.schema import GroundTruthBox, Label, RoiCandidate, RoiGeometry, View


def _lesion_candidates(cands):
    return {c.lesion: c for c in cands if c.lesion is not None}


class TestGenerateCase:
    def test_noiseless_limit(self, noiseless_generator_config):
        sample = generate_case(noiseless_generator_config, Rng(11))
        for view in (View.VIEW1, View.VIEW2):
            gts = {gt.lesion: gt.geometry for gt in sample.ground_truth(view)}
            for lesion, cand in _lesion_candidates(sample.candidates(view)).items():
                assert cand.geometry == gts[lesion]
        feats1 = _lesion_candidates(sample.view1)
        feats2 = _lesion_candidates(sample.view2)
        assert feats1.keys() == feats2.keys()
        for lesion in feats1:
            assert np.array_equal(feats1[lesion].feature, feats2[lesion].feature)

    def test_noiseless_targets(self, noiseless_generator_config):
        sample = generate_case(noiseless_generator_config, Rng(11))
        for cands, targets in ((sample.view1, sample.targets1), (sample.view2, sample.targets2)):
            for cand, target in zip(cands, targets):
                if cand.lesion is not None:
                    assert target.label is Label.POSITIVE
                    assert np.array_equal(target.regression_target, np.zeros(4))
                else:
                    assert target.label is Label.NEGATIVE

    def test_same_seed_same_case(self, tiny_generator_config):
        a = generate_case(tiny_generator_config, Rng(99))
        b = generate_case(tiny_generator_config, Rng(99))
        assert encode_dataset([a]) == encode_dataset([b])

    def test_lesion_ids_shared_between_views(self, tiny_dataset):
        for sample in tiny_dataset:
            ids1 = sorted(gt.lesion for gt in sample.gt1)
            assert ids1 == sorted(gt.lesion for gt in sample.gt2)
            assert sorted(_lesion_candidates(sample.view1)) == ids1
            assert sorted(_lesion_candidates(sample.view2)) == ids1

    def test_candidate_counts_follow_config(self, tiny_generator_config, tiny_dataset):
        low, high = tiny_generator_config.distractors_per_view
        for sample in tiny_dataset:
            n_lesions = len(sample.gt1)
            assert tiny_generator_config.lesions_per_case[0] <= n_lesions <= tiny_generator_config.lesions_per_case[1]
            for cands in (sample.view1, sample.view2):
                assert low <= len(cands) - n_lesions <= high
                assert all(c.d_f == tiny_generator_config.d_f for c in cands)

    def test_boxes_inside_image(self, tiny_generator_config, tiny_dataset):
        extent = tiny_generator_config.image_extent
        for sample in tiny_dataset:
            for gt in sample.gt1 + sample.gt2:
                x0, y0, x1, y1 = gt.geometry.corners()
                assert x0 >= -1e-9 and y0 >= -1e-9 and x1 <= extent + 1e-9 and y1 <= extent + 1e-9

    def test_first_coordinate_correlated_across_views(self):
        cfg = GeneratorConfig(n_cases=200, seed=21, d_f=8, d_sig=4)
        xs1, xs2, ys1, ys2 = [], [], [], []
        for sample in generate_dataset(cfg):
            gt2 = {gt.lesion: gt.geometry for gt in sample.gt2}
            for gt in sample.gt1:
                xs1.append(gt.geometry.x)
                xs2.append(gt2[gt.lesion].x)
                ys1.append(gt.geometry.y)
                ys2.append(gt2[gt.lesion].y)
        assert np.corrcoef(xs1, xs2)[0, 1] > 0.9
        assert abs(np.corrcoef(ys1, ys2)[0, 1]) < 0.25

    def test_lesion_free_case(self):
        cfg = GeneratorConfig(n_cases=1, seed=4, d_f=8, d_sig=4, lesions_per_case=(0, 0))
        sample = generate_case(cfg, Rng(4))
        assert sample.gt1 == [] and sample.gt2 == []
        assert all(t.label is Label.NEGATIVE for t in sample.targets1 + sample.targets2)


class TestDistractors:
    @staticmethod
    def _distances(cfg):
        lure, cross = [], []
        for sample in generate_dataset(cfg):
            lesion1 = _lesion_candidates(sample.view1)
            lesion2 = _lesion_candidates(sample.view2)
            for lesion, cand in lesion1.items():
                cross.append(np.linalg.norm(cand.feature - lesion2[lesion].feature))
            for cands, lesions in ((sample.view1, lesion1), (sample.view2, lesion2)):
                for cand in cands:
                    if cand.lesion is None:
                        lure.append(min(np.linalg.norm(cand.feature - c.feature) for c in lesions.values()))
        return float(np.mean(lure)), float(np.mean(cross)), len(lure)

    def test_full_confusability_copies_a_signature(self):
        cfg = GeneratorConfig(n_cases=5, seed=8, d_f=16, d_sig=8, feature_noise_sigma=0.0,
                              distractor_confusability=1.0)
        for sample in generate_dataset(cfg):
            lesion_feats = [c.feature for c in sample.view1 if c.lesion is not None]
            for cand in sample.view1:
                if cand.lesion is None:
                    assert min(np.abs(cand.feature - f).max() for f in lesion_feats) < 1e-12

    def test_confusable_distractors_sit_within_noise_floor(self):
        confusable = GeneratorConfig(n_cases=300, seed=31, d_f=16, d_sig=8, distractor_confusability=1.0)
        lure, cross, n = self._distances(confusable)
        assert n >= 1000
        assert lure <= 1.1 * cross

    def test_unconfusable_distractors_stand_apart(self):
        plain = GeneratorConfig(n_cases=100, seed=31, d_f=16, d_sig=8, distractor_confusability=0.0)
        lure, cross, _ = self._distances(plain)
        assert lure > 1.5 * cross


class TestGenerateDataset:
    def test_deterministic_bytes(self, tiny_generator_config):
        assert encode_dataset(generate_dataset(tiny_generator_config)) == \
            encode_dataset(generate_dataset(tiny_generator_config))

    def test_seed_changes_data(self, tiny_generator_config):
        other = tiny_generator_config.model_copy(update={"seed": 4})
        assert encode_dataset(generate_dataset(tiny_generator_config)) != encode_dataset(generate_dataset(other))

    def test_case_ids_in_order(self, tiny_dataset):
        assert [s.case_id for s in tiny_dataset] == list(range(len(tiny_dataset)))

    def test_prefix_stable_under_more_cases(self, tiny_generator_config):
        more = tiny_generator_config.model_copy(update={"n_cases": 9})
        assert encode_dataset(generate_dataset(more)[:6]) == encode_dataset(generate_dataset(tiny_generator_config))

    def test_empty_dataset(self):
        assert generate_dataset(GeneratorConfig(n_cases=0, seed=1)) == []

    def test_split(self, tiny_dataset):
        train, test = split_dataset(tiny_dataset, 0.5)
        assert [s.case_id for s in train] == [0, 1, 2]
        assert [s.case_id for s in test] == [3, 4, 5]
        with pytest.raises(ValueError):
            split_dataset(tiny_dataset, 1.0)


class TestAssignTargets:
    GT = [GroundTruthBox(RoiGeometry(1, 1, 2, 2), 0)]

    def _cand(self, x, y, w, h):
        return RoiCandidate(RoiGeometry(x, y, w, h), np.zeros(2), View.VIEW1)

    def test_exact_overlap_is_positive(self):
        [target] = assign_targets([self._cand(1, 1, 2, 2)], self.GT)
        assert target.label is Label.POSITIVE
        assert np.array_equal(target.regression_target, np.zeros(4))

    def test_middle_overlap_is_ignored(self):
        [target] = assign_targets([self._cand(2, 1, 2, 2)], self.GT)
        assert target.label is Label.IGNORE

    def test_disjoint_is_negative(self):
        [target] = assign_targets([self._cand(50, 50, 2, 2)], self.GT)
        assert target.label is Label.NEGATIVE

    def test_no_ground_truth(self):
        assert assign_targets([self._cand(1, 1, 2, 2)], [])[0].label is Label.NEGATIVE

    def test_latent_lesion_validation(self):
        with pytest.raises(ValueError):
            LatentLesion(identity=0, shared_signature=np.zeros(2), size=0.0, depth=0.5)
        with pytest.raises(ValueError):
            LatentLesion(identity=0, shared_signature=np.zeros(2), size=1.0, depth=1.5)
