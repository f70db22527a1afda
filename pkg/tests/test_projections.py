"""Grassmannian draws, projections, separation and Holder checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, ks_2samp

from fractdim.errors import (
    AlphabetMismatchError,
    BudgetExceededError,
    PreconditionError,
)
from fractdim.ifs import SimilarityIFS, sample_points
from fractdim.measures import BernoulliMeasure
from fractdim.projections import (
    EDEReport,
    HolderReport,
    MarstrandReport,
    Subspace,
    ede_check,
    holder_inverse_check,
    marstrand_experiment,
    project_cloud,
    sample_subspace,
)
from fractdim.runtime import substream

CANTOR_DIM = math.log(2) / math.log(3)


def cantor():
    return SimilarityIFS(ratios=[1 / 3, 1 / 3], translations=[0.0, 2 / 3])


def square_corners():
    t = np.array([[0, 0], [2 / 3, 0], [0, 2 / 3], [2 / 3, 2 / 3]], dtype=float)
    return SimilarityIFS(ratios=[1 / 3] * 4, translations=t)


def overlap_pair():
    return SimilarityIFS(ratios=[0.5, 0.5], translations=[0.0, 0.5])


UNIFORM2 = BernoulliMeasure([0.5, 0.5])
UNIFORM4 = BernoulliMeasure([0.25] * 4)


class TestSubspace:
    def test_orthonormal_enforced(self):
        with pytest.raises(PreconditionError):
            Subspace([[1.0, 1.0]])
        with pytest.raises(PreconditionError):
            Subspace([[1.0, 0.0, 0.0], [0.1, 1.0, 0.0]])

    def test_shape_enforced(self):
        with pytest.raises(PreconditionError):
            Subspace([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

    def test_every_draw_orthonormal(self):
        for j in range(50):
            v = sample_subspace(4, 2, 9, index=j)
            gram = v.basis @ v.basis.T
            assert np.max(np.abs(gram - np.eye(2))) <= 1e-10

    def test_proper_subspace_required(self):
        with pytest.raises(PreconditionError):
            sample_subspace(3, 3, 0)
        with pytest.raises(PreconditionError):
            sample_subspace(3, 0, 0)

    def test_deterministic(self):
        a = sample_subspace(5, 2, 13, index=7)
        b = sample_subspace(5, 2, 13, index=7)
        assert np.array_equal(a.basis, b.basis)

    def test_planar_angle_uniform(self):
        angles = np.empty(10_000)
        for j in range(angles.size):
            v = sample_subspace(2, 1, 31, index=j).basis[0]
            angles[j] = math.atan2(v[1], v[0]) % math.pi
        assert kstest(angles / math.pi, "uniform").pvalue > 0.01

    def test_rotation_invariance(self):
        theta = 0.83
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        plain = np.empty(4000)
        rotated = np.empty(4000)
        for j in range(4000):
            v = sample_subspace(2, 1, 37, index=j).basis[0]
            w = rot @ sample_subspace(2, 1, 38, index=j).basis[0]
            plain[j] = math.atan2(v[1], v[0]) % math.pi
            rotated[j] = math.atan2(w[1], w[0]) % math.pi
        assert ks_2samp(plain, rotated).pvalue > 0.01


class TestProjectCloud:
    def test_axis_extraction(self):
        cloud = sample_points(square_corners(), UNIFORM4, 500, tol=1e-6, seed=1)
        axis = Subspace([[0.0, 1.0]])
        proj = project_cloud(cloud, axis)
        assert proj.points[:, 0] == pytest.approx(cloud.points[:, 1], abs=0)
        assert np.array_equal(proj.weights, cloud.weights)
        assert proj.truncation_error == cloud.truncation_error

    def test_never_expands_distances(self):
        rng = substream(5, 99)
        pts = rng.standard_normal((300, 3))
        from fractdim.dimest import PointCloud

        cloud = PointCloud(pts)
        v = sample_subspace(3, 2, 11)
        proj = project_cloud(cloud, v)
        a = rng.integers(0, 300, 10_000)
        b = rng.integers(0, 300, 10_000)
        d_src = np.linalg.norm(pts[a] - pts[b], axis=1)
        d_img = np.linalg.norm(proj.points[a] - proj.points[b], axis=1)
        assert np.all(d_img <= d_src + 1e-12)

    def test_dim_mismatch(self):
        cloud = sample_points(cantor(), UNIFORM2, 100, tol=1e-6, seed=0)
        with pytest.raises(PreconditionError):
            project_cloud(cloud, sample_subspace(3, 1, 0))

    def test_product_projects_to_cantor_boxes(self):
        planar = sample_points(square_corners(), UNIFORM4, 40_000, tol=1e-7, seed=3)
        line = sample_points(cantor(), UNIFORM2, 40_000, tol=1e-7, seed=4)
        proj = project_cloud(planar, Subspace([[1.0, 0.0]]))
        cell = 3.0**-6
        boxes_proj = np.unique(np.floor(proj.points[:, 0] / cell).astype(np.int64))
        boxes_line = np.unique(np.floor(line.points[:, 0] / cell).astype(np.int64))
        assert np.array_equal(boxes_proj, boxes_line)
        assert boxes_proj.size == 2**6


class TestMarstrand:
    def test_product_projects_to_full_dimension(self):
        rep = marstrand_experiment(
            square_corners(), UNIFORM4, d=1, num_directions=16,
            count=40_000, seed=5, max_pairs=1_000_000,
        )
        assert rep.predicted == 1.0
        assert rep.fraction_within >= 0.9
        assert not rep.below.any()

    def test_dust_keeps_its_dimension(self):
        dust = SimilarityIFS(
            ratios=[1 / 3, 1 / 3], translations=np.array([[0, 0], [2 / 3, 2 / 5]])
        )
        rep = marstrand_experiment(
            dust, UNIFORM2, d=1, num_directions=16,
            count=40_000, seed=5, tol=0.07, max_pairs=1_000_000,
        )
        assert rep.predicted == pytest.approx(CANTOR_DIM, abs=1e-12)
        assert rep.fraction_within >= 0.9

    def test_planted_exceptional_direction_flagged(self):
        axis = Subspace([[1.0, 0.0]])
        rep = marstrand_experiment(
            square_corners(), UNIFORM4, d=1, num_directions=0,
            count=40_000, seed=5, directions=[axis], max_pairs=1_000_000,
        )
        assert rep.below[0]
        assert rep.estimates[0] == pytest.approx(CANTOR_DIM, abs=0.07)

    def test_bad_projection_dim(self):
        with pytest.raises(PreconditionError):
            marstrand_experiment(square_corners(), UNIFORM4, 2, 4, 1000, 0)
        with pytest.raises(PreconditionError):
            marstrand_experiment(cantor(), UNIFORM2, 1, 4, 1000, 0)

    def test_worker_independent(self):
        kw = dict(num_directions=4, count=20_000, seed=7, max_pairs=200_000)
        a = marstrand_experiment(square_corners(), UNIFORM4, 1, workers=1, **kw)
        b = marstrand_experiment(square_corners(), UNIFORM4, 1, workers=3, **kw)
        assert np.array_equal(a.estimates, b.estimates)
        assert a.fraction_within == b.fraction_within


class TestEDE:
    def test_cantor_level_one_geometry(self):
        rep = ede_check(cantor(), (0,) * 40, range(1, 11), epsilon=0.0, tol=1e-10)
        assert rep.dist_lower[0] == pytest.approx(2 / 3, abs=1e-9)
        assert rep.diam[0] == pytest.approx(1 / 3, abs=1e-12)
        assert rep.dist_lower[0] / rep.diam[0] == pytest.approx(2.0, abs=1e-8)
        # level-1 enclosures [0, 1/3] and [2/3, 1] sit one gap width apart
        assert rep.constant == pytest.approx(1 / 3, abs=1e-12)
        assert rep.all_passed
        assert not rep.overlap_suspected

    def test_ssc_passes_at_depth_twenty(self):
        rng = substream(11, 3)
        words = UNIFORM2.sample_batch(10, 40, rng)
        for row in words:
            rep = ede_check(cantor(), tuple(row), range(1, 21), 0.1, tol=1e-12)
            assert rep.all_passed
            assert rep.worst_exponent < 1.1

    def test_pruning_keeps_search_small(self):
        rep = ede_check(cantor(), (0, 1) * 20, range(1, 21), 0.1, tol=1e-12)
        # full enumeration would visit 2^21 nodes; separation prunes almost all
        assert rep.expansions < 2000

    def test_overlap_system_fails_with_evidence(self):
        word = (0,) + (1,) * 49
        rep = ede_check(overlap_pair(), word, range(1, 11), 0.1, tol=1e-12)
        assert rep.overlap_suspected
        assert not rep.passed.any()
        assert rep.worst_exponent == math.inf

    def test_rotated_separated_system_passes(self):
        c, s = math.cos(0.4), math.sin(0.4)
        rot = [[[c, -s], [s, c]], [[c, s], [-s, c]]]
        F = SimilarityIFS(
            ratios=[0.3, 0.3], translations=[[0, 0], [1, 0]], orthogonal=rot
        )
        word = tuple(UNIFORM2.sample_batch(1, 30, substream(2, 4))[0])
        rep = ede_check(F, word, range(1, 9), 0.1, tol=1e-9)
        assert rep.all_passed

    def test_depth_beyond_word_rejected(self):
        with pytest.raises(PreconditionError):
            ede_check(cantor(), (0, 1, 0), range(1, 5), 0.1, tol=1.0)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(PreconditionError):
            ede_check(cantor(), (0,) * 20, range(1, 5), -0.1, tol=1e-6)

    def test_budget_partial_then_error(self, monkeypatch):
        monkeypatch.setenv("FRACTDIM_BUDGET", "60")
        rep = ede_check(cantor(), (0,) * 40, range(1, 21), 0.1, tol=1e-12)
        assert rep.partial
        assert 0 < rep.depths.size < 20
        monkeypatch.setenv("FRACTDIM_BUDGET", "2")
        with pytest.raises(BudgetExceededError):
            ede_check(cantor(), (0,) * 40, range(1, 21), 0.1, tol=1e-12)

    @given(
        st.floats(0.2, 0.45),
        st.floats(0.5, 1.0),
        st.integers(0, 2**20 - 1),
        st.floats(0.0, 0.15),
        st.floats(0.05, 0.3),
    )
    @settings(max_examples=25, deadline=None)
    def test_pass_monotone_in_epsilon(self, lam, t1, bits, eps, gap):
        F = SimilarityIFS(ratios=[lam, lam], translations=[0.0, t1])
        word = tuple((bits >> k) & 1 for k in range(20)) + (0,) * 20
        small = ede_check(F, word, range(1, 7), eps, tol=1e-6)
        large = ede_check(F, word, range(1, 7), eps + gap, tol=1e-6)
        assert np.all(~small.passed | large.passed)


class TestHolder:
    def test_ssc_constants_below_level_one_bound(self):
        hol = holder_inverse_check(
            cantor(), UNIFORM2, [0.5, 0.8, 0.95], 100, seed=3
        )
        for a, alpha in enumerate(hol.alphas):
            assert hol.overall[a] <= 3.0**alpha + 1e-9
            assert hol.overall[a] > 1.0
        assert hol.skipped.sum() == 0
        assert hol.stabilized().all()

    def test_double_address_word_skips_at_every_depth(self):
        word = [(0,) + (1,) * 39]
        hol = holder_inverse_check(
            overlap_pair(), UNIFORM2, [0.8], 1, seed=3,
            base_words=word, max_depth=16,
        )
        assert np.all(hol.skipped == 1)

    def test_overlap_blows_up_against_ssc(self):
        ssc = holder_inverse_check(cantor(), UNIFORM2, [0.8], 60, seed=3)
        over = holder_inverse_check(overlap_pair(), UNIFORM2, [0.8], 60, seed=3)
        assert over.overall[0] > 10.0 * ssc.overall[0]

    def test_alpha_domain(self):
        for alpha in (0.0, 1.0, -0.3, 1.7):
            with pytest.raises(PreconditionError):
                holder_inverse_check(cantor(), UNIFORM2, [alpha], 10, seed=0)

    def test_alphabet_mismatch(self):
        mu3 = BernoulliMeasure([0.2, 0.3, 0.5])
        with pytest.raises(AlphabetMismatchError):
            holder_inverse_check(cantor(), mu3, [0.5], 10, seed=0)

    def test_needs_samples(self):
        with pytest.raises(PreconditionError):
            holder_inverse_check(cantor(), UNIFORM2, [0.5], 0, seed=0)
