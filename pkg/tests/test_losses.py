import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    exact_gaussian,
    gauss_jordan_inverse,
    random_spd,
    random_stats,
    stats_from_gaussians,
)
from tta_align import losses
from tta_align.errors import BatchTooSmall, DimensionMismatch, SingleClass, UnknownClass
from tta_align.losses import (
    RATIO_FLOOR,
    class_distance_matrix,
    distance_report,
    inter_distance,
    intra_distance,
    loss_cafa,
    loss_entropy,
    loss_global_fa,
    loss_intra,
    loss_pseudo_label,
    mahalanobis,
)


class TestMahalanobis:
    def test_zero_displacement(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=3)
        g = exact_gaussian(0, mu, random_spd(rng, 3))
        assert abs(mahalanobis(mu, g)) <= 1e-12

    def test_euclidean_case(self):
        g = exact_gaussian(0, np.zeros(2), np.eye(2))
        assert mahalanobis(np.array([3.0, 4.0]), g) == pytest.approx(25.0, abs=1e-12)

    def test_gauss_jordan_oracle(self):
        rng = np.random.default_rng(1)
        for d in (2, 3, 6):
            mu = rng.normal(size=d)
            sigma = random_spd(rng, d)
            x = rng.normal(size=d)
            g = exact_gaussian(0, mu, sigma)
            ref = float((x - mu) @ gauss_jordan_inverse(sigma) @ (x - mu))
            assert mahalanobis(x, g) == pytest.approx(ref, rel=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        g = exact_gaussian(0, rng.normal(size=4), random_spd(rng, 4))
        for _ in range(50):
            assert mahalanobis(rng.normal(size=4), g) >= 0.0

    def test_linear_reparameterization_invariance(self):
        # D(Ax; A mu, A Sigma A^T) == D(x; mu, Sigma) for invertible A
        rng = np.random.default_rng(3)
        d = 4
        mu = rng.normal(size=d)
        sigma = random_spd(rng, d)
        a = rng.normal(size=(d, d)) + 2.0 * np.eye(d)  # well-conditioned
        x = rng.normal(size=d)
        base = mahalanobis(x, exact_gaussian(0, mu, sigma))
        mapped_sigma = a @ sigma @ a.T
        mapped = mahalanobis(
            a @ x, exact_gaussian(0, a @ mu, 0.5 * (mapped_sigma + mapped_sigma.T))
        )
        assert mapped == pytest.approx(base, rel=1e-8)

    def test_dimension_mismatch(self):
        g = exact_gaussian(0, np.zeros(3), np.eye(3))
        with pytest.raises(DimensionMismatch):
            mahalanobis(np.zeros(4), g)


class TestIntraInter:
    @staticmethod
    def _symmetric_two_class():
        sigma = np.eye(2)
        return stats_from_gaussians(
            [
                exact_gaussian(0, np.array([-1.0, 0.0]), sigma),
                exact_gaussian(1, np.array([1.0, 0.0]), sigma),
            ]
        )

    def test_intra_at_mean(self):
        stats = self._symmetric_two_class()
        assert intra_distance(np.array([-1.0, 0.0]), 0, stats) == pytest.approx(0.0)
        assert intra_distance(np.array([1.0, 0.0]), 1, stats) == pytest.approx(0.0)
        assert intra_distance(np.array([1.0, 0.0]), 0, stats) > 0.0

    def test_intra_is_definitional(self):
        rng = np.random.default_rng(4)
        stats = random_stats(rng, 3, 4)
        x = rng.normal(size=4)
        for c in range(3):
            assert intra_distance(x, c, stats) == mahalanobis(x, stats.classes[c])

    def test_inter_two_class(self):
        stats = self._symmetric_two_class()
        x = np.array([1.0, 0.0])
        assert inter_distance(x, 1, stats) == mahalanobis(x, stats.classes[0])

    def test_inter_equidistant_average(self):
        # three unit-variance classes at distance 2 from the origin
        gaussians = [
            exact_gaussian(c, mu, np.eye(2))
            for c, mu in enumerate([(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)])
        ]
        stats = stats_from_gaussians(gaussians)
        x = np.zeros(2)
        assert inter_distance(x, 0, stats) == pytest.approx(4.0)

    def test_inter_brute_force(self):
        rng = np.random.default_rng(5)
        stats = random_stats(rng, 4, 3)
        x = rng.normal(size=3)
        for label in range(4):
            ref = sum(
                mahalanobis(x, stats.classes[c]) for c in range(4) if c != label
            ) / 3.0
            assert inter_distance(x, label, stats) == pytest.approx(ref, rel=1e-12)

    def test_single_class_raises(self):
        rng = np.random.default_rng(6)
        stats = random_stats(rng, 1, 3)
        with pytest.raises(SingleClass):
            inter_distance(np.zeros(3), 0, stats)

    def test_unknown_class(self):
        rng = np.random.default_rng(7)
        stats = random_stats(rng, 3, 3)
        with pytest.raises(UnknownClass):
            intra_distance(np.zeros(3), 3, stats)
        with pytest.raises(UnknownClass):
            inter_distance(np.zeros(3), -1, stats)

    def test_class_distance_matrix(self):
        rng = np.random.default_rng(8)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(6, 4))
        mat = class_distance_matrix(batch, stats)
        for i in range(6):
            for c in range(3):
                ref = mahalanobis(batch[i], stats.classes[c])
                assert mat[i, c] == pytest.approx(ref, rel=1e-12)


class TestGlobalFaLoss:
    def test_constructed_match_is_zero(self):
        stats = stats_from_gaussians(
            [exact_gaussian(0, np.zeros(1), np.eye(1))],
            global_mu=np.zeros(1),
            global_sigma=np.ones((1, 1)),
        )
        assert loss_global_fa(np.array([[-1.0], [1.0]]), stats) == pytest.approx(0.0)

    def test_naive_oracle(self):
        rng = np.random.default_rng(9)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(10, 4))
        mu_t = batch.mean(axis=0)
        centered = batch - mu_t
        sigma_t = centered.T @ centered / 10
        ref = float(
            np.sum((stats.global_mu - mu_t) ** 2)
            + np.sum((stats.global_sigma - sigma_t) ** 2)
        )
        assert loss_global_fa(batch, stats) == pytest.approx(ref, rel=1e-12)

    def test_batch_too_small(self):
        rng = np.random.default_rng(10)
        stats = random_stats(rng, 2, 3)
        with pytest.raises(BatchTooSmall):
            loss_global_fa(np.zeros((1, 3)), stats)


class TestIntraLoss:
    def test_zero_at_class_means(self):
        rng = np.random.default_rng(11)
        stats = random_stats(rng, 3, 4)
        batch = np.stack([stats.classes[c].mu for c in (0, 1, 2, 1)])
        assert loss_intra(batch, np.array([0, 1, 2, 1]), stats) == pytest.approx(0.0)

    def test_single_sample(self):
        rng = np.random.default_rng(12)
        stats = random_stats(rng, 3, 4)
        x = rng.normal(size=4)
        assert loss_intra(x[None, :], np.array([2]), stats) == pytest.approx(
            intra_distance(x, 2, stats), rel=1e-12
        )

    def test_brute_force(self):
        rng = np.random.default_rng(13)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(8, 4))
        labels = rng.integers(0, 3, size=8)
        ref = np.mean([intra_distance(x, c, stats) for x, c in zip(batch, labels)])
        assert loss_intra(batch, labels, stats) == pytest.approx(ref, rel=1e-12)

    def test_unknown_label(self):
        rng = np.random.default_rng(14)
        stats = random_stats(rng, 3, 4)
        with pytest.raises(UnknownClass):
            loss_intra(np.zeros((2, 4)), np.array([0, 5]), stats)


class TestCafaLoss:
    def test_single_class_is_exactly_zero(self):
        rng = np.random.default_rng(15)
        stats = random_stats(rng, 1, 4)
        batch = rng.normal(size=(8, 4))
        assert loss_cafa(batch, np.zeros(8, dtype=int), stats) == 0.0

    def test_clamp_at_class_mean(self):
        # sample exactly at its class mean: numerator clamps at the floor
        rng = np.random.default_rng(16)
        stats = random_stats(rng, 2, 3)
        x = stats.classes[0].mu
        v = mahalanobis(x, stats.classes[1])
        expected = np.log(RATIO_FLOOR) - np.log(v)  # denominator = 0 + v
        got = loss_cafa(x[None, :], np.array([0]), stats)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_brute_force(self):
        rng = np.random.default_rng(17)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(8, 4))
        labels = rng.integers(0, 3, size=8)
        terms = []
        for x, label in zip(batch, labels):
            num = max(mahalanobis(x, stats.classes[label]), RATIO_FLOOR)
            den = max(
                sum(mahalanobis(x, g) for g in stats.classes), RATIO_FLOOR
            )
            terms.append(np.log(num / den))
        assert loss_cafa(batch, labels, stats) == pytest.approx(
            float(np.mean(terms)), rel=1e-10
        )

    def test_per_sample_term_negative(self):
        rng = np.random.default_rng(18)
        stats = random_stats(rng, 3, 4)
        for _ in range(20):
            x = rng.normal(size=(1, 4))
            label = rng.integers(0, 3, size=1)
            if intra_distance(x[0], int(label[0]), stats) > 0:
                assert loss_cafa(x, label, stats) < 0.0


class TestBaselineLosses:
    def test_entropy_point_mass(self):
        logits = np.array([[1e6, 0.0, 0.0]])
        assert loss_entropy(logits) == pytest.approx(0.0, abs=1e-9)

    def test_entropy_uniform(self):
        assert loss_entropy(np.zeros((3, 4))) == pytest.approx(np.log(4.0), rel=1e-12)

    def test_entropy_direct_formula(self):
        rng = np.random.default_rng(19)
        logits = rng.normal(size=(10, 5)) * 2.0
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        ref = float(np.mean(-(p * np.log(p)).sum(axis=1)))
        assert loss_entropy(logits) == pytest.approx(ref, rel=1e-10)

    def test_pseudo_label_one_hot(self):
        logits = np.array([[50.0, 0.0], [0.0, 50.0]])
        assert loss_pseudo_label(logits, np.array([0, 1])) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_pseudo_label_uniform(self):
        got = loss_pseudo_label(np.zeros((3, 4)), np.array([0, 1, 3]))
        assert got == pytest.approx(np.log(4.0), rel=1e-12)

    def test_pseudo_label_direct_formula(self):
        rng = np.random.default_rng(20)
        logits = rng.normal(size=(10, 4)) * 3.0
        labels = rng.integers(0, 4, size=10)
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        ref = float(np.mean(-np.log(p[np.arange(10), labels])))
        assert loss_pseudo_label(logits, labels) == pytest.approx(ref, rel=1e-10)

    def test_pseudo_label_unknown_class(self):
        with pytest.raises(UnknownClass):
            loss_pseudo_label(np.zeros((2, 3)), np.array([0, 3]))


class TestDistanceReport:
    def test_zero_at_true_means(self):
        rng = np.random.default_rng(21)
        stats = random_stats(rng, 3, 4)
        batch = np.stack([g.mu for g in stats.classes])
        report = distance_report(batch, np.arange(3), stats)
        assert report.mean_intra == pytest.approx(0.0)
        assert report.mean_inter > 0.0

    def test_brute_force(self):
        rng = np.random.default_rng(22)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(7, 4))
        labels = rng.integers(0, 3, size=7)
        report = distance_report(batch, labels, stats)
        ref_intra = np.mean(
            [intra_distance(x, c, stats) for x, c in zip(batch, labels)]
        )
        ref_inter = np.mean(
            [inter_distance(x, c, stats) for x, c in zip(batch, labels)]
        )
        assert report.mean_intra == pytest.approx(float(ref_intra), rel=1e-12)
        assert report.mean_inter == pytest.approx(float(ref_inter), rel=1e-12)

    def test_determinism(self):
        rng = np.random.default_rng(23)
        stats = random_stats(rng, 3, 4)
        batch = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)
        a = distance_report(batch, labels, stats)
        b = distance_report(batch.copy(), labels.copy(), stats)
        assert a.mean_intra == b.mean_intra
        assert a.mean_inter == b.mean_inter


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 12), c=st.integers(2, 5))
def test_entropy_bounds_property(seed, n, c):
    rng = np.random.default_rng(seed)
    value = loss_entropy(rng.normal(size=(n, c)) * 3.0)
    assert -1e-12 <= value <= np.log(c) + 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 10))
def test_intra_mean_identity_property(seed, n):
    rng = np.random.default_rng(seed)
    stats = random_stats(rng, 3, 3)
    batch = rng.normal(size=(n, 3))
    labels = rng.integers(0, 3, size=n)
    ref = np.mean([intra_distance(x, k, stats) for x, k in zip(batch, labels)])
    assert loss_intra(batch, labels, stats) == pytest.approx(float(ref), rel=1e-10)
