"""Clustering estimation, SN selection, and metric oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmshrink.errors import DataError, InvalidParameterError
from dpmshrink.model import Partition, PosteriorDraws
from dpmshrink.postprocess import (
    ClusterEstimate,
    a_auc,
    adjusted_rand_index,
    ase,
    greedy_vi_estimate,
    mean_vi_loss,
    prediction_errors,
    sn_select,
    vi_distance,
)
from dpmshrink.rng import RngStream

labels_strategy = st.lists(st.integers(0, 5), min_size=2, max_size=30)


def set_partitions(n):
    """All set partitions of {0..n-1} as restricted growth strings."""

    def rec(prefix, used):
        if len(prefix) == n:
            yield np.array(prefix, dtype=np.int64)
            return
        for v in range(used + 1):
            yield from rec(prefix + [v], max(used, v + 1))

    yield from rec([0], 1)


class TestViDistance:
    def test_identity(self):
        part = Partition.from_labels([0, 1, 1, 2])
        assert vi_distance(part, part) == 0.0

    def test_two_point_split(self):
        a = Partition.from_labels([0, 0])
        b = Partition.from_labels([0, 1])
        assert vi_distance(a, b) == pytest.approx(np.log(2.0), abs=1e-12)

    @given(labels_strategy, st.permutations(list(range(6))))
    @settings(max_examples=60)
    def test_relabeling_invariance(self, labels, perm):
        a = Partition.from_labels(labels)
        b = Partition.from_labels([perm[v] for v in labels])
        gen = np.random.default_rng(0)
        other = Partition.from_labels(gen.integers(0, 3, size=len(labels)))
        assert vi_distance(a, other) == pytest.approx(vi_distance(b, other), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            vi_distance(Partition.from_labels([0, 1]), Partition.from_labels([0, 1, 2]))

    @given(st.integers(0, 10**6))
    @settings(max_examples=80)
    def test_metric_properties(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 30))
        parts = [Partition.from_labels(gen.integers(0, 5, size=n)) for _ in range(3)]
        a, b, c = parts
        dab, dba = vi_distance(a, b), vi_distance(b, a)
        assert dab == pytest.approx(dba, abs=1e-12)
        assert dab >= 0
        if dab == pytest.approx(0.0, abs=1e-12):
            assert a == b
        assert dab <= vi_distance(a, c) + vi_distance(c, b) + 1e-10


class TestGreedyViEstimate:
    def test_consensus(self):
        part = np.array([0, 0, 1, 1, 2])
        est = greedy_vi_estimate([part] * 6, rng=RngStream(1))
        assert np.array_equal(est.partition.labels, Partition.from_labels(part).labels)
        assert est.mean_vi_loss == pytest.approx(0.0, abs=1e-12)
        assert est.K_hat == 3

    def test_matches_exhaustive_optimum(self):
        for seed in range(20):
            gen = np.random.default_rng(seed)
            n = int(gen.integers(4, 8))
            s = int(gen.integers(2, 5))
            samples = [
                Partition.from_labels(gen.integers(0, 3, size=n)) for _ in range(s)
            ]
            est = greedy_vi_estimate(samples, rng=RngStream(seed))
            best = min(mean_vi_loss(cand, samples) for cand in set_partitions(n))
            assert est.mean_vi_loss == pytest.approx(best, abs=1e-10)

    def test_two_sample_bound(self):
        gen = np.random.default_rng(11)
        a = gen.integers(0, 3, size=12)
        b = gen.integers(0, 4, size=12)
        pa, pb = Partition.from_labels(a), Partition.from_labels(b)
        v = vi_distance(pa, pb)
        est = greedy_vi_estimate([pa, pb], rng=RngStream(2))
        assert est.mean_vi_loss <= v / 2.0 + 1e-12

    @given(st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_never_worse_than_best_sample(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(3, 15))
        s = int(gen.integers(1, 6))
        samples = [Partition.from_labels(gen.integers(0, 4, size=n)) for _ in range(s)]
        est = greedy_vi_estimate(samples, rng=RngStream(seed % 100))
        best_sample = min(mean_vi_loss(p.labels, samples) for p in samples)
        assert est.mean_vi_loss <= best_sample + 1e-10

    def test_max_k_respected(self):
        gen = np.random.default_rng(3)
        samples = [Partition.from_labels(gen.integers(0, 2, size=10)) for _ in range(3)]
        est = greedy_vi_estimate(samples, max_K=2, rng=RngStream(4))
        assert est.K_hat <= 2


class TestAdjustedRandIndex:
    def test_identity(self):
        part = Partition.from_labels([0, 1, 0, 2, 2])
        assert adjusted_rand_index(part, part) == 1.0

    def test_one_cluster_vs_singletons(self):
        n = 12
        a = Partition.from_labels(np.zeros(n, dtype=int))
        b = Partition.from_labels(np.arange(n))
        assert adjusted_rand_index(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_independent_partitions_near_zero(self):
        gen = np.random.default_rng(5)
        a = Partition.from_labels(gen.integers(0, 5, size=10**4))
        b = Partition.from_labels(gen.integers(0, 5, size=10**4))
        assert abs(adjusted_rand_index(a, b)) < 0.02

    def test_ari_one_iff_vi_zero(self):
        gen = np.random.default_rng(6)
        for _ in range(20):
            a = Partition.from_labels(gen.integers(0, 4, size=15))
            b = Partition.from_labels(gen.integers(0, 4, size=15))
            ari_one = adjusted_rand_index(a, b) == pytest.approx(1.0, abs=1e-12)
            vi_zero = vi_distance(a, b) == pytest.approx(0.0, abs=1e-12)
            assert ari_one == vi_zero

    def test_range(self):
        gen = np.random.default_rng(7)
        for _ in range(50):
            a = Partition.from_labels(gen.integers(0, 4, size=12))
            b = Partition.from_labels(gen.integers(0, 4, size=12))
            assert -1.0 < adjusted_rand_index(a, b) <= 1.0


def selection_draws(beta_series, labels=None):
    """PosteriorDraws with one cluster (or given labels) and scripted betas."""
    beta_series = np.asarray(beta_series)  # (S, K, p)
    S, K, p = beta_series.shape
    if labels is None:
        labels = np.zeros(max(K, 2), dtype=np.int64)
        if K > 1:
            labels = np.arange(K).repeat(2)
    return PosteriorDraws(
        labels=[labels.copy() for _ in range(S)],
        mu=[np.zeros(K) for _ in range(S)],
        beta=[beta_series[s] for s in range(S)],
        m=[np.zeros((K, p)) for _ in range(S)],
        tau=[np.ones((K, p)) for _ in range(S)],
        sigma2=np.ones(S),
        alpha=np.ones(S),
        meta={"baseline": "hs"},
    )


class TestSnSelect:
    def estimate_for(self, draws):
        labels = draws.labels[0]
        return ClusterEstimate(Partition.from_labels(labels), int(labels.max()) + 1, 0.0)

    def test_point_mass_nonzero_kept(self):
        draws = selection_draws(np.full((50, 1, 1), 5.0))
        report = sn_select(draws, self.estimate_for(draws), p_star=0.5)
        assert np.all(report.P == 0.0)
        assert np.all(report.selected)

    def test_symmetric_noise_excluded(self):
        eps = 0.01
        series = np.empty((100, 1, 1))
        series[::2] = eps
        series[1::2] = -eps
        draws = selection_draws(series)
        report = sn_select(draws, self.estimate_for(draws), p_star=0.5)
        assert np.all(report.P == 1.0)
        assert not report.selected.any()

    def test_standard_normal_probability(self):
        gen = np.random.default_rng(8)
        series = gen.normal(size=(10**4, 1, 1))
        draws = selection_draws(series)
        report = sn_select(draws, self.estimate_for(draws), p_star=0.5)
        # P(|Z| <= 1) = 0.6827
        assert abs(report.P[0, 0] - 0.6827) < 0.02
        assert not report.selected.any()

    def test_label_switch_invariance(self):
        gen = np.random.default_rng(9)
        S = 60
        labels = np.array([0, 0, 0, 1, 1, 1], dtype=np.int64)
        beta_a = gen.normal(size=(S, 1, 2)) + 4.0
        beta_b = gen.normal(size=(S, 1, 2)) - 4.0
        straight = [np.vstack([beta_a[s], beta_b[s]]) for s in range(S)]
        swapped_labels = np.array([1, 1, 1, 0, 0, 0], dtype=np.int64)
        draws1 = PosteriorDraws(
            labels=[labels] * S,
            mu=[np.zeros(2)] * S,
            beta=straight,
            m=[np.zeros((2, 2))] * S,
            tau=[np.ones((2, 2))] * S,
            sigma2=np.ones(S),
            alpha=np.ones(S),
            meta={},
        )
        # same content with half the draws label-swapped
        beta_swapped = [
            np.vstack([beta_b[s], beta_a[s]]) if s % 2 else straight[s] for s in range(S)
        ]
        labs_mixed = [swapped_labels if s % 2 else labels for s in range(S)]
        draws2 = PosteriorDraws(
            labels=labs_mixed,
            mu=[np.zeros(2)] * S,
            beta=beta_swapped,
            m=[np.zeros((2, 2))] * S,
            tau=[np.ones((2, 2))] * S,
            sigma2=np.ones(S),
            alpha=np.ones(S),
            meta={},
        )
        est = ClusterEstimate(Partition.from_labels(labels), 2, 0.0)
        r1 = sn_select(draws1, est)
        r2 = sn_select(draws2, est)
        assert np.allclose(r1.P, r2.P)
        assert np.allclose(r1.beta_medians, r2.beta_medians)

    def test_threshold_monotonicity(self):
        gen = np.random.default_rng(10)
        series = gen.normal(size=(500, 1, 4)) * np.array([0.1, 1.0, 2.0, 0.5])
        series[:, :, 1] += 3.0
        draws = selection_draws(series)
        est = self.estimate_for(draws)
        excluded = [
            (~sn_select(draws, est, p_star=p).selected).sum()
            for p in np.linspace(0.1, 0.9, 9)
        ]
        assert all(a >= b for a, b in zip(excluded, excluded[1:]))


class TestPredictionErrors:
    def test_perfect(self):
        assert prediction_errors([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)

    def test_unit_residuals(self):
        l1, l2 = prediction_errors([1.0, -1.0], [0.0, 0.0])
        assert (l1, l2) == (1.0, 1.0)

    def test_mixed_residuals(self):
        l1, l2 = prediction_errors([3.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert (l1, l2) == (1.0, 3.0)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            prediction_errors([1.0], [1.0, 2.0])


class TestAse:
    def test_exact_recovery(self):
        truth = np.array([[1.0, 2.0], [1.0, 2.0]])
        draws = selection_draws(np.broadcast_to([[1.0, 2.0]], (30, 1, 2)).copy())
        est = ClusterEstimate(Partition.from_labels([0, 0]), 1, 0.0)
        assert ase(draws, est, truth) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        # single obs, p=2, estimate off by (1, 1): mean squared error 1
        truth = np.array([[0.0, 0.0], [0.0, 0.0]])
        draws = selection_draws(np.broadcast_to([[1.0, 1.0]], (30, 1, 2)).copy())
        est = ClusterEstimate(Partition.from_labels([0, 0]), 1, 0.0)
        assert ase(draws, est, truth) == pytest.approx(1.0, abs=1e-12)

    def test_coef_scale(self):
        truth = np.array([[2.0], [2.0]])
        draws = selection_draws(np.broadcast_to([[1.0]], (30, 1, 1)).copy())
        est = ClusterEstimate(Partition.from_labels([0, 0]), 1, 0.0)
        assert ase(draws, est, truth, coef_scale=np.array([2.0])) == pytest.approx(0.0)


class TestAAuc:
    def test_perfect_ranking(self):
        P = np.array([[0.0, 0.0, 1.0, 1.0]])
        truth = np.array([[True, True, False, False]])
        assert a_auc(P, truth) == 1.0

    def test_all_ties(self):
        P = np.full((3, 5), 0.4)
        truth = np.tile([True, False, True, False, False], (3, 1))
        assert a_auc(P, truth) == 0.5

    def test_rank_pair_fixture(self):
        # scores (0.9, 0.8, 0.3) for labels (1, 0, 0): AUC = 1
        P = 1.0 - np.array([[0.9, 0.8, 0.3]])
        truth = np.array([[True, False, False]])
        assert a_auc(P, truth) == 1.0
        P_rev = 1.0 - np.array([[0.3, 0.8, 0.9]])
        assert a_auc(P_rev, truth) == 0.0

    @given(st.integers(0, 10**6))
    @settings(max_examples=40)
    def test_monotone_transform_invariance(self, seed):
        gen = np.random.default_rng(seed)
        P = gen.random((4, 6))
        truth = gen.random((4, 6)) < 0.5
        if not ((truth.any(axis=1)) & (~truth.all(axis=1))).any():
            return
        scores = 1.0 - P
        transformed_P = 1.0 - (np.exp(scores) + scores**3)  # strictly monotone
        try:
            base = a_auc(P, truth)
        except DataError:
            return
        assert a_auc(transformed_P, truth) == pytest.approx(base, abs=1e-12)

    def test_degenerate_rows(self):
        P = np.array([[0.2, 0.4], [0.5, 0.9]])
        truth = np.array([[True, True], [True, False]])
        val, skipped = a_auc(P, truth, return_skipped=True)
        assert skipped == 1
        with pytest.raises(DataError):
            a_auc(P, np.array([[True, True], [False, False]]))
