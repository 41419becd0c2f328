"""Clustering point estimation, scaled-neighborhood selection, and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import write_csv
from .errors import DataError, InvalidParameterError
from .model import Partition, PosteriorDraws, canonicalize_labels
from .rng import RngStream


def _xlogx(a: np.ndarray) -> np.ndarray:
    """x * log(x) with the 0 log 0 = 0 convention (integer counts)."""
    return a * np.log(np.maximum(a, 1.0))


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ka = int(a.max()) + 1
    kb = int(b.max()) + 1
    return np.bincount(a * kb + b, minlength=ka * kb).reshape(ka, kb)


def vi_distance(a: Partition, b: Partition) -> float:
    """Variation of information between two partitions (natural log).

    Equals the sum of the two label entropies minus twice their mutual
    information; zero exactly when the partitions agree up to relabeling.
    """
    if a.n != b.n:
        raise InvalidParameterError(f"partition lengths differ: {a.n} vs {b.n}")
    n = a.n
    ct = _contingency(a.labels, b.labels)
    sa = _xlogx(ct.sum(axis=1).astype(float)).sum()
    sb = _xlogx(ct.sum(axis=0).astype(float)).sum()
    sn = _xlogx(ct.astype(float)).sum()
    return max((sa + sb - 2.0 * sn) / n, 0.0)


def mean_vi_loss(labels: np.ndarray, samples: list) -> float:
    """Average VI distance from a candidate labeling to each sampled partition."""
    cand = Partition.from_labels(labels)
    return float(np.mean([vi_distance(cand, s) for s in samples]))


@dataclass(frozen=True)
class ClusterEstimate:
    """VI-optimal clustering point estimate."""

    partition: Partition
    K_hat: int
    mean_vi_loss: float


class _GreedyState:
    """Incremental mean-VI bookkeeping over flattened contingency tables."""

    def __init__(self, samples_arr: np.ndarray, labels0: np.ndarray, max_k: int):
        self.S, self.n = samples_arr.shape
        self.max_k = max_k
        sizes = [int(z.max()) + 1 for z in samples_arr]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.cols = offsets[:-1][:, None] + samples_arr  # (S, n) global column ids
        self.total_cols = int(offsets[-1])
        self.labels = labels0.copy()
        self.a = np.bincount(self.labels, minlength=max_k).astype(np.int64)
        self.N = np.zeros((max_k, self.total_cols), dtype=np.int64)
        np.add.at(self.N, (self.labels[None, :].repeat(self.S, 0), self.cols), 1)
        # per-sample entropy term of the objective (constant w.r.t. labels)
        b_term = 0.0
        for z in samples_arr:
            b_term += _xlogx(np.bincount(z).astype(float)).sum()
        self.const = b_term / (self.S * self.n)

    def objective(self) -> float:
        a_term = _xlogx(self.a.astype(float)).sum() / self.n
        n_term = 2.0 * _xlogx(self.N.astype(float)).sum() / (self.n * self.S)
        return a_term + self.const - n_term

    def candidate_deltas(self, i: int):
        """Objective change for moving observation i to each candidate label."""
        k = self.labels[i]
        cols_i = self.cols[:, i]
        occupied = np.flatnonzero(self.a > 0)
        cands = occupied
        if len(occupied) < self.max_k and self.a[k] > 1:
            empty = np.flatnonzero(self.a == 0)
            if empty.size:
                cands = np.append(occupied, empty[0])
        nk = self.N[k, cols_i].astype(float)
        rm_a = _xlogx(np.array([self.a[k] - 1.0])) - _xlogx(np.array([float(self.a[k])]))
        rm_n = (_xlogx(nk - 1.0) - _xlogx(nk)).sum()
        sub = self.N[np.ix_(cands, cols_i)].astype(float)  # (C, S)
        add_n = (_xlogx(sub + 1.0) - _xlogx(sub)).sum(axis=1)
        add_a = _xlogx(self.a[cands] + 1.0) - _xlogx(self.a[cands].astype(float))
        delta = (rm_a[0] + add_a) / self.n - 2.0 * (rm_n + add_n) / (self.n * self.S)
        self_idx = np.flatnonzero(cands == k)
        if self_idx.size:
            delta[self_idx[0]] = 0.0
        return cands, delta

    def move(self, i: int, k_new: int) -> None:
        k = self.labels[i]
        if k == k_new:
            return
        cols_i = self.cols[:, i]
        self.N[k, cols_i] -= 1
        self.N[k_new, cols_i] += 1
        self.a[k] -= 1
        self.a[k_new] += 1
        self.labels[i] = k_new


def _single_move_passes(gs: "_GreedyState", sweeps, rng: RngStream):
    n = gs.n
    for _ in range(sweeps):
        moved = False
        order = rng.gen.permutation(n)
        for i in order:
            cands, delta = gs.candidate_deltas(i)
            best = int(np.argmin(delta))
            if delta[best] < -1e-12:
                gs.move(int(i), int(cands[best]))
                moved = True
        if not moved:
            break


def _greedy_from(samples_arr, parts, start, max_k, sweeps, rng: RngStream):
    """Single-element sweeps with interleaved pairwise merge attempts.

    Single moves alone stall where only a cluster merge improves the loss,
    so after each converged pass every pair of occupied labels is tried as
    a merge; the best improving merge is applied and the sweeps resume.
    """
    gs = _GreedyState(samples_arr, start, max_k)
    _single_move_passes(gs, sweeps, rng)
    labels = gs.labels
    loss = gs.objective()
    for _ in range(int(labels.max()) + 1):
        occupied = np.flatnonzero(np.bincount(labels, minlength=max_k) > 0)
        if len(occupied) < 2:
            break
        best_pair = None
        best_loss = loss
        for ai in range(len(occupied)):
            for bi in range(ai + 1, len(occupied)):
                cand = labels.copy()
                cand[cand == occupied[bi]] = occupied[ai]
                cand_loss = float(
                    np.mean([vi_distance(Partition.from_labels(cand), p) for p in parts])
                )
                if cand_loss < best_loss - 1e-12:
                    best_loss = cand_loss
                    best_pair = cand
        if best_pair is None:
            break
        gs = _GreedyState(samples_arr, best_pair, max_k)
        _single_move_passes(gs, sweeps, rng)
        labels = gs.labels
        loss = gs.objective()
    return labels, loss


def greedy_vi_estimate(
    samples, max_K: int | None = None, sweeps: int = 50, rng: RngStream | None = None
) -> ClusterEstimate:
    """Greedy minimizer of the posterior mean VI loss.

    Sweeps observations in random order, moving each to the existing or
    fresh label (bounded by ``max_K``) that most decreases the mean VI to
    the sampled partitions, until a sweep makes no move. The search starts
    from the most recent sample and restarts from a few canonical
    configurations (each distinct sample when there are few, the merged and
    the all-singleton partitions) to avoid shallow local optima; the best
    attained labeling is returned.
    """
    if len(samples) < 1:
        raise InvalidParameterError("need at least one sampled partition")
    parts = [s if isinstance(s, Partition) else Partition.from_labels(s) for s in samples]
    samples_arr = np.stack([p.labels for p in parts])
    S, n = samples_arr.shape
    if max_K is None:
        max_K = n
    max_K = min(max_K, n)
    if rng is None:
        rng = RngStream(0, (7,))

    starts = [samples_arr[-1]]
    if S <= 64:
        seen = {samples_arr[-1].tobytes()}
        for z in samples_arr[:-1]:
            key = z.tobytes()
            if key not in seen:
                seen.add(key)
                starts.append(z)
        starts.append(np.zeros(n, dtype=np.int64))
        if max_K >= n:
            starts.append(np.arange(n, dtype=np.int64))
    else:
        # concentrated posteriors converge from the consensus region; keep
        # one cheap alternative start as a safeguard
        starts.append(np.zeros(n, dtype=np.int64))

    best_labels = None
    best_loss = np.inf
    for start in starts:
        if int(start.max()) + 1 > max_K:
            continue
        labels, loss = _greedy_from(samples_arr, parts, start, max_K, sweeps, rng)
        if loss < best_loss - 1e-15:
            best_loss = loss
            best_labels = labels
    part = Partition.from_labels(best_labels)
    return ClusterEstimate(part, part.n_clusters, best_loss)


# ---------------------------------------------------------------------------
# Scaled-neighborhood variable selection


@dataclass
class SelectionReport:
    """Per-observation SN probabilities and the induced selection."""

    P: np.ndarray  # (n, p) probabilities
    selected: np.ndarray  # (n, p) booleans, True = covariate kept
    threshold: float
    beta_medians: np.ndarray  # (K_hat, p) per estimated cluster
    skipped_draws: int = 0


def matched_cluster_beta(draws: PosteriorDraws, estimate: ClusterEstimate):
    """(K_hat, S, p) coefficient draws aligned to the estimated clusters.

    Within each retained draw, an estimated cluster is identified with the
    draw's cluster containing the plurality of its members (ties to the
    smaller draw label), which makes the result invariant to label
    switching across draws.
    """
    est = estimate.partition.labels
    k_hat = estimate.partition.n_clusters
    S, p = draws.S, draws.p
    member_rows = [np.flatnonzero(est == c) for c in range(k_hat)]
    out = np.empty((k_hat, S, p))
    skipped = 0
    for s in range(S):
        labs = draws.labels[s]
        betas = draws.beta[s]
        for c in range(k_hat):
            counts = np.bincount(labs[member_rows[c]])
            match = int(np.argmax(counts))
            if match >= len(betas):  # pragma: no cover - guarded by invariants
                skipped += 1
                out[c, s] = np.nan
                continue
            out[c, s] = betas[match]
    return out, skipped


def sn_select(
    draws: PosteriorDraws, estimate: ClusterEstimate, p_star: float = 0.5
) -> SelectionReport:
    """Scaled-neighborhood probabilities and exclusion decisions.

    P[i, l] is the share of draws in which the matched cluster coefficient
    lies within one posterior standard deviation of zero; the covariate is
    excluded for observation i when P[i, l] exceeds the threshold.
    """
    beta_cs, skipped = matched_cluster_beta(draws, estimate)
    sd = np.nanstd(beta_cs, axis=1)  # (K_hat, p), population convention
    with np.errstate(invalid="ignore"):
        inside = np.abs(beta_cs) <= sd[:, None, :]
    p_cluster = np.nanmean(inside, axis=1)  # (K_hat, p)
    medians = np.nanmedian(beta_cs, axis=1)
    est = estimate.partition.labels
    P = p_cluster[est]
    return SelectionReport(
        P=P,
        selected=P <= p_star,
        threshold=p_star,
        beta_medians=medians,
        skipped_draws=skipped,
    )


# ---------------------------------------------------------------------------
# Evaluation metrics


def adjusted_rand_index(a: Partition, b: Partition) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    if a.n != b.n:
        raise InvalidParameterError(f"partition lengths differ: {a.n} vs {b.n}")
    ct = _contingency(a.labels, b.labels).astype(float)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_cells = comb2(ct).sum()
    sum_rows = comb2(ct.sum(axis=1)).sum()
    sum_cols = comb2(ct.sum(axis=0)).sum()
    total = comb2(float(a.n))
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def prediction_errors(y_true, y_pred):
    """(mean absolute error, mean squared error)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise InvalidParameterError("y_true and y_pred must be equal-length vectors")
    if len(y_true) < 1:
        raise InvalidParameterError("need at least one prediction")
    resid = y_true - y_pred
    return float(np.mean(np.abs(resid))), float(np.mean(resid**2))


def ase(
    draws: PosteriorDraws,
    estimate: ClusterEstimate,
    true_betas_per_obs: np.ndarray,
    coef_scale=None,
) -> float:
    """Average squared coefficient error against per-observation truth.

    Posterior medians per estimated cluster (label-matched across draws) are
    compared, coordinate-averaged, to each observation's true coefficient
    vector. ``coef_scale`` maps medians back to the raw scale when the model
    was fit to normalized data.
    """
    beta_cs, _ = matched_cluster_beta(draws, estimate)
    medians = np.nanmedian(beta_cs, axis=1)  # (K_hat, p)
    if coef_scale is not None:
        medians = medians * np.asarray(coef_scale)[None, :]
    est = estimate.partition.labels
    diff = medians[est] - np.asarray(true_betas_per_obs, dtype=float)
    return float(np.mean(np.mean(diff**2, axis=1)))


def _row_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC with ties credited 0.5."""
    pos = labels.astype(bool)
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores)
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def a_auc(P: np.ndarray, truth_nonzero: np.ndarray, return_skipped: bool = False):
    """Mean per-observation AUC of relevance scores 1 - P against truth.

    Rows whose truth labels are all-positive or all-negative carry no
    ranking information and are skipped (counted); an error is raised if
    every row is degenerate.
    """
    P = np.asarray(P, dtype=float)
    truth = np.asarray(truth_nonzero, dtype=bool)
    if P.shape != truth.shape:
        raise InvalidParameterError("P and truth_nonzero shapes differ")
    scores = 1.0 - P
    aucs = []
    skipped = 0
    for i in range(P.shape[0]):
        n_pos = int(truth[i].sum())
        if n_pos == 0 or n_pos == truth.shape[1]:
            skipped += 1
            continue
        aucs.append(_row_auc(scores[i], truth[i]))
    if not aucs:
        raise DataError("every row has degenerate truth labels; A-AUC undefined")
    result = float(np.mean(aucs))
    return (result, skipped) if return_skipped else result


# ---------------------------------------------------------------------------
# CSV serialization (documented column schemas)


def cluster_estimate_to_csv(estimate: ClusterEstimate, path) -> None:
    """Columns: observation (0-based), cluster (0-based canonical label)."""
    n = estimate.partition.n
    write_csv(
        path,
        ["observation", "cluster"],
        [np.arange(n), estimate.partition.labels.astype(int)],
    )


def selection_report_to_csv(report: SelectionReport, path) -> None:
    """Long format; columns: observation, covariate, sn_probability, selected."""
    n, p = report.P.shape
    obs = np.repeat(np.arange(n), p)
    cov = np.tile(np.arange(p), n)
    write_csv(
        path,
        ["observation", "covariate", "sn_probability", "selected"],
        [obs, cov, report.P.ravel(), report.selected.ravel().astype(int)],
    )


def beta_medians_to_csv(report: SelectionReport, path) -> None:
    """Long format; columns: cluster, covariate, beta_median."""
    k, p = report.beta_medians.shape
    write_csv(
        path,
        ["cluster", "covariate", "beta_median"],
        [
            np.repeat(np.arange(k), p),
            np.tile(np.arange(p), k),
            report.beta_medians.ravel(),
        ],
    )
