"""Cross-validated predictive power and resampling inference.

Predictive power of a predictor set is the mean held-out log-density gain of
the target regression over a baseline regression under k-fold cross
validation, with folds cut across corpus items (words) so every subject
appears in every training fold and BLUPs stay defined for held-out rows.

Resampling (sign-flip permutations, cluster bootstrap draws, group-label
permutations) is processed in blocks of 1024 replicates.  Block b of a run
draws from ``default_rng([seed, domain, b])``, so serial and worker-pool
executions produce identical streams as long as work is split on block
boundaries.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ParameterError, PipelineError
from .lmm import ModelSpec, fit_random_intercept_lmm, predict_heldout_logdensity

_BLOCK = 1024
_PERM_DOMAIN = 1
_BOOT_DOMAIN = 2
_GROUP_DOMAIN = 3
EXACT_ENUMERATION_LIMIT = 20


def _rng_for_block(seed: int, domain: int, block: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), domain, block])


def _ge_threshold(obs_abs: float) -> float:
    # |stat*| >= |stat| counts need slack against last-bit float noise.
    return obs_abs - 1e-12 * max(1.0, obs_abs)


@dataclass(frozen=True)
class InferenceConfig:
    """Replication counts and seeds for the permutation test and bootstrap."""

    n_perm: int = 1000
    n_boot: int = 1000
    perm_seed: int = 0
    boot_seed: int = 0

    def __post_init__(self):
        if self.n_perm < 100:
            raise ParameterError(f"n_perm must be >= 100, got {self.n_perm}")
        if self.n_boot < 1000:
            raise ParameterError(f"n_boot must be >= 1000, got {self.n_boot}")


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of corpus items (text_id, word_index) into k folds."""

    k: int
    assignment: dict[tuple[str, int], int]

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes

    def row_folds(self, df: pd.DataFrame) -> np.ndarray:
        """Fold id for every table row, keyed by (text_id, word_index)."""
        out = np.empty(len(df), dtype=int)
        for i, (t, w) in enumerate(zip(df["text_id"], df["word_index"])):
            f = self.assignment.get((str(t), int(w)))
            if f is None:
                raise ParameterError(f"item ({t!r}, {w}) has no fold assignment")
            out[i] = f
        return out


def make_item_folds(
    items: Iterable[tuple[str, int]], k: int, seed: int
) -> FoldAssignment:
    """Assign items to k folds: seeded shuffle, then round-robin.

    The item list is deduplicated and sorted before shuffling, so the
    assignment is a pure function of (item set, k, seed).  Fold sizes differ
    by at most one.
    """
    uniq = sorted({(str(t), int(w)) for t, w in items})
    if k < 2:
        raise ParameterError(f"fold count must be >= 2, got {k}")
    if len(uniq) < k:
        raise ParameterError(f"{len(uniq)} items cannot fill {k} folds")
    order = np.random.default_rng([int(seed)]).permutation(len(uniq))
    return FoldAssignment(k=k, assignment={uniq[int(j)]: i % k for i, j in enumerate(order)})


@dataclass(frozen=True)
class DeltaLLResult:
    """Held-out log-likelihood gain of a target model over a baseline.

    diffs holds the per-observation differences d_ij (natural log), aligned
    with the subjects/text_ids/word_indices arrays in table row order.
    mean_delta_ll is their plain mean: positive means the target predicts
    held-out reading times better.
    """

    diffs: np.ndarray
    subjects: np.ndarray
    text_ids: np.ndarray
    word_indices: np.ndarray
    mean_delta_ll: float
    ci95: tuple[float, float]
    p_value: float
    n_perm: int
    n_boot: int
    perm_seed: int
    boot_seed: int
    nested: bool = True

    def diffs_by_subject(self) -> dict[str, np.ndarray]:
        return {
            str(s): self.diffs[self.subjects == s] for s in np.unique(self.subjects)
        }

    def subject_stats(self) -> dict[str, tuple[float, int]]:
        """Per-subject (sum of diffs, observation count), for ΔPP aggregation."""
        return {
            s: (float(d.sum()), int(d.size)) for s, d in self.diffs_by_subject().items()
        }

    def to_json_dict(self) -> dict:
        return {
            "mean_delta_ll": self.mean_delta_ll,
            "ci95": [self.ci95[0], self.ci95[1]],
            "p_value": self.p_value,
            "n_obs": int(self.diffs.size),
            "n_perm": self.n_perm,
            "n_boot": self.n_boot,
            "perm_seed": self.perm_seed,
            "boot_seed": self.boot_seed,
            "nested": self.nested,
        }


def write_diffs_csv(result: DeltaLLResult, path: str) -> None:
    """Dump per-observation differences for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("subject_id,text_id,word_index,diff\n")
        for s, t, w, d in zip(
            result.subjects, result.text_ids, result.word_indices, result.diffs
        ):
            fh.write(f"{s},{t},{int(w)},{float(d)!r}\n")


def cross_validated_delta_ll(
    table,
    baseline: ModelSpec,
    target: ModelSpec,
    folds: FoldAssignment,
    config: InferenceConfig,
) -> DeltaLLResult:
    """Fit baseline and target on each k-1 fold training set, score both on
    the held-out fold, and test the per-observation log-density differences.

    Every table row is held out exactly once, so the mean difference matches
    the 1/(I*J) normalization over retained observations.  Specs where the
    target's predictors do not contain the baseline's are allowed (entropy vs
    surprisal swaps) but flagged nested=False in the result.
    """
    df = table.df if hasattr(table, "df") else table
    nested = (
        baseline.response == target.response
        and baseline.group_col == target.group_col
        and set(baseline.predictors) <= set(target.predictors)
    )
    fold_of_row = folds.row_folds(df)
    diffs = np.zeros(len(df))
    for f in range(folds.k):
        held = fold_of_row == f
        if not held.any():
            continue
        train = df.loc[~held]
        test = df.loc[held]
        fits = {}
        for name, spec in (("baseline", baseline), ("target", target)):
            try:
                fits[name] = fit_random_intercept_lmm(train, spec)
            except Exception as exc:
                raise PipelineError(
                    f"fold {f}: {name} model failed to fit: {exc}"
                ) from exc
        ll_base = predict_heldout_logdensity(fits["baseline"], test)
        ll_target = predict_heldout_logdensity(fits["target"], test)
        diffs[held] = ll_target - ll_base

    subjects = df[baseline.group_col].to_numpy()
    p = paired_sign_flip_test(diffs, config.n_perm, config.perm_seed)
    by_subject = {
        str(s): diffs[subjects == s] for s in np.unique(subjects)
    }
    ci = bootstrap_subject_ci(by_subject, config.n_boot, config.boot_seed)
    return DeltaLLResult(
        diffs=diffs,
        subjects=subjects.astype(str),
        text_ids=df["text_id"].to_numpy().astype(str),
        word_indices=df["word_index"].to_numpy().astype(int),
        mean_delta_ll=float(diffs.mean()),
        ci95=ci,
        p_value=p,
        n_perm=config.n_perm,
        n_boot=config.n_boot,
        perm_seed=config.perm_seed,
        boot_seed=config.boot_seed,
        nested=nested,
    )


def paired_sign_flip_test(diffs, n_perm: int, seed: int) -> float:
    """Two-sided sign-flip test of H0: mean difference = 0.

    With 20 or fewer differences all 2^n sign assignments are enumerated and
    the p-value is an exact count.  Beyond that, n_perm Monte Carlo flips with
    add-one smoothing: p = (1 + #{|mean*| >= |mean|}) / (1 + n_perm).
    """
    d = np.asarray(diffs, dtype=float).ravel()
    if d.size < 1:
        raise ParameterError("need at least one difference")
    if n_perm < 100:
        raise ParameterError(f"n_perm must be >= 100, got {n_perm}")
    total = float(d.sum())
    thresh = _ge_threshold(abs(total))
    n = d.size

    if n <= EXACT_ENUMERATION_LIMIT:
        sums = np.zeros(1)
        for x in d:
            sums = np.concatenate([sums + x, sums - x])
        count = int((np.abs(sums) >= thresh).sum())
        return count / float(2**n)

    count = 0
    done = 0
    block = 0
    # Cap the bool matrix at ~2M entries per chunk to bound memory.
    chunk_rows = max(1, 2_097_152 // n)
    while done < n_perm:
        nb = min(_BLOCK, n_perm - done)
        rng = _rng_for_block(seed, _PERM_DOMAIN, block)
        got = 0
        while got < nb:
            c = min(chunk_rows, nb - got)
            flips = rng.random((c, n)) < 0.5
            sums = total - 2.0 * (flips.astype(np.float64) @ d)
            count += int((np.abs(sums) >= thresh).sum())
            got += c
        done += nb
        block += 1
    return (1 + count) / (1.0 + n_perm)


def bootstrap_subject_ci(
    diffs_by_subject: Mapping[str, np.ndarray], n_boot: int, seed: int
) -> tuple[float, float]:
    """Percentile 95% CI for the mean difference under a cluster bootstrap
    that resamples whole subjects with replacement."""
    if len(diffs_by_subject) < 2:
        raise ParameterError("cluster bootstrap needs at least 2 subjects")
    if n_boot < 1000:
        raise ParameterError(f"n_boot must be >= 1000, got {n_boot}")
    keys = sorted(diffs_by_subject)
    arrs = [np.atleast_1d(np.asarray(diffs_by_subject[k], dtype=float)) for k in keys]
    if any(a.size == 0 for a in arrs):
        raise ParameterError("every subject needs at least one difference")
    sums = np.array([a.sum() for a in arrs])
    counts = np.array([a.size for a in arrs], dtype=float)
    J = len(keys)

    means = np.empty(n_boot)
    done = 0
    block = 0
    while done < n_boot:
        nb = min(_BLOCK, n_boot - done)
        rng = _rng_for_block(seed, _BOOT_DOMAIN, block)
        idx = rng.integers(0, J, size=(nb, J))
        means[done : done + nb] = sums[idx].sum(axis=1) / counts[idx].sum(axis=1)
        done += nb
        block += 1
    lo, hi = np.quantile(means, [0.025, 0.975])
    return float(lo), float(hi)


def delta_pp_from_stats(
    subject_stats: Mapping[str, tuple[float, float]], high_group: Iterable[str]
) -> float:
    """ΔPP from per-subject (sum, count) statistics: the high group's mean
    per-observation difference minus the low group's."""
    high = set(high_group)
    hs = hc = ls = lc = 0.0
    for subj, (s, c) in subject_stats.items():
        if subj in high:
            hs += s
            hc += c
        else:
            ls += s
            lc += c
    if hc == 0 or lc == 0:
        raise ParameterError("both groups must be nonempty")
    return hs / hc - ls / lc


def group_label_permutation_test(
    delta_pp_obs: float,
    subject_stats: Mapping[str, tuple[float, float]],
    high_group: Iterable[str],
    n_perm: int,
    seed: int,
) -> float:
    """Two-sided p for H0: no group difference in predictive power.

    Subject group labels are shuffled as a vector (the high-group size is
    preserved) and ΔPP recomputed from the fixed per-subject statistics, so
    relabeling the two groups negates every permuted statistic exactly and
    leaves the p-value unchanged.
    """
    if n_perm < 100:
        raise ParameterError(f"n_perm must be >= 100, got {n_perm}")
    keys = sorted(subject_stats)
    high = {str(s) for s in high_group}
    unknown = high - set(keys)
    if unknown:
        raise ParameterError(f"high-group subjects missing statistics: {sorted(unknown)}")
    labels = np.array([k in high for k in keys])
    if not labels.any() or labels.all():
        raise ParameterError("both groups must be nonempty")
    sums = np.array([float(subject_stats[k][0]) for k in keys])
    counts = np.array([float(subject_stats[k][1]) for k in keys])
    total_sum = sums.sum()
    total_count = counts.sum()
    thresh = _ge_threshold(abs(float(delta_pp_obs)))
    J = len(keys)

    count = 0
    done = 0
    block = 0
    while done < n_perm:
        nb = min(_BLOCK, n_perm - done)
        rng = _rng_for_block(seed, _GROUP_DOMAIN, block)
        order = np.argsort(rng.random((nb, J)), axis=1, kind="stable")
        lab = labels[order]
        hs = np.where(lab, sums, 0.0).sum(axis=1)
        hc = np.where(lab, counts, 0.0).sum(axis=1)
        stat = hs / hc - (total_sum - hs) / (total_count - hc)
        count += int((np.abs(stat) >= thresh).sum())
        done += nb
        block += 1
    return (1 + count) / (1.0 + n_perm)


def in_sample_delta_ll(table, baseline: ModelSpec, target: ModelSpec) -> float:
    """Full-data log-likelihood gain per observation (no cross validation).

    For nested specs this is nonnegative up to optimizer tolerance; used by
    diagnostics, not by the hypothesis pipelines.
    """
    df = table.df if hasattr(table, "df") else table
    fit_b = fit_random_intercept_lmm(df, baseline)
    fit_t = fit_random_intercept_lmm(df, target)
    return (fit_t.loglik - fit_b.loglik) / fit_b.n_obs
