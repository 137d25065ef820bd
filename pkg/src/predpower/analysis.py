"""Hypothesis pipelines over an assembled analysis table.

Four report families, mirroring the questions the package answers:

  HB   predictive power of surprisal, entropy, and both combined over a
       length + frequency baseline, per language model.
  H1   predictive power of a score x measure interaction over the full
       additive baseline, per (language model, psychometric test, measure).
  H2   full-data interaction effect sizes beta6 +/- SE for the same grid.
  H3   median-split group difference in predictive power (delta PP) with a
       group-label permutation p-value.
  CORR Pearson correlation matrix of the psychometric scores.

Grid cells are independent pure jobs over the shared immutable table; with
n_jobs > 1 they run in a process pool and results are merged in a fixed cell
order, so parallel and serial runs emit identical reports.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.stats

from .errors import DegenerateSplitError, ModelSpecError, ParameterError
from .ingest import (
    LENGTH_COL,
    LOGFREQ_COL,
    RESPONSE_COL,
    entropy_col,
    score_col,
    surprisal_col,
)
from .lmm import ModelSpec, fit_random_intercept_lmm, fixed_effect_summary
from .stats import (
    DeltaLLResult,
    FoldAssignment,
    InferenceConfig,
    cross_validated_delta_ll,
    group_label_permutation_test,
)

BASELINE_PREDICTORS = (LENGTH_COL, LOGFREQ_COL)
HB_MEASURES = ("surprisal", "entropy", "combined")
INTERACTION_MEASURES = ("surprisal", "entropy")


@dataclass(frozen=True)
class HypothesisReport:
    """One report cell: tag, grid coordinates, JSON-ready payload."""

    hypothesis: str  # HB | H1 | H2 | H3 | CORR
    lm_tag: str | None
    test: str | None
    measure: str | None
    payload: dict
    significant: bool | None

    def to_json_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "lm_tag": self.lm_tag,
            "test": self.test,
            "measure": self.measure,
            "significant": self.significant,
            "payload": self.payload,
        }


def _frame(table) -> pd.DataFrame:
    return table.df if hasattr(table, "df") else table


def _require_columns(df: pd.DataFrame, cols) -> None:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ModelSpecError(f"table lacks required columns: {missing}")


def measure_column(measure: str, lm_tag: str) -> str:
    if measure == "surprisal":
        return surprisal_col(lm_tag)
    if measure == "entropy":
        return entropy_col(lm_tag)
    raise ParameterError(f"unknown measure {measure!r}")


def interaction_column(measure: str, lm_tag: str, test: str) -> str:
    return f"interaction_{measure}_{lm_tag}_{test}"


def eq5_predictors(lm_tag: str, test: str) -> tuple[str, ...]:
    return BASELINE_PREDICTORS + (
        surprisal_col(lm_tag),
        entropy_col(lm_tag),
        score_col(test),
    )


def _with_interaction(df: pd.DataFrame, measure: str, lm_tag: str, test: str):
    """Copy of df carrying the interaction predictor: the elementwise product
    of the standardized measure and score columns, not re-standardized."""
    mcol = measure_column(measure, lm_tag)
    icol = interaction_column(measure, lm_tag, test)
    out = df.copy()
    out[icol] = out[mcol].to_numpy() * out[score_col(test)].to_numpy()
    return out, icol


def _run_jobs(jobs: dict, n_jobs: int) -> dict:
    """Run {key: (fn, args)} jobs, serially or in a process pool; the result
    dict is keyed identically either way."""
    ordered = sorted(jobs.items())
    if n_jobs <= 1 or len(ordered) <= 1:
        return {key: fn(*args) for key, (fn, args) in ordered}
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = {key: pool.submit(fn, *args) for key, (fn, args) in ordered}
        return {key: fut.result() for key, fut in futures.items()}


def _delta_ll_cell(df, baseline, target, folds, config):
    return cross_validated_delta_ll(df, baseline, target, folds, config)


def _h1_cell(df, lm_tag, test, measure, folds, config):
    aug, icol = _with_interaction(df, measure, lm_tag, test)
    base = ModelSpec(RESPONSE_COL, eq5_predictors(lm_tag, test))
    target = ModelSpec(RESPONSE_COL, eq5_predictors(lm_tag, test) + (icol,))
    return cross_validated_delta_ll(aug, base, target, folds, config)


def _h2_cell(df, lm_tag, test, measure):
    aug, icol = _with_interaction(df, measure, lm_tag, test)
    spec = ModelSpec(RESPONSE_COL, eq5_predictors(lm_tag, test) + (icol,))
    fit = fit_random_intercept_lmm(aug, spec)
    coefs = {c.name: (c.estimate, c.se) for c in fixed_effect_summary(fit)}
    return icol, coefs, fit.loglik


def _h3_cell(df, lm_tag, measure, high, low, folds, config):
    mcol = measure_column(measure, lm_tag)
    base = ModelSpec(RESPONSE_COL, BASELINE_PREDICTORS)
    target = ModelSpec(RESPONSE_COL, BASELINE_PREDICTORS + (mcol,))
    df_high = df[df["subject_id"].astype(str).isin(high)]
    df_low = df[df["subject_id"].astype(str).isin(low)]
    res_high = cross_validated_delta_ll(df_high, base, target, folds, config)
    res_low = cross_validated_delta_ll(df_low, base, target, folds, config)
    delta_pp = res_high.mean_delta_ll - res_low.mean_delta_ll
    stats = {**res_high.subject_stats(), **res_low.subject_stats()}
    p = group_label_permutation_test(
        delta_pp, stats, high, config.n_perm, config.perm_seed
    )
    return res_high, res_low, delta_pp, p


def run_baseline_pp(
    table,
    lm_tags,
    folds: FoldAssignment,
    config: InferenceConfig,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> list[HypothesisReport]:
    """Predictive power of +surprisal, +entropy, and +both over the
    length + frequency baseline, per language model tag."""
    df = _frame(table)
    tags = sorted(lm_tags)
    jobs = {}
    for tag in tags:
        _require_columns(
            df, BASELINE_PREDICTORS + (surprisal_col(tag), entropy_col(tag))
        )
        added = {
            "surprisal": (surprisal_col(tag),),
            "entropy": (entropy_col(tag),),
            "combined": (surprisal_col(tag), entropy_col(tag)),
        }
        for measure, extra in added.items():
            base = ModelSpec(RESPONSE_COL, BASELINE_PREDICTORS)
            target = ModelSpec(RESPONSE_COL, BASELINE_PREDICTORS + extra)
            jobs[(tag, measure)] = (_delta_ll_cell, (df, base, target, folds, config))
    results = _run_jobs(jobs, n_jobs)

    reports = []
    for tag in tags:
        for measure in HB_MEASURES:
            res: DeltaLLResult = results[(tag, measure)]
            payload = {"kind": "delta_ll", "baseline": list(BASELINE_PREDICTORS)}
            payload.update(res.to_json_dict())
            reports.append(
                HypothesisReport(
                    hypothesis="HB",
                    lm_tag=tag,
                    test=None,
                    measure=measure,
                    payload=payload,
                    significant=bool(res.p_value < alpha),
                )
            )
    return reports


def run_interaction_pp(
    table,
    lm_tags,
    tests,
    folds: FoldAssignment,
    config: InferenceConfig,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> list[HypothesisReport]:
    """Predictive power of the score x measure interaction over the full
    additive baseline, for every (lm_tag, test, measure) cell."""
    df = _frame(table)
    tags, names = sorted(lm_tags), sorted(tests)
    for tag in tags:
        for test in names:
            _require_columns(df, eq5_predictors(tag, test))
    jobs = {
        (tag, test, measure): (_h1_cell, (df, tag, test, measure, folds, config))
        for tag in tags
        for test in names
        for measure in INTERACTION_MEASURES
    }
    results = _run_jobs(jobs, n_jobs)

    reports = []
    for tag in tags:
        for test in names:
            for measure in INTERACTION_MEASURES:
                res: DeltaLLResult = results[(tag, test, measure)]
                payload = {
                    "kind": "delta_ll",
                    "baseline": list(eq5_predictors(tag, test)),
                    "interaction_column": interaction_column(measure, tag, test),
                }
                payload.update(res.to_json_dict())
                reports.append(
                    HypothesisReport(
                        hypothesis="H1",
                        lm_tag=tag,
                        test=test,
                        measure=measure,
                        payload=payload,
                        significant=bool(res.p_value < alpha),
                    )
                )
    return reports


def run_effect_size_table(
    table,
    lm_tags,
    tests,
    h1_significance=None,
    n_jobs: int = 1,
) -> list[HypothesisReport]:
    """Full-data interaction coefficients beta6 +/- SE per grid cell.

    h1_significance maps (lm_tag, test, measure) to the corresponding H1
    significance flag (the table's dagger); cells without an entry carry
    dagger None.
    """
    df = _frame(table)
    tags, names = sorted(lm_tags), sorted(tests)
    for tag in tags:
        for test in names:
            _require_columns(df, eq5_predictors(tag, test))
    jobs = {
        (tag, test, measure): (_h2_cell, (df, tag, test, measure))
        for tag in tags
        for test in names
        for measure in INTERACTION_MEASURES
    }
    results = _run_jobs(jobs, n_jobs)

    reports = []
    for tag in tags:
        for test in names:
            for measure in INTERACTION_MEASURES:
                icol, coefs, loglik = results[(tag, test, measure)]
                beta6, se6 = coefs[icol]
                dagger = None
                if h1_significance is not None:
                    dagger = h1_significance.get((tag, test, measure))
                payload = {
                    "kind": "coefficient",
                    "interaction_column": icol,
                    "beta6": beta6,
                    "se": se6,
                    "dagger": dagger,
                    "loglik": loglik,
                    "coefficients": {
                        name: {"estimate": est, "se": se} for name, (est, se) in coefs.items()
                    },
                }
                reports.append(
                    HypothesisReport(
                        hypothesis="H2",
                        lm_tag=tag,
                        test=test,
                        measure=measure,
                        payload=payload,
                        significant=dagger,
                    )
                )
    return reports


def median_split_subjects(table, test: str) -> tuple[set[str], set[str], float]:
    """Split subjects at the median of a standardized score; ties go low.

    Returns (high, low, median).  Membership is invariant under any positive
    affine transform of the score, so splitting on the row-standardized
    column matches splitting on the raw subject scores.
    """
    df = _frame(table)
    col = score_col(test)
    _require_columns(df, (col, "subject_id"))
    per_subject = {}
    for subj, grp in df.groupby("subject_id", sort=True):
        vals = grp[col].to_numpy(dtype=float)
        if np.ptp(vals) != 0.0:
            raise ParameterError(f"score {col} varies within subject {subj!r}")
        per_subject[str(subj)] = float(vals[0])
    med = float(np.median(list(per_subject.values())))
    high = {s for s, v in per_subject.items() if v > med}
    low = set(per_subject) - high
    if not high or not low:
        raise DegenerateSplitError(
            f"median split on {test!r} leaves a group empty (all scores equal?)"
        )
    if len(high) < 2 or len(low) < 2:
        raise DegenerateSplitError(
            f"median split on {test!r} leaves a group with fewer than 2 subjects"
        )
    return high, low, med


def run_group_split_pp(
    table,
    lm_tags,
    tests,
    folds: FoldAssignment,
    config: InferenceConfig,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> list[HypothesisReport]:
    """Delta PP per cell: the high-scoring group's measure predictive power
    minus the low-scoring group's, with a group-label permutation p-value."""
    df = _frame(table)
    tags, names = sorted(lm_tags), sorted(tests)
    splits = {test: median_split_subjects(df, test) for test in names}
    jobs = {}
    for tag in tags:
        _require_columns(df, (surprisal_col(tag), entropy_col(tag)))
        for test in names:
            high, low, _ = splits[test]
            for measure in INTERACTION_MEASURES:
                jobs[(tag, test, measure)] = (
                    _h3_cell,
                    (df, tag, measure, sorted(high), sorted(low), folds, config),
                )
    results = _run_jobs(jobs, n_jobs)

    reports = []
    for tag in tags:
        for test in names:
            high, low, med = splits[test]
            for measure in INTERACTION_MEASURES:
                res_high, res_low, delta_pp, p = results[(tag, test, measure)]
                payload = {
                    "kind": "delta_pp",
                    "delta_pp": delta_pp,
                    "p_value": p,
                    "n_perm": config.n_perm,
                    "median": med,
                    "n_high": len(high),
                    "n_low": len(low),
                    "tie_rule": "ties_to_low",
                    "high": res_high.to_json_dict(),
                    "low": res_low.to_json_dict(),
                }
                reports.append(
                    HypothesisReport(
                        hypothesis="H3",
                        lm_tag=tag,
                        test=test,
                        measure=measure,
                        payload=payload,
                        significant=bool(p < alpha),
                    )
                )
    return reports


def score_correlation_matrix(profiles, alpha: float = 0.05) -> HypothesisReport:
    """Pearson correlations between all psychometric score pairs.

    Returns a CORR report whose payload carries the full r and two-sided p
    matrices plus a significance mask (consumers blank cells above alpha).
    """
    if len(profiles) < 3:
        raise ParameterError(f"need at least 3 subjects, got {len(profiles)}")
    tests = list(profiles[0].scores)
    mats = {t: np.array([p.scores[t] for p in profiles]) for t in tests}
    m = len(tests)
    r = np.eye(m)
    pv = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            rij, pij = scipy.stats.pearsonr(mats[tests[i]], mats[tests[j]])
            r[i, j] = r[j, i] = float(rij)
            pv[i, j] = pv[j, i] = float(pij)
    payload = {
        "kind": "correlation",
        "tests": tests,
        "r": [[float(v) for v in row] for row in r],
        "p": [[float(v) for v in row] for row in pv],
        "significant": [[bool(v < alpha) for v in row] for row in pv],
        "alpha": alpha,
    }
    return HypothesisReport(
        hypothesis="CORR",
        lm_tag=None,
        test=None,
        measure=None,
        payload=payload,
        significant=None,
    )


def h1_significance_map(h1_reports) -> dict:
    """Index H1 significance flags by (lm_tag, test, measure) for H2 daggers."""
    return {
        (rep.lm_tag, rep.test, rep.measure): rep.significant
        for rep in h1_reports
        if rep.hypothesis == "H1"
    }


def reports_to_json_dict(reports, meta: dict | None = None) -> dict:
    out = {"meta": meta or {}, "reports": [r.to_json_dict() for r in reports]}
    return out


def write_report_json(reports, path: str, meta: dict | None = None) -> None:
    """Serialize the full report grid; key order and float repr are fixed so
    identical inputs and seeds give byte-identical files."""
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(reports_to_json_dict(reports, meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def write_figure_csvs(reports, out_dir: str) -> list[str]:
    """Per-figure CSV dumps of whatever report families are present.

    hb.csv:   lm_tag, measure, mean_delta_ll, ci_lo, ci_hi, p_value, significant
    h1.csv:   lm_tag, test, measure, mean_delta_ll, ci_lo, ci_hi, p_value, significant
    h2.csv:   lm_tag, test, measure, beta6, se, dagger
    h3.csv:   lm_tag, test, measure, delta_pp, delta_ll_high, delta_ll_low, p_value, significant
    corr.csv: test_a, test_b, r, p, significant
    """
    import os

    written = []
    by_tag: dict[str, list[HypothesisReport]] = {}
    for rep in reports:
        by_tag.setdefault(rep.hypothesis, []).append(rep)

    if "HB" in by_tag:
        rows = [
            [r.lm_tag, r.measure, r.payload["mean_delta_ll"], r.payload["ci95"][0],
             r.payload["ci95"][1], r.payload["p_value"], r.significant]
            for r in by_tag["HB"]
        ]
        path = os.path.join(out_dir, "hb.csv")
        _write_csv(path, ["lm_tag", "measure", "mean_delta_ll", "ci_lo", "ci_hi",
                          "p_value", "significant"], rows)
        written.append(path)
    if "H1" in by_tag:
        rows = [
            [r.lm_tag, r.test, r.measure, r.payload["mean_delta_ll"],
             r.payload["ci95"][0], r.payload["ci95"][1], r.payload["p_value"],
             r.significant]
            for r in by_tag["H1"]
        ]
        path = os.path.join(out_dir, "h1.csv")
        _write_csv(path, ["lm_tag", "test", "measure", "mean_delta_ll", "ci_lo",
                          "ci_hi", "p_value", "significant"], rows)
        written.append(path)
    if "H2" in by_tag:
        rows = [
            [r.lm_tag, r.test, r.measure, r.payload["beta6"], r.payload["se"],
             r.payload["dagger"]]
            for r in by_tag["H2"]
        ]
        path = os.path.join(out_dir, "h2.csv")
        _write_csv(path, ["lm_tag", "test", "measure", "beta6", "se", "dagger"], rows)
        written.append(path)
    if "H3" in by_tag:
        rows = [
            [r.lm_tag, r.test, r.measure, r.payload["delta_pp"],
             r.payload["high"]["mean_delta_ll"], r.payload["low"]["mean_delta_ll"],
             r.payload["p_value"], r.significant]
            for r in by_tag["H3"]
        ]
        path = os.path.join(out_dir, "h3.csv")
        _write_csv(path, ["lm_tag", "test", "measure", "delta_pp", "delta_ll_high",
                          "delta_ll_low", "p_value", "significant"], rows)
        written.append(path)
    if "CORR" in by_tag:
        rep = by_tag["CORR"][0]
        tests = rep.payload["tests"]
        rows = []
        for i, ta in enumerate(tests):
            for j, tb in enumerate(tests):
                rows.append([ta, tb, rep.payload["r"][i][j], rep.payload["p"][i][j],
                             rep.payload["significant"][i][j]])
        path = os.path.join(out_dir, "corr.csv")
        _write_csv(path, ["test_a", "test_b", "r", "p", "significant"], rows)
        written.append(path)
    return written
