"""Command-line frontend: validation, scoring, pooling, hypothesis runs,
synthetic corpus generation, and report merging.

Every subcommand reads a TOML config (``--config``), applies PREDPOWER_*
environment overrides, then flag overrides, and is idempotent given identical
config and seeds.  Success prints a one-line JSON summary to stdout; failure
prints machine-readable error JSON to stderr and exits nonzero (2 for
configuration problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, ngram, pooling, simulate
from .config import RunConfig, load_config
from .errors import AlignmentError, ConfigError, PipelineError
from .ingest import (
    IngestConfig,
    build_analysis_table,
    load_lexicon,
    load_psychometric_scores,
    load_reading_events,
    load_texts,
    write_analysis_table,
)
from .stats import InferenceConfig, make_item_folds


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _error_json(exc: PipelineError) -> str:
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exc.exit_code,
    }
    if isinstance(exc, ConfigError):
        payload["violations"] = exc.violations
    return json.dumps(payload, sort_keys=True)


def _kv_pairs(pairs: list[str] | None, flag: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError([f"{flag} expects TAG=PATH, got {item!r}"])
        tag, path = item.split("=", 1)
        out[tag] = path
    return out


def _config_from_args(args) -> RunConfig:
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "readings", "scores", "lexicon", "texts", "out_dir", "k",
            "fold_seed", "perm_seed", "boot_seed", "sim_seed", "n_perm",
            "n_boot", "alpha", "jobs",
        )
    }
    if getattr(args, "lm_tags", None):
        overrides["lm_tags"] = tuple(s for s in args.lm_tags.split(",") if s)
    if getattr(args, "tests", None):
        overrides["tests"] = tuple(s for s in args.tests.split(",") if s)
    cfg = load_config(getattr(args, "config", None), overrides)
    cfg.word_scores.update(_kv_pairs(getattr(args, "word_scores", None), "--word-scores"))
    cfg.tokens.update(_kv_pairs(getattr(args, "tokens_file", None), "--tokens"))
    return cfg


def _ingest_config(cfg: RunConfig) -> IngestConfig:
    return IngestConfig(
        negate_set=frozenset(cfg.negate),
        expected_tests=cfg.expected_tests,
        missing_lexicon=cfg.missing_lexicon,
        min_fprt_ms=cfg.min_fprt_ms,
        max_fprt_ms=cfg.max_fprt_ms,
    )


def _load_table(cfg: RunConfig):
    cfg.validate(require_paths=("readings", "scores", "lexicon"))
    if not cfg.word_scores:
        raise ConfigError(["paths.word_scores must name at least one lm_tag = path"])
    events = load_reading_events(cfg.readings)
    profiles = load_psychometric_scores(
        cfg.scores, negate_set=frozenset(cfg.negate), expected_tests=cfg.expected_tests
    )
    lexicon = load_lexicon(cfg.lexicon)
    word_scores = {
        tag: pooling.load_word_scores(path) for tag, path in sorted(cfg.word_scores.items())
    }
    table = build_analysis_table(events, profiles, lexicon, word_scores, _ingest_config(cfg))
    return table, profiles


def _hypothesis_prep(cfg: RunConfig):
    table, profiles = _load_table(cfg)
    tags = list(cfg.lm_tags) if cfg.lm_tags else list(table.lm_tags)
    tests = list(cfg.tests) if cfg.tests else list(table.tests)
    folds = make_item_folds(table.items(), cfg.k, cfg.fold_seed)
    inference = InferenceConfig(
        n_perm=cfg.n_perm, n_boot=cfg.n_boot,
        perm_seed=cfg.perm_seed, boot_seed=cfg.boot_seed,
    )
    meta = {
        "k": cfg.k,
        "alpha": cfg.alpha,
        "n_perm": cfg.n_perm,
        "n_boot": cfg.n_boot,
        "seeds": {
            "folds": cfg.fold_seed,
            "permutation": cfg.perm_seed,
            "bootstrap": cfg.boot_seed,
        },
        "lm_tags": sorted(tags),
        "tests": sorted(tests),
    }
    return table, profiles, tags, tests, folds, inference, meta


def _write_reports(reports, meta: dict, cfg: RunConfig, name: str) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    report_path = os.path.join(cfg.out_dir, f"{name}_report.json")
    analysis.write_report_json(reports, report_path, meta)
    csvs = analysis.write_figure_csvs(reports, cfg.out_dir)
    return {"report": report_path, "csv": csvs, "n_reports": len(reports)}


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    table, _profiles = _load_table(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "analysis_table.tsv")
    write_analysis_table(table, path)
    _emit({
        "subcommand": "ingest",
        "table": path,
        "rows": int(len(table.df)),
        "subjects": table.n_subjects,
        "items": table.n_items,
        "lm_tags": list(table.lm_tags),
        "tests": list(table.tests),
    })
    return 0


def cmd_score(args) -> int:
    cfg = _config_from_args(args)
    cfg.validate(require_paths=("texts",))
    texts = load_texts(cfg.texts)
    lm = ngram.train_bigram(list(texts.values()), alpha=cfg.alpha_smooth)
    rows = []
    for tid in sorted(texts):
        for wi, (s, h) in enumerate(ngram.score_tokens(lm, texts[tid])):
            rows.append(pooling.WordScore(tid, wi, s, h, 1))
    os.makedirs(cfg.out_dir, exist_ok=True)
    scores_path = os.path.join(cfg.out_dir, f"word_scores_{args.tag}.tsv")
    counts_path = os.path.join(cfg.out_dir, f"bigram_counts_{args.tag}.tsv")
    pooling.write_word_scores(rows, scores_path)
    ngram.save_counts(lm, counts_path)
    _emit({
        "subcommand": "score",
        "tag": args.tag,
        "word_scores": scores_path,
        "counts": counts_path,
        "n_words": len(rows),
        "vocab_size": len(lm.vocab),
    })
    return 0


def cmd_pool(args) -> int:
    cfg = _config_from_args(args)
    cfg.validate(require_paths=("texts",))
    if not cfg.tokens:
        raise ConfigError(["paths.tokens must name at least one lm_tag = path"])
    texts = load_texts(cfg.texts)
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = {}
    for tag, tokens_path in sorted(cfg.tokens.items()):
        by_text = pooling.load_tokens(tokens_path)
        rows = []
        for tid in sorted(by_text):
            if tid not in texts:
                raise AlignmentError(f"tokens reference unknown text_id {tid!r}")
            alignment = pooling.align_tokens_to_words(texts[tid], by_text[tid])
            rows.extend(pooling.pool_word_scores(alignment, by_text[tid]))
        out_path = os.path.join(cfg.out_dir, f"word_scores_{tag}.tsv")
        pooling.write_word_scores(rows, out_path)
        written[tag] = out_path
    _emit({"subcommand": "pool", "word_scores": written})
    return 0


def cmd_hb(args) -> int:
    cfg = _config_from_args(args)
    table, _profiles, tags, _tests, folds, inference, meta = _hypothesis_prep(cfg)
    reports = analysis.run_baseline_pp(
        table, tags, folds, inference, alpha=cfg.alpha, n_jobs=cfg.jobs
    )
    meta["hypothesis"] = "HB"
    _emit({"subcommand": "hb", **_write_reports(reports, meta, cfg, "hb")})
    return 0


def cmd_h1(args) -> int:
    cfg = _config_from_args(args)
    table, _profiles, tags, tests, folds, inference, meta = _hypothesis_prep(cfg)
    reports = analysis.run_interaction_pp(
        table, tags, tests, folds, inference, alpha=cfg.alpha, n_jobs=cfg.jobs
    )
    meta["hypothesis"] = "H1"
    _emit({"subcommand": "h1", **_write_reports(reports, meta, cfg, "h1")})
    return 0


def cmd_h2(args) -> int:
    cfg = _config_from_args(args)
    table, _profiles, tags, tests, folds, inference, meta = _hypothesis_prep(cfg)
    h1_reports = analysis.run_interaction_pp(
        table, tags, tests, folds, inference, alpha=cfg.alpha, n_jobs=cfg.jobs
    )
    reports = analysis.run_effect_size_table(
        table, tags, tests,
        h1_significance=analysis.h1_significance_map(h1_reports),
        n_jobs=cfg.jobs,
    )
    meta["hypothesis"] = "H2"
    meta["dagger_source"] = "H1 permutation significance"
    _emit({"subcommand": "h2", **_write_reports(reports, meta, cfg, "h2")})
    return 0


def cmd_h3(args) -> int:
    cfg = _config_from_args(args)
    table, _profiles, tags, tests, folds, inference, meta = _hypothesis_prep(cfg)
    reports = analysis.run_group_split_pp(
        table, tags, tests, folds, inference, alpha=cfg.alpha, n_jobs=cfg.jobs
    )
    meta["hypothesis"] = "H3"
    meta["tie_rule"] = "ties_to_low"
    _emit({"subcommand": "h3", **_write_reports(reports, meta, cfg, "h3")})
    return 0


def cmd_corr(args) -> int:
    cfg = _config_from_args(args)
    cfg.validate(require_paths=("scores",))
    profiles = load_psychometric_scores(
        cfg.scores, negate_set=frozenset(cfg.negate), expected_tests=cfg.expected_tests
    )
    report = analysis.score_correlation_matrix(profiles, alpha=cfg.alpha)
    meta = {"hypothesis": "CORR", "alpha": cfg.alpha, "n_subjects": len(profiles)}
    _emit({"subcommand": "corr", **_write_reports([report], meta, cfg, "corr")})
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    cfg.validate()
    tests = tuple(s for s in args.sim_tests.split(",") if s)
    sim_config = simulate.SimConfig(
        n_subjects=args.subjects,
        n_texts=args.n_texts,
        words_per_text=args.words_per_text,
        vocab_size=args.vocab_size,
        beta6=args.beta6,
        beta_surprisal=args.beta_surprisal,
        beta_entropy=args.beta_entropy,
        beta_score=args.beta_score,
        sigma_resid=args.sigma_resid,
        sigma_subj=args.sigma_subj,
        measure=args.measure,
        test_name=args.test_name,
        tests=tests,
        lm_tag=args.tag,
        score_source=args.score_source,
        alpha_smooth=cfg.alpha_smooth,
        loading=args.loading,
        skip_prob=args.skip_prob,
        seed=args.seed if args.seed is not None else cfg.sim_seed,
    )
    sim = simulate.simulate_corpus(sim_config)
    paths = simulate.write_corpus(sim, cfg.out_dir)
    _emit({
        "subcommand": "simulate",
        "paths": paths,
        "n_subjects": sim_config.n_subjects,
        "n_items": sim_config.n_texts * sim_config.words_per_text,
        "beta6": sim_config.beta6,
        "seed": sim_config.seed,
    })
    return 0


def cmd_report(args) -> int:
    merged = []
    metas = []
    for path in args.inputs:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read report {path!r}: {exc}"]) from None
        if not isinstance(doc, dict) or "reports" not in doc:
            raise ConfigError([f"{path!r} is not a report file (missing 'reports')"])
        merged.extend(doc["reports"])
        metas.append(doc.get("meta", {}))
    out = {"meta": {"merged": len(args.inputs), "parts": metas}, "reports": merged}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit({"subcommand": "report", "out": args.out, "n_reports": len(merged)})
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration file")
    p.add_argument("--out-dir", dest="out_dir", default=None, help="output directory")
    p.add_argument("--readings", default=None, help="readings.tsv path")
    p.add_argument("--scores", default=None, help="scores.tsv path")
    p.add_argument("--lexicon", default=None, help="lexicon.tsv path")
    p.add_argument("--texts", default=None, help="texts.tsv path")
    p.add_argument("--word-scores", dest="word_scores", action="append", metavar="TAG=PATH",
                   help="word-level score file for one lm_tag (repeatable)")
    p.add_argument("--tokens", dest="tokens_file", action="append", metavar="TAG=PATH",
                   help="token-level score file for one lm_tag (repeatable)")
    p.add_argument("--k", type=int, default=None, help="cross-validation fold count")
    p.add_argument("--fold-seed", dest="fold_seed", type=int, default=None)
    p.add_argument("--perm-seed", dest="perm_seed", type=int, default=None)
    p.add_argument("--boot-seed", dest="boot_seed", type=int, default=None)
    p.add_argument("--sim-seed", dest="sim_seed", type=int, default=None)
    p.add_argument("--n-perm", dest="n_perm", type=int, default=None)
    p.add_argument("--n-boot", dest="n_boot", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="significance level")
    p.add_argument("--lm-tags", dest="lm_tags", default=None,
                   help="comma-separated lm_tags to analyze (default: all)")
    p.add_argument("--tests", dest="tests", default=None,
                   help="comma-separated psychometric tests to analyze (default: all)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for grid cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predpower",
        description="Predictive power of surprisal and entropy for reading times, "
                    "modulated by psychometric scores.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    specs = [
        ("ingest", cmd_ingest, "validate inputs and emit the analysis table"),
        ("score", cmd_score, "train the bigram LM on texts and emit word scores"),
        ("pool", cmd_pool, "pool token-level score files up to word level"),
        ("hb", cmd_hb, "baseline predictive power of surprisal/entropy/both"),
        ("h1", cmd_h1, "interaction predictive power per (lm, test, measure)"),
        ("h2", cmd_h2, "full-data interaction effect sizes with H1 daggers"),
        ("h3", cmd_h3, "median-split group difference in predictive power"),
        ("corr", cmd_corr, "psychometric score correlation matrix"),
        ("simulate", cmd_simulate, "generate a synthetic corpus"),
        ("report", cmd_report, "merge report JSON files"),
    ]
    parsers = {}
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        parsers[name] = p
        if name != "report":
            _add_common(p)

    parsers["score"].add_argument("--tag", default="bigram", help="lm_tag for the output files")
    parsers["simulate"].add_argument("--tag", default="bigram")
    parsers["simulate"].add_argument("--seed", type=int, default=None,
                                     help="simulation seed (default: seeds.simulation)")
    parsers["simulate"].add_argument("--subjects", type=int, default=61)
    parsers["simulate"].add_argument("--n-texts", dest="n_texts", type=int, default=8)
    parsers["simulate"].add_argument("--words-per-text", dest="words_per_text", type=int, default=100)
    parsers["simulate"].add_argument("--vocab-size", dest="vocab_size", type=int, default=400)
    parsers["simulate"].add_argument("--beta6", type=float, default=0.0)
    parsers["simulate"].add_argument("--beta-surprisal", dest="beta_surprisal", type=float, default=0.08)
    parsers["simulate"].add_argument("--beta-entropy", dest="beta_entropy", type=float, default=0.03)
    parsers["simulate"].add_argument("--beta-score", dest="beta_score", type=float, default=-0.05)
    parsers["simulate"].add_argument("--sigma-resid", dest="sigma_resid", type=float, default=0.25)
    parsers["simulate"].add_argument("--sigma-subj", dest="sigma_subj", type=float, default=0.15)
    parsers["simulate"].add_argument("--measure", choices=simulate.MEASURES, default="surprisal")
    parsers["simulate"].add_argument("--test-name", dest="test_name", default="mwt")
    parsers["simulate"].add_argument("--sim-tests", dest="sim_tests", default="mwt",
                                     help="comma-separated battery for the synthetic scores file")
    parsers["simulate"].add_argument("--score-source", dest="score_source",
                                     choices=simulate.SCORE_SOURCES, default="true_chain")
    parsers["simulate"].add_argument("--loading", choices=simulate.LOADINGS, default="uniform")
    parsers["simulate"].add_argument("--skip-prob", dest="skip_prob", type=float, default=0.0)

    parsers["report"].add_argument("--out", required=True, help="merged report path")
    parsers["report"].add_argument("inputs", nargs="+", help="report JSON files to merge")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
