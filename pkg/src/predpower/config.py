"""Run configuration: TOML file, PREDPOWER_* environment overrides, CLI flags.

Precedence, lowest to highest: built-in defaults < TOML file < environment
variables < command-line flags.  Validation collects every violation before
raising, so one run reports all problems at once.

Environment overrides name a TOML leaf as PREDPOWER_<SECTION>_<KEY>, e.g.
``PREDPOWER_CV_K=5`` or ``PREDPOWER_SEEDS_PERMUTATION=99``.  List-valued keys
(negate, expected_tests, tags, tests) take comma-separated values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

ENV_PREFIX = "PREDPOWER_"

#: TOML section -> {toml key -> RunConfig field}.
_SCHEMA = {
    "paths": {
        "readings": "readings",
        "scores": "scores",
        "lexicon": "lexicon",
        "texts": "texts",
        "out_dir": "out_dir",
    },
    "cv": {"k": "k"},
    "seeds": {
        "folds": "fold_seed",
        "permutation": "perm_seed",
        "bootstrap": "boot_seed",
        "simulation": "sim_seed",
    },
    "inference": {"n_perm": "n_perm", "n_boot": "n_boot", "alpha": "alpha"},
    "ingest": {
        "negate": "negate",
        "expected_tests": "expected_tests",
        "missing_lexicon": "missing_lexicon",
        "min_fprt_ms": "min_fprt_ms",
        "max_fprt_ms": "max_fprt_ms",
    },
    "lm": {"alpha_smooth": "alpha_smooth", "tags": "lm_tags"},
    "run": {"tests": "tests", "jobs": "jobs"},
}

_LIST_FIELDS = {"negate", "expected_tests", "lm_tags", "tests"}
_INT_FIELDS = {"k", "fold_seed", "perm_seed", "boot_seed", "sim_seed", "n_perm", "n_boot", "jobs"}
_FLOAT_FIELDS = {"alpha", "min_fprt_ms", "max_fprt_ms", "alpha_smooth"}


@dataclass
class RunConfig:
    """Everything a pipeline run needs, with explicit seeds throughout."""

    readings: str | None = None
    scores: str | None = None
    lexicon: str | None = None
    texts: str | None = None
    out_dir: str = "out"
    word_scores: dict[str, str] = field(default_factory=dict)  # lm_tag -> path
    tokens: dict[str, str] = field(default_factory=dict)  # lm_tag -> path
    k: int = 10
    fold_seed: int = 1001
    perm_seed: int = 2002
    boot_seed: int = 3003
    sim_seed: int = 4004
    n_perm: int = 1000
    n_boot: int = 1000
    alpha: float = 0.05
    negate: tuple[str, ...] = ("stroop", "simon")
    expected_tests: tuple[str, ...] | None = None
    missing_lexicon: str = "error"
    min_fprt_ms: float | None = None
    max_fprt_ms: float | None = None
    alpha_smooth: float = 0.1
    lm_tags: tuple[str, ...] | None = None  # None: every tag with scores
    tests: tuple[str, ...] | None = None  # None: every test in the table
    jobs: int = 1

    def validate(self, require_paths: tuple[str, ...] = ()) -> None:
        """Raise ConfigError listing every violation at once."""
        v: list[str] = []
        if self.k < 2:
            v.append(f"cv.k must be >= 2, got {self.k}")
        if self.n_perm < 100:
            v.append(f"inference.n_perm must be >= 100, got {self.n_perm}")
        if self.n_boot < 1000:
            v.append(f"inference.n_boot must be >= 1000, got {self.n_boot}")
        if not (0.0 < self.alpha < 1.0):
            v.append(f"inference.alpha must be in (0, 1), got {self.alpha}")
        if self.missing_lexicon not in ("error", "drop"):
            v.append(f"ingest.missing_lexicon must be 'error' or 'drop', got {self.missing_lexicon!r}")
        if self.alpha_smooth <= 0:
            v.append(f"lm.alpha_smooth must be positive, got {self.alpha_smooth}")
        if self.jobs < 1:
            v.append(f"run.jobs must be >= 1, got {self.jobs}")
        for name in require_paths:
            path = getattr(self, name, None)
            if path is None:
                v.append(f"paths.{name} is required for this subcommand")
            elif not os.path.isfile(path):
                v.append(f"paths.{name}: {path!r} is not a readable file")
        for tag, path in sorted(self.word_scores.items()):
            if not os.path.isfile(path):
                v.append(f"paths.word_scores.{tag}: {path!r} is not a readable file")
        for tag, path in sorted(self.tokens.items()):
            if not os.path.isfile(path):
                v.append(f"paths.tokens.{tag}: {path!r} is not a readable file")
        if v:
            raise ConfigError(v)


def _coerce(field_name: str, raw, violations: list[str], origin: str):
    if field_name in _LIST_FIELDS:
        if isinstance(raw, str):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(items)
        if isinstance(raw, (list, tuple)):
            return tuple(str(x) for x in raw)
        violations.append(f"{origin}: expected a list, got {raw!r}")
        return None
    if field_name in _INT_FIELDS:
        if isinstance(raw, bool) or not isinstance(raw, (int, str)):
            violations.append(f"{origin}: expected an integer, got {raw!r}")
            return None
        try:
            return int(raw)
        except ValueError:
            violations.append(f"{origin}: expected an integer, got {raw!r}")
            return None
    if field_name in _FLOAT_FIELDS:
        try:
            return float(raw)
        except (TypeError, ValueError):
            violations.append(f"{origin}: expected a number, got {raw!r}")
            return None
    return str(raw)


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig from file + environment + explicit overrides.

    ``overrides`` maps RunConfig field names to already-typed values (the CLI
    passes parsed flags).  Unknown TOML keys are violations, not warnings.
    """
    cfg = RunConfig()
    violations: list[str] = []

    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path!r}"]) from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"config file {path!r} is not valid TOML: {exc}"]) from None
        for section, content in doc.items():
            if section not in _SCHEMA:
                violations.append(f"unknown config section [{section}]")
                continue
            if not isinstance(content, dict):
                violations.append(f"[{section}] must be a table")
                continue
            for key, raw in content.items():
                if section == "paths" and key in ("word_scores", "tokens"):
                    if not isinstance(raw, dict):
                        violations.append(f"paths.{key} must be a table of lm_tag = path")
                        continue
                    getattr(cfg, key).update({str(t): str(p) for t, p in raw.items()})
                    continue
                field_name = _SCHEMA[section].get(key)
                if field_name is None:
                    violations.append(f"unknown config key {section}.{key}")
                    continue
                val = _coerce(field_name, raw, violations, f"{section}.{key}")
                if val is not None:
                    setattr(cfg, field_name, val)

    env_map = {
        f"{ENV_PREFIX}{section.upper()}_{key.upper()}": (section, key)
        for section, keys in _SCHEMA.items()
        for key in keys
    }
    for var, value in sorted(os.environ.items()):
        if not var.startswith(ENV_PREFIX):
            continue
        target = env_map.get(var)
        if target is None:
            violations.append(f"unrecognized environment override {var}")
            continue
        section, key = target
        field_name = _SCHEMA[section][key]
        val = _coerce(field_name, value, violations, var)
        if val is not None:
            setattr(cfg, field_name, val)

    valid_fields = {f.name for f in fields(RunConfig)}
    for name, value in (overrides or {}).items():
        if name not in valid_fields:
            raise ConfigError([f"internal: unknown override field {name!r}"])
        if value is not None:
            setattr(cfg, name, value)

    if violations:
        raise ConfigError(violations)
    return cfg
