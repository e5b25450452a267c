"""Run configuration: one JSON file, overridable per subcommand from the command line."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .complexity import UNSEEN_DF_POLICIES
from .errors import ConfigError
from .llm.planning import DispatchConfig
from .postprocess import DEFAULT_PREFIX_PATTERNS

REPORT_FORMATS = ("markdown", "tsv", "json")
RESULT_COLUMNS = ("run_id", "manual", "snt_id", "simplified_snt")
KEYPHRASE_PROVIDERS = ("heuristic", "annotations")


@dataclass
class Paths:
    dataset: str | None = None
    lifestyle_stats: str | None = None
    science_stats: str | None = None
    annotations: str | None = None
    stopwords: str | None = None
    output_dir: str = "runs"


@dataclass
class ComplexitySettings:
    threshold: float = 0.01
    unseen_df_policy: str = "clamp_to_one"
    keyphrase_provider: str = "heuristic"
    max_phrase_len: int = 4


@dataclass
class BudgetSettings:
    max_requests_per_minute: int = 3500
    max_tokens_per_minute: int = 90000
    safety_margin_s: float = 1.0


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    dataset_format: str | None = None
    columns: dict = field(default_factory=dict)
    complexity: ComplexitySettings = field(default_factory=ComplexitySettings)
    dispatch: DispatchConfig = field(default_factory=DispatchConfig)
    budget: BudgetSettings = field(default_factory=BudgetSettings)
    prefix_patterns: list[str] = field(default_factory=lambda: list(DEFAULT_PREFIX_PATTERNS))
    report_formats: list[str] = field(default_factory=lambda: list(REPORT_FORMATS))
    run_id: str = "ChatGPT"
    result_columns: list[str] = field(default_factory=lambda: list(RESULT_COLUMNS))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        problems: list[str] = []
        nested = {
            "paths": Paths,
            "complexity": ComplexitySettings,
            "dispatch": DispatchConfig,
            "budget": BudgetSettings,
        }
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                problems.append(f"unknown config key {key!r}")
            elif key in nested:
                if not isinstance(value, dict):
                    problems.append(f"{key} must be an object")
                    continue
                sub_known = {f.name for f in fields(nested[key])}
                unknown = sorted(set(value) - sub_known)
                problems += [f"unknown config key {key}.{name}" for name in unknown]
                kwargs[key] = nested[key](**{k: v for k, v in value.items() if k in sub_known})
            else:
                kwargs[key] = value
        if problems:
            raise ConfigError(problems)
        return cls(**kwargs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            return cls.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def problems(self, required_paths: tuple[str, ...] = ()) -> list[str]:
        """Every validation problem, for the paths the calling subcommand needs."""
        found = []
        for name in required_paths:
            value = getattr(self.paths, name)
            if not value:
                found.append(f"paths.{name} is not set")
            elif not Path(value).exists():
                found.append(f"paths.{name}: {value} does not exist")
        c = self.complexity
        if not isinstance(c.threshold, (int, float)) or not math.isfinite(c.threshold):
            found.append("complexity.threshold must be a finite number")
        if c.unseen_df_policy not in UNSEEN_DF_POLICIES:
            found.append(f"complexity.unseen_df_policy must be one of {UNSEEN_DF_POLICIES}")
        if c.keyphrase_provider not in KEYPHRASE_PROVIDERS:
            found.append(f"complexity.keyphrase_provider must be one of {KEYPHRASE_PROVIDERS}")
        if c.max_phrase_len < 1:
            found.append("complexity.max_phrase_len must be at least 1")
        try:
            found += [f"dispatch.{p}" for p in self.dispatch.problems()]
        except TypeError:
            found.append("dispatch: numeric settings must be numbers")
        try:
            if self.budget.max_requests_per_minute <= 0:
                found.append("budget.max_requests_per_minute must be positive")
            if self.budget.max_tokens_per_minute <= 0:
                found.append("budget.max_tokens_per_minute must be positive")
            if self.budget.safety_margin_s < 0:
                found.append("budget.safety_margin_s must be non-negative")
        except TypeError:
            found.append("budget: settings must be numbers")
        bad_formats = [f for f in self.report_formats if f not in REPORT_FORMATS]
        if bad_formats:
            found.append(f"report_formats: unknown {bad_formats}; choose from {REPORT_FORMATS}")
        if sorted(self.result_columns) != sorted(RESULT_COLUMNS):
            found.append(f"result_columns must be a permutation of {RESULT_COLUMNS}")
        if not all(isinstance(p, str) for p in self.prefix_patterns):
            found.append("prefix_patterns must be a list of strings")
        return found

    def validate(self, required_paths: tuple[str, ...] = ()) -> None:
        problems = self.problems(required_paths)
        if problems:
            raise ConfigError(problems)
