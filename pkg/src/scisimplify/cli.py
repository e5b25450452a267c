"""Command-line entry point: ``scisimplify {index,dedupe,tag,simplify,evaluate,clean,config}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure,
3 finished but some batches failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import REPORT_FORMATS, RunConfig
from .corpus_index import CorpusError
from .dataset import DatasetError
from .errors import ConfigError
from .llm.providers import MockProvider, OpenAIChatProvider, ReplayProvider
from .postprocess import DEFAULT_PREFIX_PATTERNS

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("scisimplify")


def _load_config(args) -> RunConfig:
    return RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()


def _columns(args) -> dict | None:
    if not getattr(args, "columns", None):
        return None
    try:
        value = json.loads(args.columns)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--columns is not valid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise ConfigError("--columns must be a JSON object")
    return value


def cmd_index(args) -> int:
    stats = pipeline.run_index(args.corpus, args.corpus_id, args.out)
    print(f"indexed {stats.doc_count} documents, {len(stats.df)} terms -> {args.out}")
    return EXIT_OK


def cmd_dedupe(args) -> int:
    report = pipeline.run_dedupe(args.input, args.out, args.report, args.format, _columns(args))
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_tag(args) -> int:
    config = _load_config(args)
    paths = config.paths
    for name in ("dataset", "lifestyle_stats", "science_stats", "annotations"):
        value = getattr(args, name, None)
        if value:
            setattr(paths, name, value)
    if args.threshold is not None:
        config.complexity.threshold = args.threshold
    if args.keyphrases:
        config.complexity.keyphrase_provider = args.keyphrases
    required = ["dataset", "lifestyle_stats", "science_stats"]
    if config.complexity.keyphrase_provider == "annotations":
        required.append("annotations")
    config.validate(tuple(required))

    records = pipeline.read_dataset(paths.dataset, args.format or config.dataset_format, config.columns)
    tagged = pipeline.tag_records(records, pipeline.keyphrase_provider(config), pipeline.complexity_config(config))
    pipeline.write_tagged(args.out, tagged)
    n_tagged = sum("[" in t.tagged for t in tagged)
    print(f"tagged {len(tagged)} texts ({n_tagged} with complex phrases) -> {args.out}")
    return EXIT_OK


def _provider(args, config: RunConfig, out_dir: Path):
    if args.provider == "mock":
        return MockProvider(style=args.mock_style)
    if args.provider == "replay":
        sources = args.replay_from or [out_dir / "checkpoints"]
        return ReplayProvider.from_checkpoints(sources)
    provider = OpenAIChatProvider.from_env(
        config.dispatch.endpoint, config.dispatch.api_key_env, timeout_s=config.dispatch.request_timeout_s
    )
    if not provider.api_key:
        raise ConfigError(f"environment variable {config.dispatch.api_key_env} is not set")
    return provider


def cmd_simplify(args) -> int:
    config = _load_config(args)
    if args.seed is not None:
        config.dispatch.shuffle_seed = args.seed
    if args.run_id:
        config.run_id = args.run_id
    for name in ("chunk_count", "worker_count", "batch_size"):
        value = getattr(args, name)
        if value is not None:
            setattr(config.dispatch, name, value)
    config.validate()
    tagged = pipeline.read_tagged(args.tagged)
    if not tagged:
        raise ConfigError(f"{args.tagged} contains no tagged texts")

    if args.dry_run:
        print(pipeline.dry_run_prompts(pipeline.plan_for(tagged, config)), end="")
        return EXIT_OK

    out_dir = Path(args.out_dir or config.paths.output_dir)
    if not args.resume and (out_dir / "checkpoints").exists() and any((out_dir / "checkpoints").iterdir()):
        raise ConfigError(f"{out_dir} holds checkpoints from an earlier run; pass --resume or pick a new --out-dir")
    provider = _provider(args, config, out_dir)
    outcome = pipeline.run_simplify(tagged, config, provider, out_dir, args.provider, resume=args.resume)
    m = outcome.manifest
    print(
        f"{m['records']} texts in {m['batches']} batches, {m['provider_calls']} provider calls, "
        f"{len(m['failed_batches'])} failed -> {out_dir / 'results.tsv'}"
    )
    return EXIT_PARTIAL if outcome.partial else EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    sources = pipeline.read_dataset(args.sources, args.format or config.dataset_format, config.columns)
    report = pipeline.run_evaluate(sources, args.results)
    formats = args.report_format or config.report_formats
    if args.out:
        for path in pipeline.write_report(report, args.out, formats):
            print(f"wrote {path}")
    else:
        print(report.to_markdown(), end="")
    return EXIT_OK


def cmd_clean(args) -> int:
    patterns = args.strip_prefix if args.strip_prefix is not None else []
    if args.noaron:
        patterns = [*patterns, *DEFAULT_PREFIX_PATTERNS]
    n = pipeline.clean_results(args.results, args.out, patterns, args.shortest_sentence, args.run_id)
    print(f"cleaned {n} results -> {args.out}")
    return EXIT_OK


def cmd_config(args) -> int:
    text = RunConfig().dumps()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scisimplify", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build document-frequency stats for a reference corpus")
    p.add_argument("corpus", help="file with one document per line, or a directory of files")
    p.add_argument("--corpus-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("dedupe", help="drop rows whose source sentence was already seen")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the dataset report as JSON here")
    p.add_argument("--format", choices=("tsv", "csv", "jsonl"))
    p.add_argument("--columns", help='JSON column map, e.g. {"source_snt": "text"}')
    p.set_defaults(func=cmd_dedupe)

    p = sub.add_parser("tag", help="mark complex phrases with square brackets")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "csv", "jsonl"))
    p.add_argument("--lifestyle-stats", dest="lifestyle_stats")
    p.add_argument("--science-stats", dest="science_stats")
    p.add_argument("--annotations")
    p.add_argument("--keyphrases", choices=("heuristic", "annotations"))
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("simplify", help="send tagged texts to the model in batches")
    p.add_argument("tagged")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--provider", choices=("live", "mock", "replay"), default="live")
    p.add_argument("--mock-style", choices=("enumerated", "dashed", "blankline"), default="enumerated")
    p.add_argument("--replay-from", nargs="+", help="checkpoint files or directories to replay")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--dry-run", action="store_true", help="print the prompts and exit")
    p.add_argument("--seed", type=int)
    p.add_argument("--run-id")
    p.add_argument("--chunk-count", type=int)
    p.add_argument("--worker-count", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("evaluate", help="readability report for sources and one or more runs")
    p.add_argument("sources")
    p.add_argument("results", nargs="+")
    p.add_argument("--config")
    p.add_argument("--format", choices=("tsv", "csv", "jsonl"), help="format of the sources file")
    p.add_argument("--out", help="output prefix; the format suffix is appended")
    p.add_argument("--report-format", nargs="+", choices=REPORT_FORMATS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("clean", help="filter hallucinated prefixes or keep the shortest sentence")
    p.add_argument("results")
    p.add_argument("--out", required=True)
    p.add_argument("--strip-prefix", nargs="*")
    p.add_argument("--noaron", action="store_true", help='strip the default "aaron carroll: " prefix')
    p.add_argument("--shortest-sentence", action="store_true")
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("config", help="print or write the default run configuration")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DatasetError, CorpusError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
