"""End-to-end steps behind the CLI subcommands: index, dedupe, tag, simplify, evaluate."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import corpus_index
from .complexity import (
    AnnotationProvider,
    ComplexityConfig,
    HeuristicProvider,
    KeyphraseProvider,
    load_stopwords,
    tag_text,
)
from .config import RunConfig
from .dataset import (
    DatasetReport,
    SentenceRecord,
    deduplicate,
    guess_format,
    parse_dataset,
    serialize_dataset,
)
from .errors import ConfigError
from .io_utils import atomic_write_text
from .llm.dispatch import DispatchResult, dispatch
from .llm.planning import BatchPlan, plan_batches
from .llm.prompts import build_prompt
from .llm.providers import ChatProvider
from .llm.ratelimit import Clock, RateBudget, max_in_window
from .postprocess import SimplificationResult, clean_item, remove_hallucination_prefixes, select_shortest_sentence
from .readability import ReadabilityReport, evaluate_run

log = logging.getLogger(__name__)


# --- index / dedupe -----------------------------------------------------------


def run_index(corpus: str | Path, corpus_id: str, out: str | Path) -> corpus_index.CorpusStats:
    stats = corpus_index.build_stats(corpus_index.iter_documents(corpus), corpus_id)
    corpus_index.save_stats(stats, out)
    return stats


def read_dataset(path: str | Path, fmt: str | None = None, columns: dict | None = None) -> list[SentenceRecord]:
    fmt = fmt or guess_format(str(path))
    with open(path, "rb") as fh:
        return parse_dataset(fh, fmt, columns or None)


def run_dedupe(
    src: str | Path,
    out: str | Path,
    report_path: str | Path | None = None,
    fmt: str | None = None,
    columns: dict | None = None,
) -> DatasetReport:
    fmt = fmt or guess_format(str(src))
    result = deduplicate(read_dataset(src, fmt, columns))
    out_fmt = guess_format(str(out))
    atomic_write_text(out, serialize_dataset(result.records, out_fmt, columns or None).decode("utf-8"))
    if report_path:
        atomic_write_text(report_path, result.report.to_json())
    return result.report


# --- tag ------------------------------------------------------------------------


def keyphrase_provider(config: RunConfig) -> KeyphraseProvider:
    settings = config.complexity
    if settings.keyphrase_provider == "annotations":
        if not config.paths.annotations:
            raise ConfigError("paths.annotations is required for the annotation keyphrase provider")
        return AnnotationProvider.from_file(config.paths.annotations)
    stopwords = load_stopwords(config.paths.stopwords) if config.paths.stopwords else None
    return HeuristicProvider(stopwords, settings.max_phrase_len)


def complexity_config(config: RunConfig) -> ComplexityConfig:
    return ComplexityConfig(
        lifestyle_stats=corpus_index.load_stats(config.paths.lifestyle_stats),
        science_stats=corpus_index.load_stats(config.paths.science_stats),
        threshold=config.complexity.threshold,
        unseen_df_policy=config.complexity.unseen_df_policy,
    )


@dataclass
class TaggedRecord:
    snt_id: str
    tagged: str


def tag_records(
    records: Iterable[SentenceRecord], provider: KeyphraseProvider, config: ComplexityConfig
) -> list[TaggedRecord]:
    return [
        TaggedRecord(rec.snt_id, tag_text(rec.source_snt, provider, config, rec.snt_id).render())
        for rec in records
    ]


def write_tagged(path: str | Path, tagged: Sequence[TaggedRecord]) -> None:
    lines = [json.dumps(asdict(t), ensure_ascii=False) for t in tagged]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_tagged(path: str | Path) -> list[TaggedRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(TaggedRecord(str(obj["snt_id"]), str(obj["tagged"])))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: malformed tagged record ({exc})") from None
    return out


# --- simplify -------------------------------------------------------------------


def plan_for(tagged: Sequence[TaggedRecord], config: RunConfig) -> BatchPlan:
    return plan_batches([t.tagged for t in tagged], config.dispatch)


def dry_run_prompts(plan: BatchPlan) -> str:
    blocks = []
    for batch in plan.batches:
        system, user = build_prompt(batch)
        blocks.append(
            f"### batch {batch.batch_id} (chunk {batch.chunk_id})\n[system]\n{system}\n[user]\n{user}\n"
        )
    return "\n".join(blocks)


@dataclass
class SimplifyOutcome:
    results: list[SimplificationResult]
    dispatch: DispatchResult
    manifest: dict

    @property
    def partial(self) -> bool:
        return bool(self.dispatch.failed)


def realign_results(
    tagged: Sequence[TaggedRecord],
    plan: BatchPlan,
    outcome: DispatchResult,
    prefix_patterns: Sequence[str],
) -> list[SimplificationResult]:
    """One result per input record, in input order; items of failed batches are marked failed."""
    per_batch = {}
    for response in outcome.responses:
        if response.status == "ok":
            per_batch[response.batch_id] = [(text, response.parse_method) for text in response.items]
    aligned = plan.realign(per_batch)
    results = []
    for record, item in zip(tagged, aligned):
        if item is None:
            results.append(SimplificationResult(record.snt_id, failed=True))
        else:
            results.append(clean_item(record.snt_id, item[0], item[1], prefix_patterns))
    return results


def run_simplify(
    tagged: Sequence[TaggedRecord],
    config: RunConfig,
    provider: ChatProvider,
    out_dir: str | Path,
    provider_name: str = "custom",
    resume: bool = False,
    clock: Clock | None = None,
) -> SimplifyOutcome:
    out_dir = Path(out_dir)
    started = datetime.now(timezone.utc).isoformat()
    plan = plan_for(tagged, config)
    budget = RateBudget(
        config.budget.max_requests_per_minute,
        config.budget.max_tokens_per_minute,
        safety_margin_s=config.budget.safety_margin_s,
    )
    outcome = dispatch(
        plan,
        provider,
        budget,
        config.dispatch,
        clock=clock,
        checkpoint_dir=out_dir / "checkpoints",
        resume=resume,
    )
    results = realign_results(tagged, plan, outcome, config.prefix_patterns)
    write_results(out_dir / "results.tsv", results, config.run_id, config.result_columns)

    peak_requests, peak_tokens = max_in_window(outcome.send_log, budget.window_s)
    sent_tokens = sum(tokens for _, tokens in outcome.send_log)
    manifest = {
        "run_id": config.run_id,
        "provider": provider_name,
        "model": config.dispatch.model,
        "seed": config.dispatch.shuffle_seed,
        "sampling": "provider defaults (no temperature/top_p sent)",
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "config": config.to_dict(),
        "records": len(tagged),
        "batches": len(plan.batches),
        "chunks": len(plan.chunks),
        "provider_calls": outcome.provider_calls,
        "failed_batches": [r.batch_id for r in outcome.failed],
        "estimated_tokens_sent": sent_tokens,
        "cost_estimate_usd": round(sent_tokens / 1000 * config.dispatch.price_per_1k_tokens, 6),
        "peak_window": {"requests": peak_requests, "tokens": peak_tokens},
        "batch_status": [
            {
                "batch_id": r.batch_id,
                "chunk_id": r.chunk_id,
                "status": r.status,
                "attempts": r.attempts,
                "resumed": r.resumed,
                "parse_method": r.parse_method,
                "errors": r.errors,
            }
            for r in outcome.responses
        ],
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, ensure_ascii=False) + "\n")
    return SimplifyOutcome(results, outcome, manifest)


def write_results(
    path: str | Path,
    results: Sequence[SimplificationResult],
    run_id: str,
    columns: Sequence[str] = ("run_id", "manual", "snt_id", "simplified_snt"),
) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(columns)
    for result in results:
        row = {"run_id": run_id, "manual": "0", "snt_id": result.snt_id, "simplified_snt": result.simplified_snt}
        writer.writerow([row[c] for c in columns])
    atomic_write_text(path, buf.getvalue())


def read_results(path: str | Path) -> tuple[str, dict[str, str]]:
    """Run id and snt_id -> simplified text of a results TSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = {"snt_id", "simplified_snt"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: results file lacks column(s) {sorted(missing)}")
        run_id = None
        texts = {}
        for row in reader:
            run_id = run_id or row.get("run_id")
            texts.setdefault(row["snt_id"], row["simplified_snt"] or "")
    return run_id or Path(path).stem, texts


def clean_results(
    src: str | Path,
    out: str | Path,
    prefix_patterns: Sequence[str] = (),
    shortest_sentence: bool = False,
    run_id: str | None = None,
) -> int:
    """Apply prefix filtering and/or shortest-sentence selection to a results file."""
    original_id, texts = read_results(src)
    results = []
    for snt_id, text in texts.items():
        if shortest_sentence and text.strip():
            text = select_shortest_sentence(text)
        if prefix_patterns:
            text = remove_hallucination_prefixes(text, prefix_patterns)
        results.append(SimplificationResult(snt_id, text.replace("[", "").replace("]", "")))
    write_results(out, results, run_id or original_id)
    return len(results)


# --- evaluate -------------------------------------------------------------------


def run_evaluate(
    sources: Sequence[SentenceRecord], results_files: Sequence[str | Path], easy_words=None
) -> ReadabilityReport:
    seen = set()
    unique = []
    for rec in sources:
        if rec.snt_id not in seen:
            seen.add(rec.snt_id)
            unique.append(rec)
    runs = {}
    for path in results_files:
        name, texts = read_results(path)
        unknown = set(texts) - seen
        if unknown:
            log.warning("%s: %d result ids have no source and are ignored", path, len(unknown))
        base, n = name, 2
        while name in runs:
            name, n = f"{base}-{n}", n + 1
        runs[name] = [texts.get(rec.snt_id) for rec in unique]
    return evaluate_run([rec.source_snt for rec in unique], runs, easy_words)


def write_report(report: ReadabilityReport, out_prefix: str | Path, formats: Sequence[str]) -> list[Path]:
    out_prefix = Path(out_prefix)
    written = []
    renderers = {
        "markdown": (".md", report.to_markdown),
        "tsv": (".tsv", report.to_tsv),
        "json": (".json", report.to_json),
    }
    for fmt in formats:
        suffix, render = renderers[fmt]
        path = out_prefix.with_name(out_prefix.name + suffix)
        atomic_write_text(path, render())
        written.append(path)
    return written
