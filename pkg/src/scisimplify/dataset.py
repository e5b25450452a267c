"""Reading, writing, deduplicating and scanning SimpleText-style sentence datasets."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .readability import default_easy_words

FORMATS = ("tsv", "csv", "jsonl")

DEFAULT_COLUMNS = {
    "snt_id": "snt_id",
    "doc_id": "doc_id",
    "query_text": "query_text",
    "source_snt": "source_snt",
}

# counts of the dedup report depend on this key choice
DEDUP_KEY_NOTE = "duplicates detected on exact source_snt; query_text is ignored"


class DatasetError(Exception):
    pass


class DatasetDecodeError(DatasetError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"input is not valid UTF-8 at byte offset {offset}: {reason}")
        self.offset = offset


class SchemaError(DatasetError):
    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class SentenceRecord:
    snt_id: str
    doc_id: str
    source_snt: str
    query_text: str | None = None

    def __post_init__(self):
        if not self.snt_id:
            raise ValueError("snt_id must be non-empty")


@dataclass
class DatasetReport:
    total_rows: int = 0
    unique_rows: int = 0
    empty_or_punct_rows: int = 0
    rows_with_hexcode_artifacts: int = 0
    dedup_key: str = DEDUP_KEY_NOTE

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, ensure_ascii=False) + "\n"


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetDecodeError(exc.start, exc.reason) from None


def _resolve_columns(column_map: Mapping[str, str | None] | None) -> dict[str, str | None]:
    columns = dict(DEFAULT_COLUMNS)
    if column_map:
        unknown = set(column_map) - set(DEFAULT_COLUMNS)
        if unknown:
            raise ValueError(f"unknown record fields in column map: {sorted(unknown)}")
        columns.update(column_map)
    return columns


def parse_dataset(
    stream: IO[bytes] | bytes,
    format: str = "tsv",
    column_map: Mapping[str, str | None] | None = None,
) -> list[SentenceRecord]:
    """Parse a dataset into records, preserving row order.

    ``column_map`` maps record field names to the column (or JSON key) names used
    in the input. ``query_text`` may be mapped to ``None`` when the input has no
    query column. Every malformed row is collected before a
    :class:`SchemaError` is raised, so one run reports all of them.
    """
    if format not in FORMATS:
        raise ValueError(f"unsupported format {format!r}; expected one of {FORMATS}")
    data = stream if isinstance(stream, bytes) else stream.read()
    text = _decode(data)
    columns = _resolve_columns(column_map)
    if format == "jsonl":
        return _parse_jsonl(text, columns)
    return _parse_delimited(text, "\t" if format == "tsv" else ",", columns)


def _build(row_no: int, values: Mapping[str, str | None], columns, problems: list[str]):
    missing = [
        columns[name]
        for name in ("snt_id", "doc_id", "source_snt")
        if values.get(columns[name]) is None
    ]
    if missing:
        problems.append(f"row {row_no}: missing column(s) {', '.join(missing)}")
        return None
    if not values[columns["snt_id"]]:
        problems.append(f"row {row_no}: empty {columns['snt_id']}")
        return None
    query = values.get(columns["query_text"]) if columns["query_text"] else None
    return SentenceRecord(
        snt_id=values[columns["snt_id"]],
        doc_id=values[columns["doc_id"]],
        source_snt=values[columns["source_snt"]],
        query_text=query or None,
    )


def _parse_delimited(text: str, delimiter: str, columns) -> list[SentenceRecord]:
    if not text:
        return []
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        return []
    required = [columns[name] for name in ("snt_id", "doc_id", "source_snt")]
    if columns["query_text"]:
        required.append(columns["query_text"])
    absent = [name for name in required if name not in header]
    if absent:
        raise SchemaError([f"header: missing column(s) {', '.join(absent)}"])

    records, problems = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) > len(header):
            problems.append(f"row {row_no}: {len(row)} fields, header has {len(header)}")
            continue
        values = dict(zip(header, row))
        for name in header[len(row):]:
            values[name] = None
        if columns["query_text"] and values.get(columns["query_text"]) is None:
            problems.append(f"row {row_no}: missing column(s) {columns['query_text']}")
            continue
        record = _build(row_no, values, columns, problems)
        if record is not None:
            records.append(record)
    if problems:
        raise SchemaError(problems)
    return records


def _parse_jsonl(text: str, columns) -> list[SentenceRecord]:
    records, problems = [], []
    for row_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"row {row_no}: invalid JSON ({exc.msg})")
            continue
        if not isinstance(obj, dict):
            problems.append(f"row {row_no}: expected a JSON object")
            continue
        record = _build(row_no, obj, columns, problems)
        if record is not None:
            records.append(record)
    if problems:
        raise SchemaError(problems)
    return records


def serialize_dataset(
    records: Iterable[SentenceRecord],
    format: str = "tsv",
    column_map: Mapping[str, str | None] | None = None,
) -> bytes:
    if format not in FORMATS:
        raise ValueError(f"unsupported format {format!r}; expected one of {FORMATS}")
    columns = _resolve_columns(column_map)
    fields = [f for f in ("snt_id", "doc_id", "query_text", "source_snt") if columns[f]]
    out = io.StringIO(newline="")
    if format == "jsonl":
        for rec in records:
            obj = {columns[f]: getattr(rec, f) for f in fields}
            out.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        delimiter = "\t" if format == "tsv" else ","
        writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
        # a bare CR is not quoted by QUOTE_MINIMAL when the terminator is LF
        quoting_writer = csv.writer(
            out, delimiter=delimiter, lineterminator="\n", quoting=csv.QUOTE_ALL
        )
        writer.writerow([columns[f] for f in fields])
        for rec in records:
            row = [getattr(rec, f) or "" for f in fields]
            if any("\x00" in value for value in row):
                raise ValueError(f"record {rec.snt_id!r}: NUL characters need the jsonl format")
            (quoting_writer if any("\r" in value for value in row) else writer).writerow(row)
    return out.getvalue().encode("utf-8")


def guess_format(path: str) -> str:
    lower = path.lower()
    if lower.endswith((".jsonl", ".json", ".ndjson")):
        return "jsonl"
    if lower.endswith(".csv"):
        return "csv"
    return "tsv"


_HEXCODE = re.compile(r"(?<=[^\W_])u[0-9a-fA-F]{4}")
_WORD_CHAR = re.compile(r"[^\W_]")


@dataclass(frozen=True)
class AnomalyFlags:
    empty: bool = False
    punctuation_only: bool = False
    hexcode_artifact: bool = False
    truncated: bool = False

    def names(self) -> set[str]:
        return {name for name, value in asdict(self).items() if value}


def scan_anomalies(record: SentenceRecord | str) -> AnomalyFlags:
    """Flag suspicious source texts. Advisory only; the text is never modified.

    ``truncated`` is a heuristic: the text ends in an ellipsis right after a
    fragment of at most three letters that is not a familiar word ("is ma..."),
    or has fewer than 10 non-space characters.
    """
    text = record.source_snt if isinstance(record, SentenceRecord) else record
    if not text.strip():
        return AnomalyFlags(empty=True)
    if not _WORD_CHAR.search(text):
        return AnomalyFlags(punctuation_only=True)
    stripped = text.rstrip()
    fragment = re.search(r"(?:^|\s)([^\W\d_]{1,3})(?:\.\.\.|…)$", stripped)
    ends_mid_word = bool(fragment) and fragment.group(1).lower() not in default_easy_words()
    short = len("".join(text.split())) < 10
    return AnomalyFlags(
        hexcode_artifact=bool(_HEXCODE.search(text)),
        truncated=ends_mid_word or short,
    )


@dataclass
class DedupResult:
    records: list[SentenceRecord] = field(default_factory=list)
    report: DatasetReport = field(default_factory=DatasetReport)


def deduplicate(records: Iterable[SentenceRecord]) -> DedupResult:
    """Keep the first record of every group sharing an identical ``source_snt``."""
    seen: set[str] = set()
    report = DatasetReport()
    survivors = []
    for rec in records:
        report.total_rows += 1
        flags = scan_anomalies(rec)
        if flags.empty or flags.punctuation_only:
            report.empty_or_punct_rows += 1
        if flags.hexcode_artifact:
            report.rows_with_hexcode_artifacts += 1
        if rec.source_snt in seen:
            continue
        seen.add(rec.source_snt)
        survivors.append(rec)
    report.unique_rows = len(survivors)
    return DedupResult(survivors, report)
