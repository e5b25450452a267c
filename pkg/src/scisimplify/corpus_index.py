"""Document-frequency statistics for a reference corpus.

Only document frequencies and the document count are kept; that is all the
complexity score needs. Stats files are plain UTF-8 text::

    corpus_id=lifestyle
    doc_count=2
    version=1
    terms=3
    a\t1
    b\t2
    c\t1

Terms are sorted, so two builds over the same documents give identical files.
"""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .io_utils import atomic_write_text

FORMAT_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class TokenizerConfig:
    """Case-fold, then split on runs of non-alphanumeric characters. No stemming."""

    casefold: bool = True
    keep_digits: bool = True

    def tokenize(self, text: str) -> list[str]:
        if self.casefold:
            text = text.casefold()
        tokens = _TOKEN.findall(text)
        if not self.keep_digits:
            tokens = [t for t in tokens if not t.isdigit()]
        return tokens

    def normalize(self, term: str) -> str:
        return term.casefold() if self.casefold else term


DEFAULT_TOKENIZER = TokenizerConfig()


class CorpusError(Exception):
    pass


class EmptyCorpusError(CorpusError):
    pass


class CorruptStatsError(CorpusError):
    pass


class StatsVersionError(CorpusError):
    pass


@dataclass(frozen=True)
class CorpusStats:
    corpus_id: str
    doc_count: int
    df: Mapping[str, int] = field(default_factory=dict)
    tokenizer: TokenizerConfig = field(default=DEFAULT_TOKENIZER, compare=False)

    def __post_init__(self):
        if self.doc_count < 1:
            raise ValueError("doc_count must be at least 1")
        for term, count in self.df.items():
            if not 1 <= count <= self.doc_count:
                raise ValueError(f"df({term!r})={count} outside [1, {self.doc_count}]")
        object.__setattr__(self, "df", MappingProxyType(dict(self.df)))

    def __eq__(self, other):
        if not isinstance(other, CorpusStats):
            return NotImplemented
        return (
            self.corpus_id == other.corpus_id
            and self.doc_count == other.doc_count
            and dict(self.df) == dict(other.df)
        )

    def __hash__(self):
        return hash((self.corpus_id, self.doc_count, len(self.df)))

    def merge(self, other: CorpusStats) -> CorpusStats:
        """Combine stats built over two disjoint document shards."""
        counts = Counter(self.df)
        counts.update(other.df)
        return CorpusStats(self.corpus_id, self.doc_count + other.doc_count, counts, self.tokenizer)


def build_stats(
    documents: Iterable[str],
    corpus_id: str,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> CorpusStats:
    df: Counter[str] = Counter()
    n = 0
    for doc in documents:
        n += 1
        df.update(set(tokenizer.tokenize(doc)))
    if n == 0:
        raise EmptyCorpusError(f"corpus {corpus_id!r} has no documents")
    return CorpusStats(corpus_id, n, df, tokenizer)


def lookup_df(stats: CorpusStats, term: str) -> int:
    return stats.df.get(stats.tokenizer.normalize(term), 0)


def iter_documents(source: str | os.PathLike) -> Iterator[str]:
    """Yield documents from a directory (one per file) or a file (one per line)."""
    path = Path(source)
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            yield child.read_text(encoding="utf-8")
        return
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line.strip():
                yield line


def dumps_stats(stats: CorpusStats) -> str:
    if any(c in stats.corpus_id for c in "\n\r"):
        raise ValueError("corpus_id may not contain line breaks")
    lines = [
        f"corpus_id={stats.corpus_id}",
        f"doc_count={stats.doc_count}",
        f"version={FORMAT_VERSION}",
        f"terms={len(stats.df)}",
    ]
    for term in sorted(stats.df):
        if any(c in term for c in "\t\n\r"):
            raise ValueError(f"term {term!r} cannot be stored in a stats file")
        lines.append(f"{term}\t{stats.df[term]}")
    return "\n".join(lines) + "\n"


def loads_stats(text: str) -> CorpusStats:
    if not text.endswith("\n"):
        raise CorruptStatsError("stats file does not end with a newline (truncated?)")
    lines = text[:-1].split("\n")
    header = {}
    for key in ("corpus_id", "doc_count", "version", "terms"):
        if not lines:
            raise CorruptStatsError(f"missing header field {key!r}")
        line = lines.pop(0)
        name, sep, value = line.partition("=")
        if not sep or name != key:
            raise CorruptStatsError(f"expected header field {key!r}, got {line!r}")
        if key == "version" and value != str(FORMAT_VERSION):
            raise StatsVersionError(f"unsupported stats version {value!r}")
        header[key] = value
    try:
        doc_count = int(header["doc_count"])
        n_terms = int(header["terms"])
    except ValueError as exc:
        raise CorruptStatsError(f"bad numeric header: {exc}") from None
    if len(lines) != n_terms:
        raise CorruptStatsError(f"header declares {n_terms} terms, found {len(lines)}")

    df = {}
    previous = None
    for lineno, line in enumerate(lines, start=5):
        term, sep, count = line.partition("\t")
        if not sep or not term or not count.isdigit():
            raise CorruptStatsError(f"line {lineno}: malformed entry {line!r}")
        if previous is not None and term <= previous:
            raise CorruptStatsError(f"line {lineno}: terms out of order")
        df[term] = int(count)
        previous = term
    try:
        return CorpusStats(header["corpus_id"], doc_count, df)
    except ValueError as exc:
        raise CorruptStatsError(str(exc)) from None


def save_stats(stats: CorpusStats, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_stats(stats))


def load_stats(path: str | os.PathLike) -> CorpusStats:
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptStatsError(f"stats file is not UTF-8 at byte {exc.start}") from None
    return loads_stats(text)
