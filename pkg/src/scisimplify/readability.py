"""Readability measures for source and simplified texts, and per-run aggregation.

Counts follow textstat conventions where they can be pinned down:

* a *word* is a whitespace-separated token containing at least one letter or
  digit, so ``(drones)`` is one word and a lone ``-`` is none;
* the lexicon count is the number of word tokens, repeats included;
* syllables come from a vowel-group heuristic (no pronunciation dictionary),
  so totals can differ from dictionary-based counters by a syllable or two.

Formula metrics (Flesch, Dale-Chall) are undefined for texts without words
and raise :class:`EmptyTextError`; such texts are excluded from aggregates and
counted as empty.
"""

from __future__ import annotations

import json
import math
import re
import statistics
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

READING_MS_PER_CHAR = 14.69

_VOWELS = "aeiouy"
_WORD = re.compile(r"[^\W_]")
_LETTERS = re.compile(r"[^a-z]")

# tokens ending in '.' that do not end a sentence
ABBREVIATIONS = frozenset(
    """
    al approx ca cf dr e.g eq eqs et fig figs i.e jr mr mrs ms no nos prof sr st
    u.k u.s vol vols vs
    """.split()
)

_BOUNDARY = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s|$)")


class EmptyTextError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def words(text: str) -> list[str]:
    return [tok for tok in text.split() if _WORD.search(tok)]


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences; trailing whitespace is not included."""
    spans = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        if match.group(0).startswith(".") and len(match.group(0).rstrip("\"'”’)]")) == 1:
            token = text[:match.start()].split()[-1:] or [""]
            word = token[0].lstrip("(\"'“‘")
            # an uppercase single letter is an initial ("J. Smith")
            if word.lower() in ABBREVIATIONS or (len(word) == 1 and word.isupper()):
                continue
        end = match.end()
        if _WORD.search(text[start:end]):
            spans.append(_trim(text, start, end))
            start = end
    if _WORD.search(text[start:]):
        spans.append(_trim(text, start, len(text)))
    elif spans and text[start:].strip():
        # trailing punctuation-only debris belongs to the last sentence
        spans[-1] = _trim(text, spans[-1][0], len(text))
    return spans


def _trim(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def split_sentences(text: str) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text)]


def count_sentences(text: str) -> int:
    return len(sentence_spans(text))


def count_lexicon(text: str) -> int:
    return len(words(text))


def count_chars(text: str) -> int:
    return len(text)


def count_syllables(word: str) -> int:
    """Estimate the syllables of one word; every word has at least one."""
    w = re.sub(r"['’]s$", "", word.lower().strip(".,;:!?\"'()[]{}“”‘’"))
    w = _LETTERS.sub("", w)
    if not w:
        return 1 if _WORD.search(word) else 0
    if len(w) > 3:
        if w.endswith("es") and not (
            w[:-2].endswith(("s", "x", "z", "ch", "sh")) or w[-3] in "cg"
        ):
            w = w[:-1]
        elif w.endswith("s") and not w.endswith(("ss", "us", "is")):
            w = w[:-1]
        if w.endswith("ed") and len(w) > 3:
            if w[-3] in _VOWELS:
                w = w[:-1]
            elif w[-3] not in "td":
                w = w[:-2]
    if (
        len(w) > 2
        and w.endswith("e")
        and w[-2] not in _VOWELS
        and not (w.endswith("le") and w[-3] not in _VOWELS)
    ):
        w = w[:-1]
    groups = 0
    previous_vowel = False
    for i, ch in enumerate(w):
        vowel = ch in _VOWELS and not (ch == "y" and i == 0)
        if vowel and not previous_vowel:
            groups += 1
        previous_vowel = vowel
    return max(groups, 1)


def count_syllables_text(text: str) -> int:
    return sum(count_syllables(w) for w in words(text))


def flesch(text: str) -> float:
    n_words = count_lexicon(text)
    if n_words == 0:
        raise EmptyTextError("Flesch reading ease is undefined for a text without words")
    n_sentences = max(count_sentences(text), 1)
    return (
        206.835
        - 1.015 * (n_words / n_sentences)
        - 84.6 * (count_syllables_text(text) / n_words)
    )


@lru_cache(maxsize=1)
def default_easy_words() -> frozenset[str]:
    """The bundled Dale-Chall list of familiar words (lower case)."""
    text = resources.files("scisimplify.data").joinpath("dale_chall_easy_words.txt").read_text(
        encoding="utf-8"
    )
    return frozenset(load_word_list(text.splitlines()))


def load_word_list(lines: Iterable[str]) -> list[str]:
    return [
        line.strip().lower()
        for line in lines
        if line.strip() and not line.lstrip().startswith("#")
    ]


def _bare(word: str) -> str:
    return re.sub(r"^[^\w]+|[^\w]+$", "", word.lower())


def is_difficult(word: str, easy_words: frozenset[str] | set[str]) -> bool:
    return count_syllables(word) >= 3 and _bare(word) not in easy_words


def count_difficult_words(text: str, easy_words=None) -> int:
    easy = default_easy_words() if easy_words is None else easy_words
    return sum(1 for w in words(text) if is_difficult(w, easy))


def dale_chall(text: str, easy_words=None) -> float:
    """New Dale-Chall score; adds 3.6365 when more than 5% of words are difficult."""
    n_words = count_lexicon(text)
    if n_words == 0:
        raise EmptyTextError("Dale-Chall is undefined for a text without words")
    n_sentences = max(count_sentences(text), 1)
    difficult_pct = 100 * count_difficult_words(text, easy_words) / n_words
    score = 0.1579 * difficult_pct + 0.0496 * (n_words / n_sentences)
    if difficult_pct > 5:
        score += 3.6365
    return score


def reading_time(text: str) -> float:
    """Seconds needed to read ``text``; every character, spaces included, costs 14.69 ms."""
    return count_chars(text) * READING_MS_PER_CHAR / 1000


def compression(source: str, simplified: str) -> float:
    if not simplified:
        raise EmptyTextError("compression is undefined for an empty simplification")
    return count_chars(source) / count_chars(simplified)


def is_empty(text: str | None) -> bool:
    return not text or count_lexicon(text) == 0


@dataclass(frozen=True)
class TextMetrics:
    flesch: float = 0.0
    dale_chall: float = 0.0
    difficult_words: int = 0
    reading_time_s: float = 0.0
    syllables: int = 0
    lexicon: int = 0
    sentences: int = 0
    chars: int = 0
    is_empty: bool = False


def text_metrics(text: str | None, easy_words=None) -> TextMetrics:
    if is_empty(text):
        return TextMetrics(is_empty=True)
    return TextMetrics(
        flesch=flesch(text),
        dale_chall=dale_chall(text, easy_words),
        difficult_words=count_difficult_words(text, easy_words),
        reading_time_s=reading_time(text),
        syllables=count_syllables_text(text),
        lexicon=count_lexicon(text),
        sentences=count_sentences(text),
        chars=count_chars(text),
    )


# (field, label, lower_is_better); order mirrors the usual results table
MEASURES = (
    ("compression", "compression", False),
    ("flesch", "Flesch", False),
    ("dale_chall", "Dale-Chall", True),
    ("difficult_words", "difficult words", True),
    ("reading_time_s", "reading time", True),
    ("syllables", "syllable count", True),
    ("lexicon", "lexicon count", True),
    ("sentences", "sentence count", True),
)


@dataclass
class Aggregate:
    mean: float | None
    std: float | None
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> Aggregate:
        values = list(values)
        if not values:
            return cls(None, None, 0)
        mean = math.fsum(values) / len(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        return cls(mean, std, len(values))


@dataclass
class RunColumn:
    name: str
    metrics: dict[str, Aggregate]
    empty_count: int | None = None


@dataclass
class ReadabilityReport:
    source: RunColumn
    runs: list[RunColumn] = field(default_factory=list)
    std_kind: str = "sample (n-1)"

    def column(self, name: str) -> RunColumn:
        for col in [self.source, *self.runs]:
            if col.name == name:
                return col
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "std_kind": self.std_kind,
            "columns": [asdict(col) for col in [self.source, *self.runs]],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def _rows(self, arrows: bool) -> list[list[str]]:
        cols = [self.source, *self.runs]
        header = ["measure", *(c.name for c in cols)]
        rows = [header]
        label = "empty texts" + (" ↓" if arrows else "")
        rows.append([label, *("-" if c.empty_count is None else str(c.empty_count) for c in cols)])
        for key, name, lower in MEASURES:
            label = name + ((" ↓" if lower else " ↑") if arrows else "")
            rows.append([label, *(_fmt(c.metrics.get(key)) for c in cols)])
        return rows

    def to_markdown(self) -> str:
        rows = self._rows(arrows=True)
        lines = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        return "\n".join(lines) + f"\n\nstandard deviation: {self.std_kind}\n"

    def to_tsv(self) -> str:
        return "\n".join("\t".join(r) for r in self._rows(arrows=True)) + "\n"


def _fmt(agg: Aggregate | None) -> str:
    if agg is None or agg.mean is None:
        return "-"
    return f"{agg.mean:.2f} ± {agg.std:.2f}"


def _column(name: str, metrics: Sequence[TextMetrics]) -> dict[str, Aggregate]:
    kept = [m for m in metrics if not m.is_empty]
    return {
        key: Aggregate.of([getattr(m, key) for m in kept])
        for key, _, _ in MEASURES
        if key != "compression"
    }


def evaluate_run(
    sources: Sequence[str],
    simplifications: Sequence[str | None] | dict[str, Sequence[str | None]],
    easy_words=None,
    run_name: str = "run",
) -> ReadabilityReport:
    """Aggregate readability of the sources and of one or more aligned runs.

    ``simplifications`` is either one sequence aligned with ``sources`` or a
    mapping of run name to such a sequence. ``None`` marks a failed item and
    counts as empty. Means and sample standard deviations are taken over the
    non-empty texts of each column only.
    """
    runs = simplifications if isinstance(simplifications, dict) else {run_name: simplifications}
    for name, simp in runs.items():
        if len(simp) != len(sources):
            raise AlignmentError(
                f"run {name!r} has {len(simp)} texts but there are {len(sources)} sources"
            )
    source_metrics = [text_metrics(s, easy_words) for s in sources]
    source_col = RunColumn("source texts", _column("source", source_metrics))
    report = ReadabilityReport(source_col)
    for name, simp in runs.items():
        metrics = [text_metrics(s, easy_words) for s in simp]
        col = RunColumn(name, _column(name, metrics), sum(m.is_empty for m in metrics))
        col.metrics = {
            "compression": Aggregate.of(
                [compression(src, s) for src, s, m in zip(sources, simp, metrics) if not m.is_empty]
            ),
            **col.metrics,
        }
        report.runs.append(col)
    return report
