"""Complex-phrase identification.

A phrase is scored by comparing how rare each of its terms is in everyday
(lifestyle) text versus scientific text. For a term ``t`` with document
frequencies ``df_lf(t)`` and ``df_sc(t)`` in corpora of ``N_lf`` and ``N_sc``
documents::

    c(t) = log_{N_lf}(N_lf / df_lf(t)) - log_{N_sc}(N_sc / df_sc(t))

and a phrase scores the maximum ``c(t)`` over its terms. Each log term is a
normalized idf in [0, 1], so ``c(t)`` lies in [-1, 1]; positive values mean
the term is rarer in lifestyle text than in scientific text. Phrases scoring
strictly above the threshold are marked with square brackets.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .corpus_index import DEFAULT_TOKENIZER, CorpusStats, TokenizerConfig, lookup_df

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.01
UNSEEN_DF_POLICIES = ("clamp_to_one",)


class DegenerateCorpusError(ValueError):
    pass


class SpanError(ValueError):
    pass


@dataclass(frozen=True)
class PhraseSpan:
    start: int
    end: int
    terms: tuple[str, ...]
    score: float | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise SpanError(f"invalid span [{self.start}, {self.end})")
        if not self.terms:
            raise SpanError(f"span [{self.start}, {self.end}) has no terms")

    def overlaps(self, other: PhraseSpan) -> bool:
        return self.start < other.end and other.start < self.end


def make_span(text: str, start: int, end: int, tokenizer=DEFAULT_TOKENIZER) -> PhraseSpan | None:
    """Span over ``text[start:end]`` with its terms, or None if it has no terms."""
    if not 0 <= start < end <= len(text):
        raise SpanError(f"span [{start}, {end}) outside text of length {len(text)}")
    terms = tuple(tokenizer.tokenize(text[start:end]))
    return PhraseSpan(start, end, terms) if terms else None


@dataclass
class ComplexityConfig:
    lifestyle_stats: CorpusStats
    science_stats: CorpusStats
    threshold: float = DEFAULT_THRESHOLD
    unseen_df_policy: str = "clamp_to_one"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.unseen_df_policy not in UNSEEN_DF_POLICIES:
            raise ValueError(f"unknown unseen_df_policy {self.unseen_df_policy!r}")


def _normalized_idf(stats: CorpusStats, term: str, policy: str) -> float:
    n = stats.doc_count
    if n < 2:
        raise DegenerateCorpusError(
            f"corpus {stats.corpus_id!r} has {n} document(s); need at least 2 for log base N"
        )
    df = lookup_df(stats, term)
    if df == 0 and policy == "clamp_to_one":
        df = 1
    return math.log(n / df) / math.log(n)


def term_complexity(
    term: str,
    lifestyle_stats: CorpusStats,
    science_stats: CorpusStats,
    unseen_df_policy: str = "clamp_to_one",
) -> float:
    return _normalized_idf(lifestyle_stats, term, unseen_df_policy) - _normalized_idf(
        science_stats, term, unseen_df_policy
    )


def phrase_complexity(span: PhraseSpan, config: ComplexityConfig) -> PhraseSpan:
    """Return ``span`` with ``score`` set to the highest term complexity it contains."""
    score = max(
        term_complexity(t, config.lifestyle_stats, config.science_stats, config.unseen_df_policy)
        for t in span.terms
    )
    return replace(span, score=score)


def sanitize_brackets(text: str) -> str:
    """Swap literal square brackets for parentheses so tags stay unambiguous."""
    return text.replace("[", "(").replace("]", ")")


@dataclass(frozen=True)
class TaggedText:
    source: str
    complex_spans: tuple[PhraseSpan, ...] = ()

    def __post_init__(self):
        if "[" in self.source or "]" in self.source:
            raise SpanError("tagged source text may not contain square brackets")
        previous_end = 0
        for span in self.complex_spans:
            if span.end > len(self.source):
                raise SpanError(f"span [{span.start}, {span.end}) outside text")
            if span.start < previous_end:
                raise SpanError("complex spans must be sorted and non-overlapping")
            previous_end = span.end

    def render(self) -> str:
        return render_tagged(self)


def select_complex(spans: Iterable[PhraseSpan], threshold: float) -> list[PhraseSpan]:
    """Spans scoring above ``threshold``; on overlap the higher score wins, ties go to the earlier span."""
    candidates = [s for s in spans if s.score is not None and s.score > threshold]
    candidates.sort(key=lambda s: (-s.score, s.start, s.end))
    chosen: list[PhraseSpan] = []
    for span in candidates:
        if not any(span.overlaps(c) for c in chosen):
            chosen.append(span)
    return sorted(chosen, key=lambda s: s.start)


def tag_complex(text: str, spans: Sequence[PhraseSpan], config: ComplexityConfig) -> TaggedText:
    """Mark spans scoring above the configured threshold.

    Unscored spans are scored first. Offsets refer to ``text``; swapping brackets
    for parentheses keeps every offset valid.
    """
    source = sanitize_brackets(text)
    scored = []
    for span in spans:
        if span.end > len(text):
            raise SpanError(f"span [{span.start}, {span.end}) outside text of length {len(text)}")
        scored.append(span if span.score is not None else phrase_complexity(span, config))
    return TaggedText(source, tuple(select_complex(scored, config.threshold)))


def render_tagged(tagged: TaggedText) -> str:
    parts = []
    pos = 0
    for span in tagged.complex_spans:
        parts += [tagged.source[pos:span.start], "[", tagged.source[span.start:span.end], "]"]
        pos = span.end
    parts.append(tagged.source[pos:])
    return "".join(parts)


def strip_brackets(text: str) -> str:
    return text.replace("[", "").replace("]", "")


# --- keyphrase providers ---------------------------------------------------


class KeyphraseProvider(Protocol):
    def spans(self, text: str, snt_id: str | None = None) -> list[PhraseSpan]: ...


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("scisimplify.data").joinpath("stopwords_en.txt").read_text(
        encoding="utf-8"
    )
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def load_stopwords(path: str | Path) -> frozenset[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(w.strip().lower() for w in lines if w.strip() and not w.startswith("#"))


_TOKEN = re.compile(r"[^\W_]+")
# inflected verb forms ("converged", "using") end noun-like keyphrases
_INFLECTED = re.compile(r"^[^\W\d_]{3,}(ed|ing)$")


def heuristic_keyphrases(
    text: str,
    stopwords: frozenset[str] | None = None,
    max_len: int = 4,
    split_inflected: bool = True,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> list[PhraseSpan]:
    """Candidate keyphrases: maximal runs of content words, cut into windows of ``max_len``.

    A run ends at a stopword, at punctuation other than a hyphen or apostrophe,
    and (with ``split_inflected``) at words ending in -ed or -ing. Repeated
    surface forms are kept once, at their first position.
    """
    stopwords = default_stopwords() if stopwords is None else stopwords
    runs: list[list[re.Match]] = []
    current: list[re.Match] = []
    previous_end = None
    for match in _TOKEN.finditer(text):
        word = match.group(0).lower()
        gap = text[previous_end:match.start()] if previous_end is not None else ""
        delimiter = (
            word in stopwords
            or word.isdigit()
            or (split_inflected and _INFLECTED.match(word) is not None)
        )
        joined = gap.strip() in ("", "-", "'", "’")
        if current and (delimiter or not joined):
            runs.append(current)
            current = []
        if not delimiter:
            current.append(match)
        previous_end = match.end()
    if current:
        runs.append(current)

    seen: set[str] = set()
    spans = []
    for run in runs:
        for i in range(0, len(run), max_len):
            window = run[i:i + max_len]
            start, end = window[0].start(), window[-1].end()
            surface = text[start:end]
            if surface in seen:
                continue
            seen.add(surface)
            span = make_span(text, start, end, tokenizer)
            if span is not None:
                spans.append(span)
    return spans


@dataclass
class HeuristicProvider:
    stopwords: frozenset[str] | None = None
    max_len: int = 4
    split_inflected: bool = True

    def spans(self, text: str, snt_id: str | None = None) -> list[PhraseSpan]:
        if not text:
            return []
        return heuristic_keyphrases(text, self.stopwords, self.max_len, self.split_inflected)


@dataclass
class AnnotationProvider:
    """Precomputed keyphrase offsets keyed by sentence id.

    File format: JSON lines ``{"snt_id": "...", "spans": [[start, end], ...]}``
    with character offsets into the raw source sentence.
    """

    annotations: Mapping[str, list[tuple[int, int]]] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> AnnotationProvider:
        annotations = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    annotations[obj["snt_id"]] = [(int(s), int(e)) for s, e in obj["spans"]]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad annotation line ({exc})") from None
        return cls(annotations)

    def spans(self, text: str, snt_id: str | None = None) -> list[PhraseSpan]:
        if snt_id not in self.annotations:
            log.warning("no keyphrase annotation for %s; text will not be tagged", snt_id)
            return []
        result = []
        for start, end in self.annotations[snt_id]:
            span = make_span(text, start, end)
            if span is not None:
                result.append(span)
        return sorted(result, key=lambda s: s.start)


def extract_keyphrases(text: str, provider: KeyphraseProvider, snt_id: str | None = None) -> list[PhraseSpan]:
    if not text:
        return []
    return provider.spans(text, snt_id)


def tag_text(
    text: str, provider: KeyphraseProvider, config: ComplexityConfig, snt_id: str | None = None
) -> TaggedText:
    return tag_complex(text, extract_keyphrases(text, provider, snt_id), config)
