"""Sentence corpus loading, cleaning, and the canonical tokenization.

Every other stage (indexing, retrieval, distractor selection, validation)
goes through :func:`tokenize_normalize`, so this module owns the single
definition of what a "token" is: lowercase, split on non-alphanumeric
runs, stopword-filtered, Porter-stemmed.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .porter import stem

# A token bag maps stem -> occurrence count.  The key view is the set view;
# dict key views support the set algebra used for the retrieval differences.
TokenBag = Counter


def _load_stopwords() -> frozenset[str]:
    text = resources.files("hopkit.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


STOPWORDS: frozenset[str] = _load_stopwords()

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_WS_RE = re.compile(r"\s+")


def tokenize_normalize(text: str) -> TokenBag:
    """Lowercase, split, drop stopwords, Porter-stem; counts preserved.

    Stems that collapse onto a stopword (e.g. "doing" -> "do") are dropped
    too, so no stopword ever appears as a key.
    """
    bag: TokenBag = Counter()
    for token in _TOKEN_RE.findall(text.lower()):
        if token in STOPWORDS:
            continue
        stemmed = stem(token)
        if not stemmed or stemmed in STOPWORDS:
            continue
        bag[stemmed] += 1
    return bag


def stem_set(text: str) -> frozenset[str]:
    """Distinct normalized stems of a string."""
    return frozenset(tokenize_normalize(text))


def normalize_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


# ---------------------------------------------------------------------------
# Cleaning


@dataclass(frozen=True)
class CleanResult:
    accepted: bool
    reason: str | None = None


_MARKUP_RE = re.compile(r"[<>{}][A-Za-z/]|[A-Za-z/][<>{}]")
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+\.[\w.-]+")
_URL_RE = re.compile(r"https?://\S+|www\.\S+", re.IGNORECASE)
_NUMERIC_TOKEN_RE = re.compile(r"[\d.,:/%-]*\d[\d.,:/%-]*")

MIN_TOKENS = 3
MAX_TOKENS = 60
MIN_ALPHA_RATIO = 0.6
NUMBER_RUN_LEN = 4


def clean_filter(candidate: str) -> CleanResult:
    """Accept or reject a candidate sentence; the reason names the first
    failed rule (markup, number_run, email, url, alpha_ratio, token_count).
    """
    text = candidate.strip()
    if _MARKUP_RE.search(text):
        return CleanResult(False, "markup")
    tokens = text.split()
    run = 0
    for token in tokens:
        if _NUMERIC_TOKEN_RE.fullmatch(token):
            run += 1
            if run >= NUMBER_RUN_LEN:
                return CleanResult(False, "number_run")
        else:
            run = 0
    if _EMAIL_RE.search(text):
        return CleanResult(False, "email")
    if _URL_RE.search(text):
        return CleanResult(False, "url")
    non_space = sum(1 for ch in text if not ch.isspace())
    alpha = sum(1 for ch in text if ch.isalpha())
    if non_space == 0 or alpha / non_space < MIN_ALPHA_RATIO:
        return CleanResult(False, "alpha_ratio")
    if not MIN_TOKENS <= len(tokens) <= MAX_TOKENS:
        return CleanResult(False, "token_count")
    return CleanResult(True)


# ---------------------------------------------------------------------------
# Sentence segmentation

# Abbreviations whose trailing period never ends a sentence.
DEFAULT_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "etc",
        "e.g", "i.e", "cf", "fig", "no", "dept", "inc", "ltd", "co",
        "approx", "est", "al", "eds", "ed", "vol", "pp",
    }
)

_BOUNDARY_RE = re.compile(r"[.!?]+")


def segment_sentences(
    document: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[str]:
    """Split a document on sentence-final punctuation.

    A run of . ! ? ends a sentence when followed by whitespace and then an
    uppercase letter or a blank stretch containing a newline, unless the
    preceding word is a protected abbreviation.  Joining the results and
    collapsing whitespace reproduces the input.
    """
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY_RE.finditer(document):
        end = match.end()
        if end >= len(document):
            break
        follow = document[end:]
        stripped = follow.lstrip()
        leading_ws = follow[: len(follow) - len(stripped)]
        if not leading_ws:
            continue
        if not ("\n" in leading_ws or (stripped and stripped[0].isupper())):
            continue
        prev_word = document[start : match.start()].split()[-1:] or [""]
        word = prev_word[0].lower().lstrip("(\"'")
        if word in abbreviations or word.rstrip(".") in abbreviations:
            continue
        piece = document[start:end].strip()
        if piece:
            sentences.append(normalize_whitespace(piece))
        start = end
    tail = document[start:].strip()
    if tail:
        sentences.append(normalize_whitespace(tail))
    return sentences


# ---------------------------------------------------------------------------
# Corpus


@dataclass(frozen=True)
class Sentence:
    """A corpus sentence with a stable id and its cached token bag."""

    id: int
    text: str
    tokens: TokenBag

    @classmethod
    def make(cls, sid: int, text: str) -> "Sentence":
        return cls(sid, text, tokenize_normalize(text))


@dataclass
class Corpus:
    """Immutable-after-load ordered sentence collection.

    Ids are dense 0..n-1; texts are unique after whitespace normalization.
    Safe to share across concurrent readers.
    """

    sentences: list[Sentence]
    source_digest: str = ""
    rejections: Counter = field(default_factory=Counter)
    _by_text: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._by_text:
            self._by_text = {
                normalize_whitespace(s.text): s.id for s in self.sentences
            }

    def __len__(self) -> int:
        return len(self.sentences)

    def __getitem__(self, sid: int) -> Sentence:
        return self.sentences[sid]

    def id_of_text(self, text: str) -> int | None:
        """Resolve a sentence by exact normalized text, or None."""
        return self._by_text.get(normalize_whitespace(text))

    @classmethod
    def from_texts(cls, texts, source_digest: str = "") -> "Corpus":
        """Build a corpus from already-clean sentence strings (dedups,
        assigns ids in order).  Lines are not run through clean_filter."""
        sentences: list[Sentence] = []
        seen: dict[str, int] = {}
        for raw in texts:
            text = normalize_whitespace(_strip_controls(raw))
            if not text or text in seen:
                continue
            seen[text] = len(sentences)
            sentences.append(Sentence.make(len(sentences), text))
        return cls(sentences, source_digest)


_CONTROL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")


def _strip_controls(text: str) -> str:
    return _CONTROL_RE.sub(" ", text)


def load_corpus(path: str | Path) -> Corpus:
    """Load a one-sentence-per-line UTF-8 file into a Corpus.

    Applies clean_filter per line (rejection counts are kept on the
    corpus), dedups exact normalized text, and assigns ids in input order.
    Raises on unreadable files; malformed UTF-8 fails fast with the line
    number.
    """
    path = Path(path)
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    sentences: list[Sentence] = []
    rejections: Counter = Counter()
    seen: set[str] = set()
    for lineno, line in enumerate(raw.split(b"\n"), start=1):
        try:
            decoded = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(f"{path}: malformed UTF-8 on line {lineno}: {exc}") from exc
        text = normalize_whitespace(_strip_controls(decoded))
        if not text:
            continue
        verdict = clean_filter(text)
        if not verdict.accepted:
            rejections[verdict.reason] += 1
            continue
        if text in seen:
            rejections["duplicate"] += 1
            continue
        seen.add(text)
        sentences.append(Sentence.make(len(sentences), text))
    return Corpus(sentences, digest, rejections)


def write_rejection_report(corpus: Corpus, path: str | Path) -> None:
    """Tab-separated "reason<TAB>count" lines, sorted by reason."""
    lines = [f"{reason}\t{count}" for reason, count in sorted(corpus.rejections.items())]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
