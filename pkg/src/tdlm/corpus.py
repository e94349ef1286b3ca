"""Corpus ingestion, vocabulary construction, and minibatch assembly.

Corpus files are UTF-8 text: one document per block, sentences as lines,
blank lines separating documents.  A document block may start with header
lines ``#label=<name>`` and/or ``#tags=<name>,<name>`` carrying metadata.

The vocabulary drops word types occurring fewer than ``min_count`` times
and excludes the most frequent fraction of the retained types.  Dropped
types surface as ``<unk>`` in language-model sequences and are removed
entirely from topic-model contexts; stopwords additionally never enter a
document's bag-of-words context.
"""

from __future__ import annotations

import importlib.resources
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import IngestionError, DataError

log = logging.getLogger(__name__)

PAD, UNK, EOS = 0, 1, 2
RESERVED = ("<pad>", "<unk>", "<eos>")

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]")
_SENT_SPLIT_RE = re.compile(r"(?<=[.?!])\s+")


def tokenize(text: str, split_sentences: bool = False,
             split_contractions: bool = False) -> list:
    """Lowercase and tokenize raw text into sentences of word strings.

    With ``split_sentences`` the text is first broken at ``.?!`` followed by
    whitespace; otherwise the whole string is one sentence.  Punctuation is
    split from words.  ``split_contractions`` additionally detaches ``n't``
    and trailing ``'x`` pieces ("don't" -> "do", "n't"); off by default.
    """
    text = text.strip()
    if not text:
        return []
    pieces = _SENT_SPLIT_RE.split(text) if split_sentences else [text]
    sentences = []
    for piece in pieces:
        toks = _TOKEN_RE.findall(piece.lower())
        if split_contractions:
            out = []
            for tok in toks:
                if tok.endswith("n't") and len(tok) > 3:
                    out.extend((tok[:-3], "n't"))
                elif "'" in tok[1:]:
                    cut = tok.rindex("'")
                    out.extend((tok[:cut], tok[cut:]))
                else:
                    out.append(tok)
            toks = out
        if toks:
            sentences.append(toks)
    return sentences


def load_stopwords(path: Optional[str] = None) -> set:
    """Read a stopword list (one word per line); defaults to the bundled one."""
    if path is None:
        src = importlib.resources.files("tdlm").joinpath("stopwords.txt")
        text = src.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return {line.strip().lower() for line in text.splitlines() if line.strip()}


@dataclass
class RawDocument:
    sentences: list           # list[list[str]]
    label: Optional[str] = None
    tags: Optional[list] = None


def parse_corpus_file(path: str, split_sentences: bool = False,
                      split_contractions: bool = False) -> list:
    """Parse a corpus file into RawDocuments, validating header lines."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    docs = []
    block: list = []
    label = None
    tags = None
    seen_sentence = False

    def flush():
        nonlocal block, label, tags, seen_sentence
        if block or label is not None or tags is not None:
            docs.append(RawDocument(sentences=list(block), label=label, tags=tags))
        block = []
        label = None
        tags = None
        seen_sentence = False

    header_re = re.compile(r"^#(\w+)=(.*)$")
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        m = header_re.match(stripped)
        if m:
            key, value = m.group(1), m.group(2)
            if seen_sentence:
                raise IngestionError(f"{path}:{lineno}: header line after sentence text")
            if key == "label":
                if not value:
                    raise IngestionError(f"{path}:{lineno}: empty #label= value")
                label = value
            elif key == "tags":
                tags = [t.strip() for t in value.split(",") if t.strip()]
                if not tags:
                    raise IngestionError(f"{path}:{lineno}: empty #tags= value")
            else:
                raise IngestionError(f"{path}:{lineno}: unknown document header #{key}=")
            continue
        for sent in tokenize(stripped, split_sentences=split_sentences,
                             split_contractions=split_contractions):
            block.append(sent)
        seen_sentence = True
    flush()
    return docs


class Vocabulary:
    """Bidirectional word/id map with reserved pad/unk/eos ids.

    Ids are dense: 0=pad, 1=unk, 2=eos, then retained word types ordered by
    (frequency desc, word asc).  Each id carries a frequency and a stopword
    flag; "content" ids are non-reserved non-stopwords.
    """

    def __init__(self, words, freqs, stop_flags):
        self.words = list(words)
        self.freqs = np.asarray(freqs, dtype=np.int64)
        self.stop_flags = np.asarray(stop_flags, dtype=bool)
        if not (len(self.words) == len(self.freqs) == len(self.stop_flags)):
            raise IngestionError("vocabulary column lengths differ")
        self._index = {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def id(self, word: str) -> int:
        return self._index.get(word, UNK)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def word(self, wid: int) -> str:
        return self.words[wid]

    def is_content(self, wid: int) -> bool:
        return wid >= len(RESERVED) and not self.stop_flags[wid]

    def content_ids(self) -> np.ndarray:
        ids = np.arange(len(self.words))
        keep = (ids >= len(RESERVED)) & ~self.stop_flags
        return ids[keep]

    def to_tsv(self, path: str):
        from .ioutil import atomic_write_text
        rows = [f"{i}\t{w}\t{int(self.freqs[i])}\t{int(self.stop_flags[i])}"
                for i, w in enumerate(self.words)]
        atomic_write_text(path, "\n".join(rows) + "\n")

    @classmethod
    def from_tsv(cls, path: str) -> "Vocabulary":
        words, freqs, flags = [], [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise IngestionError(f"{path}:{lineno + 1}: expected 4 tab-separated fields")
                wid, word, freq, flag = parts
                if int(wid) != len(words):
                    raise IngestionError(f"{path}:{lineno + 1}: non-dense id {wid}")
                words.append(word)
                freqs.append(int(freq))
                flags.append(bool(int(flag)))
        if words[:3] != list(RESERVED):
            raise IngestionError(f"{path}: reserved rows must be {RESERVED}")
        return cls(words, freqs, flags)


def build_vocabulary(raw_docs: Iterable[RawDocument], min_count: int = 10,
                     top_exclude_fraction: float = 0.001,
                     stopwords: Optional[set] = None) -> Vocabulary:
    """Count types over a raw corpus and assign ids under the retention rules.

    Retains types with frequency >= ``min_count``, then excludes the
    ``ceil(fraction * retained)`` most frequent of them.  Ordering is
    deterministic: (frequency desc, word asc).
    """
    if not (0.0 <= top_exclude_fraction < 1.0):
        raise IngestionError(f"top_exclude_fraction must be in [0, 1), got {top_exclude_fraction}")
    counts: dict = {}
    total_tokens = 0
    for doc in raw_docs:
        for sent in doc.sentences:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
                total_tokens += 1
    if total_tokens == 0:
        raise IngestionError("empty corpus: no tokens to build a vocabulary from")

    retained = [(w, c) for w, c in counts.items() if c >= min_count]
    retained.sort(key=lambda wc: (-wc[1], wc[0]))
    n_exclude = math.ceil(top_exclude_fraction * len(retained))
    kept = retained[n_exclude:]

    stopwords = stopwords or set()
    filtered_tokens = total_tokens - sum(c for _, c in kept)
    words = list(RESERVED) + [w for w, _ in kept]
    freqs = [0, filtered_tokens, 0] + [c for _, c in kept]
    flags = [False, False, False] + [w in stopwords for w, _ in kept]
    return Vocabulary(words, freqs, flags)


@dataclass
class Document:
    """One document: sentences as id arrays plus optional label/tag metadata.

    ``sentence_content`` holds, per sentence, the content-word ids in token
    order (stopwords and filtered types removed); the bag-of-words context
    for sentence j is the concatenation of every other sentence's entry.
    """
    sentences: list                 # list[np.ndarray int32]
    sentence_content: list          # list[np.ndarray int32]
    label: int = -1                 # -1 = unlabeled
    tags: Optional[np.ndarray] = None

    def content_ids(self, limit: Optional[int] = None) -> np.ndarray:
        parts = [c for c in self.sentence_content if len(c)]
        ids = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)
        return ids[:limit] if limit is not None else ids

    def context_excluding(self, sent_idx: int, limit: Optional[int] = None) -> np.ndarray:
        parts = [c for j, c in enumerate(self.sentence_content) if j != sent_idx and len(c)]
        ids = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)
        return ids[:limit] if limit is not None else ids

    @property
    def n_tokens(self) -> int:
        return int(sum(len(s) for s in self.sentences))


@dataclass
class Corpus:
    documents: list
    label_names: Optional[list] = None
    tag_names: Optional[list] = None
    tag_freqs: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.documents)

    @property
    def n_tokens(self) -> int:
        return sum(d.n_tokens for d in self.documents)


def collect_label_names(raw_docs: Iterable[RawDocument]) -> list:
    names = sorted({d.label for d in raw_docs if d.label is not None})
    return names


def collect_tag_names(raw_docs: Iterable[RawDocument]) -> tuple:
    counts: dict = {}
    for d in raw_docs:
        for t in d.tags or ():
            counts[t] = counts.get(t, 0) + 1
    names = sorted(counts)
    freqs = np.asarray([counts[n] for n in names], dtype=np.int64)
    return names, freqs


def encode_corpus(raw_docs, vocab: Vocabulary, label_names=None, tag_names=None,
                  tag_freqs=None, strict_tags: bool = False) -> Corpus:
    """Map a raw corpus to word/label/tag ids.

    Unknown labels encode as -1.  Unknown tags raise :class:`DataError` when
    ``strict_tags`` (training-side ingestion); otherwise they are dropped,
    leaving the zero vector to stand in at inference time.
    """
    label_index = {n: i for i, n in enumerate(label_names or [])}
    tag_index = {n: i for i, n in enumerate(tag_names or [])}
    documents = []
    for di, raw in enumerate(raw_docs):
        sents = []
        content = []
        for sent in raw.sentences:
            ids = np.asarray([vocab.id(t) for t in sent], dtype=np.int32)
            sents.append(ids)
            content.append(ids[[vocab.is_content(int(i)) for i in ids]]
                           if len(ids) else ids)
        label = label_index.get(raw.label, -1) if raw.label is not None else -1
        tags = None
        if raw.tags is not None:
            tag_ids = []
            for t in raw.tags:
                if t in tag_index:
                    tag_ids.append(tag_index[t])
                elif strict_tags:
                    raise DataError(f"document {di}: unknown tag {t!r}")
            tags = np.asarray(tag_ids, dtype=np.int32)
        documents.append(Document(sentences=sents, sentence_content=content,
                                  label=label, tags=tags))
    return Corpus(documents=documents, label_names=label_names,
                  tag_names=tag_names, tag_freqs=tag_freqs)


def load_corpus(path: str, vocab: Vocabulary, **kw) -> Corpus:
    raw = parse_corpus_file(path)
    return encode_corpus(raw, vocab, **kw)


# ---------------------------------------------------------------------------
# minibatch assembly


@dataclass
class LmBatch:
    """A batch of sentence rows for the language-model sub-task.

    ``inputs[t]`` predicts ``targets[t]``; mask is 0 exactly on pad
    positions.  ``contexts`` holds each row's document bag-of-words
    (current sentence excluded), padded/truncated to m3.
    """
    inputs: np.ndarray        # [B, m2] int32
    targets: np.ndarray       # [B, m2] int32
    mask: np.ndarray          # [B, m2] float32
    contexts: np.ndarray      # [B, m3] int32
    tags: Optional[list] = None   # per-row tag id arrays

    @property
    def n_rows(self):
        return self.inputs.shape[0]


@dataclass
class TmBatch:
    """A batch of documents for the topic-model sub-task."""
    contexts: np.ndarray      # [B, m3] int32
    targets: np.ndarray       # [B, m1] int32
    target_mask: np.ndarray   # [B, m1] float32
    tags: Optional[list] = None


@dataclass
class ClsBatch:
    """A batch of labeled documents for the classification sub-task."""
    contexts: np.ndarray      # [B, m3] int32
    labels: np.ndarray        # [B] int32
    doc_indices: np.ndarray   # [B] int64, positions in the source corpus
    tags: Optional[list] = None


def _pad_context(ids: np.ndarray, m3: int) -> np.ndarray:
    out = np.full(m3, PAD, dtype=np.int32)
    n = min(len(ids), m3)
    out[:n] = ids[:n]
    return out


def lm_rows(corpus: Corpus, m2: int, m3: int, with_tags: bool = False):
    """Expand every sentence into (input, target, mask, context, tags) rows.

    A sentence of n words becomes the stream eos w1..wn eos with n+1
    prediction positions, chunked into rows of m2 positions.  LSTM state is
    not carried across chunks.
    """
    rows = []
    for doc in corpus.documents:
        for j, sent in enumerate(doc.sentences):
            if len(sent) == 0:
                continue
            stream = np.concatenate(([EOS], sent, [EOS])).astype(np.int32)
            n_pos = len(stream) - 1
            context = doc.context_excluding(j, limit=m3)
            ctx = _pad_context(context, m3)
            tags = doc.tags if with_tags else None
            for start in range(0, n_pos, m2):
                chunk = min(m2, n_pos - start)
                inp = np.full(m2, PAD, dtype=np.int32)
                tgt = np.full(m2, PAD, dtype=np.int32)
                msk = np.zeros(m2, dtype=np.float32)
                inp[:chunk] = stream[start:start + chunk]
                tgt[:chunk] = stream[start + 1:start + 1 + chunk]
                msk[:chunk] = 1.0
                rows.append((inp, tgt, msk, ctx, tags))
    return rows


def make_lm_batches(corpus: Corpus, n_batch: int, m2: int, m3: int,
                    rng=None, with_tags: bool = False) -> list:
    """Assemble LmBatches; ``rng`` shuffles row order (None = corpus order)."""
    rows = lm_rows(corpus, m2, m3, with_tags=with_tags)
    if not rows:
        return []
    order = rng.permutation(len(rows)) if rng is not None else np.arange(len(rows))
    batches = []
    for at in range(0, len(rows), n_batch):
        chunk = [rows[i] for i in order[at:at + n_batch]]
        batches.append(LmBatch(
            inputs=np.stack([r[0] for r in chunk]),
            targets=np.stack([r[1] for r in chunk]),
            mask=np.stack([r[2] for r in chunk]),
            contexts=np.stack([r[3] for r in chunk]),
            tags=[r[4] for r in chunk] if with_tags else None,
        ))
    return batches


def make_tm_batches(corpus: Corpus, n_batch: int, m1: int, m3: int,
                    rng=None, with_tags: bool = False):
    """Assemble TmBatches: per document, m1 target words plus full context.

    Targets are sampled uniformly without replacement from the document's
    content-word tokens (with replacement when fewer than m1 exist); with
    ``rng=None`` the first m1 content tokens are taken instead.  Documents
    with zero content words are skipped; returns (batches, n_skipped).
    """
    entries = []
    skipped = 0
    doc_order = (rng.permutation(len(corpus.documents)) if rng is not None
                 else np.arange(len(corpus.documents)))
    for di in doc_order:
        doc = corpus.documents[di]
        content = doc.content_ids()
        if len(content) == 0:
            skipped += 1
            continue
        if rng is None:
            idx = np.arange(min(m1, len(content)))
            if len(idx) < m1:
                idx = np.concatenate([idx, np.zeros(m1 - len(idx), dtype=np.int64)])
            targets = content[idx]
        elif len(content) >= m1:
            targets = content[rng.choice(len(content), size=m1, replace=False)]
        else:
            targets = content[rng.choice(len(content), size=m1, replace=True)]
        ctx = _pad_context(content, m3)
        entries.append((ctx, targets.astype(np.int32),
                        doc.tags if with_tags else None))
    if skipped:
        log.warning("topic-model batches: skipped %d document(s) with no content words", skipped)
    batches = []
    for at in range(0, len(entries), n_batch):
        chunk = entries[at:at + n_batch]
        batches.append(TmBatch(
            contexts=np.stack([e[0] for e in chunk]),
            targets=np.stack([e[1] for e in chunk]),
            target_mask=np.ones((len(chunk), m1), dtype=np.float32),
            tags=[e[2] for e in chunk] if with_tags else None,
        ))
    return batches, skipped


def make_cls_batches(corpus: Corpus, n_batch: int, m3: int, rng=None,
                     with_tags: bool = False, require_labels: bool = True) -> list:
    """Assemble classification batches over whole-document contexts."""
    order = (rng.permutation(len(corpus.documents)) if rng is not None
             else np.arange(len(corpus.documents)))
    entries = []
    for di in order:
        doc = corpus.documents[di]
        if doc.label < 0:
            if require_labels:
                raise DataError(f"document {int(di)} has no label in a supervised run")
            continue
        ctx = _pad_context(doc.content_ids(), m3)
        entries.append((ctx, doc.label, int(di), doc.tags if with_tags else None))
    batches = []
    for at in range(0, len(entries), n_batch):
        chunk = entries[at:at + n_batch]
        batches.append(ClsBatch(
            contexts=np.stack([e[0] for e in chunk]),
            labels=np.asarray([e[1] for e in chunk], dtype=np.int32),
            doc_indices=np.asarray([e[2] for e in chunk], dtype=np.int64),
            tags=[e[3] for e in chunk] if with_tags else None,
        ))
    return batches


def load_pretrained_embeddings(path: str, vocab: Vocabulary, table: np.ndarray) -> int:
    """Overwrite table rows from a textual word-vector file.

    Format: first line ``<count> <dim>``, then ``word v1 ... vdim`` per
    line.  Words absent from the file keep their existing rows; the pad row
    is never touched.  Returns the number of rows loaded.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise IngestionError(f"{path}: first line must be '<count> <dim>'")
        dim = int(header[1])
        if dim != table.shape[1]:
            raise IngestionError(f"{path}: vector dim {dim} != embedding dim {table.shape[1]}")
        loaded = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise IngestionError(f"{path}:{lineno}: expected {dim + 1} fields")
            wid = vocab.id(parts[0])
            if wid == UNK and parts[0] not in vocab:
                continue
            if wid == PAD:
                continue
            table[wid] = np.asarray(parts[1:], dtype=np.float64).astype(table.dtype)
            loaded += 1
    return loaded
