"""Topic component: document encoding and bag-of-words prediction.

A document's content words are embedded, run through a width-h
convolutional filter bank with identity activation, and max-over-time
pooled into a document vector d.  Attention over the topic input table A
gives a document-topic distribution p = softmax(A d); the document-topic
vector s = B^T p is a convex combination of the output table's rows.
Each target word is predicted independently from s through a dense
softmax layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .corpus import PAD, TmBatch
from .errors import ShapeError
from .model import TdlmModel
from .tensor import Tensor


@dataclass
class DocEncoding:
    """Per-document forward results, all shaped [1, dim].

    ``d`` is the pooled document vector after dropout; ``d_cat`` appends the
    summed tag vector when tags are active (otherwise it is ``d``); ``p`` is
    the attention / document-topic distribution; ``s`` the weighted topic
    vector after dropout.
    """
    d: Tensor
    d_cat: Tensor
    p: Tensor
    s: Tensor


def _strip_trailing_pad(ids: np.ndarray, h: int) -> np.ndarray:
    """Drop trailing pad ids but keep at least h positions (pad if shorter)."""
    ids = np.asarray(ids, dtype=np.int64)
    real = np.nonzero(ids != PAD)[0]
    length = int(real[-1]) + 1 if len(real) else 0
    length = max(length, h)
    if length <= len(ids):
        return ids[:length]
    return np.concatenate([ids, np.full(length - len(ids), PAD, dtype=np.int64)])


def encode_document(model: TdlmModel, context_ids, tag_ids=None,
                    training: bool = False, rng=None) -> DocEncoding:
    """Encode one document context into (d, p, s).

    ``context_ids`` is a 1-d id array, padded or not; trailing padding is
    ignored (the pad embedding is zero and frozen, so it must not feed
    features into the pooling).  With the tag extension active, ``tag_ids``
    are summed into a vector concatenated onto d before attention.
    """
    cfg = model.config
    ids = _strip_trailing_pad(context_ids, cfg.h)
    n = len(ids)
    # window unfold: all h-grams as rows, embedded to [n-h+1, h*e]
    windows = np.lib.stride_tricks.sliding_window_view(ids, cfg.h)
    X = T.embed(model.param("tm_embed"), windows)
    feats = T.add(T.matmul(X, T.transpose(model.param("conv_W"))), model.param("conv_b"))
    d, _ = T.max_over_time2d(feats)
    d = T.dropout(d, cfg.p1, training, rng)

    if cfg.tags:
        d_cat = T.concat_cols(d, _tag_vector(model, tag_ids, d.data.dtype))
    else:
        d_cat = d
    attn_logits = T.matmul(d_cat, T.transpose(model.param("A")))
    p = T.softmax(attn_logits)
    s = T.matmul(p, model.param("B"))
    s = T.dropout(s, cfg.p1, training, rng)
    return DocEncoding(d=d, d_cat=d_cat, p=p, s=s)


def _tag_vector(model: TdlmModel, tag_ids, dtype) -> Tensor:
    """Sum of the document's tag vectors; zero vector when it has none.

    Ids outside [0, n_tags) (unknown tags at inference) are skipped.
    """
    cfg = model.config
    if tag_ids is not None:
        tag_ids = np.asarray(tag_ids, dtype=np.int64)
        tag_ids = tag_ids[(tag_ids >= 0) & (tag_ids < model.n_tags)]
    if tag_ids is None or len(tag_ids) == 0:
        return Tensor(np.zeros((1, cfg.f), dtype=dtype))
    return T.sum_rows(T.embed(model.param("tag_embed"), tag_ids))


def encode_batch(model: TdlmModel, contexts: np.ndarray, tags=None,
                 training: bool = False, rng=None) -> list:
    """Encode each row of a [B, m3] context array; returns DocEncodings."""
    out = []
    for i in range(contexts.shape[0]):
        tag_ids = tags[i] if tags is not None else None
        out.append(encode_document(model, contexts[i], tag_ids=tag_ids,
                                   training=training, rng=rng))
    return out


def tm_loss(model: TdlmModel, batch: TmBatch, training: bool = False,
            rng=None) -> Tensor:
    """Mean over documents of the mean cross-entropy over each one's targets."""
    encodings = encode_batch(model, batch.contexts, tags=batch.tags,
                             training=training, rng=rng)
    S = T.concat_rows([enc.s for enc in encodings])
    logits = T.add(T.matmul(S, model.param("tm_out_W")), model.param("tm_out_b"))
    per_doc = T.cross_entropy_from_logits(logits, batch.targets, batch.target_mask)
    return T.mean_all(per_doc)


def topic_word_distribution(model: TdlmModel, t: int) -> np.ndarray:
    """Vocabulary distribution of topic ``t``: softmax of its output row.

    Substitutes row t of the topic output table for the document-topic
    vector, i.e. a document attending to this topic alone.
    """
    k = model.config.k
    if not (0 <= t < k):
        raise IndexError(f"topic index {t} out of range [0, {k})")
    B = model.param("B").data
    logits = B[t] @ model.param("tm_out_W").data + model.param("tm_out_b").data
    shifted = logits.astype(np.float64) - logits.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def document_topic_distribution(model: TdlmModel, document, limit=None) -> np.ndarray:
    """Attention distribution p for a document (evaluation mode, no dropout).

    ``document`` is a Document or a raw 1-d content-id array.
    """
    if hasattr(document, "content_ids"):
        ids = document.content_ids(limit=limit if limit is not None else model.config.m3)
        tag_ids = document.tags if model.config.tags else None
    else:
        ids = np.asarray(document)
        tag_ids = None
    enc = encode_document(model, ids, tag_ids=tag_ids, training=False)
    return enc.p.data[0].copy()


def top_topic_words(model: TdlmModel, t: int, n: int = 10) -> list:
    """Top-n (word, probability) pairs of a topic, reserved symbols excluded."""
    dist = topic_word_distribution(model, t)
    order = np.argsort(-dist, kind="stable")
    out = []
    for wid in order:
        if wid < 3:  # pad/unk/eos never appear in reports
            continue
        out.append((model.vocab.word(int(wid)), float(dist[wid])))
        if len(out) == n:
            break
    if len(out) < n:
        raise ShapeError(f"topic {t}: only {len(out)} rankable words, need {n}")
    return out


def topic_report(model: TdlmModel, n_words: int = 20) -> list:
    """JSON-ready list of {topic_id, top_words: [{word, prob}, ...]}."""
    report = []
    for t in range(model.config.k):
        words = [{"word": w, "prob": p} for w, p in top_topic_words(model, t, n_words)]
        report.append({"topic_id": t, "top_words": words})
    return report
