"""LSTM language model with gated fusion of the document-topic vector.

The recurrence is a standard stacked LSTM.  After the top layer, a
GRU-style gating unit mixes the hidden state with a candidate state built
from the document-topic vector s:

    z_t = sigmoid(W_z s + U_z h_t + b_z)
    r_t = sigmoid(W_r s + U_r h_t + b_r)
    hhat_t = tanh(W_h s + U_h (r_t * h_t) + b_h)
    h'_t = (1 - z_t) * h_t + z_t * hhat_t

so a closed z-gate reproduces the plain LSTM exactly.  s is computed once
per sequence row from the row's document context and held fixed across
timesteps.  Dropout applies to input embeddings and to the top layer's
hidden output before fusion.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import tensor as T
from .corpus import Corpus, LmBatch, make_lm_batches
from .errors import EvalError
from .model import TdlmModel
from .tensor import Tensor
from .topic_model import encode_document


def lstm_step(model: TdlmModel, layer: int, v: Tensor, h: Tensor, c: Tensor):
    """One LSTM timestep for one layer over a [B, *] batch; returns (h, c)."""
    p = model.param
    pre = f"lstm{layer}_"

    def gate(name, act):
        z = T.add(T.add(T.matmul(v, p(pre + "W" + name)),
                        T.matmul(h, p(pre + "U" + name))),
                  p(pre + "b" + name))
        return act(z)

    i = gate("i", T.sigmoid)
    f = gate("f", T.sigmoid)
    o = gate("o", T.sigmoid)
    chat = gate("c", T.tanh)
    c_new = T.add(T.mul(f, c), T.mul(i, chat))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


def fuse_topic(model: TdlmModel, h: Tensor, s: Tensor) -> Tensor:
    """Gated convex combination of the hidden state and a topic candidate."""
    p = model.param
    z = T.sigmoid(T.add(T.add(T.matmul(s, p("gate_Wz")), T.matmul(h, p("gate_Uz"))),
                        p("gate_bz")))
    r = T.sigmoid(T.add(T.add(T.matmul(s, p("gate_Wr")), T.matmul(h, p("gate_Ur"))),
                        p("gate_br")))
    hhat = T.tanh(T.add(T.add(T.matmul(s, p("gate_Wh")),
                              T.matmul(T.mul(r, h), p("gate_Uh"))),
                        p("gate_bh")))
    return T.add(T.mul(T.one_minus(z), h), T.mul(z, hhat))


def _batch_topic_vectors(model: TdlmModel, batch: LmBatch, training, rng) -> Tensor:
    rows = []
    for i in range(batch.n_rows):
        tag_ids = batch.tags[i] if batch.tags is not None else None
        enc = encode_document(model, batch.contexts[i], tag_ids=tag_ids,
                              training=training, rng=rng)
        rows.append(enc.s)
    return T.concat_rows(rows)


def lm_loss(model: TdlmModel, batch: LmBatch, training: bool = False, rng=None):
    """Masked cross-entropy sum over a batch of rows, plus the token count.

    In vanilla mode the fusion step is skipped (h' = h) and no document
    encoding happens at all.
    """
    cfg = model.config
    vanilla = cfg.vanilla
    B = batch.n_rows
    # rows are padded to m2; steps past the longest real row are all masked
    lengths = batch.mask.sum(axis=1).astype(np.int64)
    T_steps = int(lengths.max()) if B else 0
    if T_steps == 0:
        return Tensor(np.zeros((), dtype=model.param("lm_out_W").data.dtype)), 0

    S = None if vanilla else _batch_topic_vectors(model, batch, training, rng)

    dtype = model.param("lm_embed").data.dtype
    h = [Tensor(np.zeros((B, cfg.n_hidden), dtype=dtype)) for _ in range(cfg.n_layer)]
    c = [Tensor(np.zeros((B, cfg.n_hidden), dtype=dtype)) for _ in range(cfg.n_layer)]
    fused_rows = []
    for t in range(T_steps):
        v = T.embed(model.param("lm_embed"), batch.inputs[:, t])
        v = T.dropout(v, cfg.p2, training, rng)
        x = v
        for layer in range(cfg.n_layer):
            h[layer], c[layer] = lstm_step(model, layer + 1, x, h[layer], c[layer])
            x = h[layer]
        top = T.dropout(x, cfg.p2, training, rng)
        fused_rows.append(top if vanilla else fuse_topic(model, top, S))

    H = T.concat_rows(fused_rows)  # [T*B, n_hidden], timestep-major
    logits = T.add(T.matmul(H, model.param("lm_out_W")), model.param("lm_out_b"))
    targets = np.concatenate([batch.targets[:, t] for t in range(T_steps)])
    mask = np.concatenate([batch.mask[:, t] for t in range(T_steps)])
    ce = T.cross_entropy_from_logits(logits, targets)
    loss = T.sum_all(T.mul_const(ce, mask))
    return loss, int(mask.sum())


def perplexity(model: TdlmModel, corpus: Corpus, n_batch: Optional[int] = None) -> float:
    """exp(total masked cross-entropy / predicted tokens) over a corpus.

    Evaluation mode: dropout off, deterministic batch order.  End-of-sentence
    predictions count; padding never does.
    """
    cfg = model.config
    batches = make_lm_batches(corpus, n_batch or cfg.n_batch, cfg.m2, cfg.m3,
                              rng=None, with_tags=cfg.tags)
    if not batches:
        raise EvalError("perplexity over an empty corpus split")
    total = 0.0
    count = 0
    for batch in batches:
        loss, n = lm_loss(model, batch, training=False)
        total += float(loss.data)
        count += n
    if count == 0:
        raise EvalError("perplexity over a split with no predictable tokens")
    return float(np.exp(total / count))
