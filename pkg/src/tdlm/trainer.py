"""Joint multi-task training loop.

Each epoch interleaves topic-model and language-model minibatches in a
deterministic proportional round-robin; every minibatch is followed by
one Adam step (so the optimizer step count equals the number of
minibatches processed).  In supervised mode the classification
minibatches of an epoch run strictly after all its TM and LM batches.
The checkpoint with the best development perplexity is kept, along with
the latest state for exact resumption.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .checkpoint import TrainState, save_checkpoint
from .config import TrainConfig
from .corpus import Corpus, Vocabulary, make_cls_batches, make_lm_batches, make_tm_batches
from .errors import DivergenceError, EvalError
from .extensions import classification_accuracy, classification_loss
from .language_model import lm_loss, perplexity
from .model import init_model
from .optim import AdamState, adam_step, clip_global_norm, fill_missing_grads, freeze_pad_rows
from .tensor import Tape
from .topic_model import tm_loss

log = logging.getLogger(__name__)

TRAIN_STREAM = 7  # domain separator for the training RNG seed sequence


@dataclass
class EpochMetrics:
    epoch: int
    tm_loss: Optional[float]
    lm_loss: float
    dev_ppl: float
    dev_acc: Optional[float] = None


@dataclass
class TrainResult:
    state: TrainState
    metrics: list = field(default_factory=list)
    schedule_log: list = field(default_factory=list)  # per-epoch list of batch kinds

    @property
    def model(self):
        return self.state.model


def training_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, TRAIN_STREAM])))


def new_train_state(config: TrainConfig, vocab: Vocabulary, label_names=None,
                    tag_names=None, tag_freqs=None) -> TrainState:
    model = init_model(config, vocab, label_names=label_names,
                       tag_names=tag_names, tag_freqs=tag_freqs)
    optimizer = AdamState(model.params, lr=config.lr)
    return TrainState(model=model, optimizer=optimizer,
                      rng=training_rng(config.seed), epoch=0)


def interleave_schedule(n_tm: int, n_lm: int) -> list:
    """Proportional round-robin merge of the two batch streams.

    Integer arithmetic only, so the schedule is a pure function of the two
    counts; ties go to the topic model.
    """
    sched = []
    done_tm = done_lm = 0
    while done_tm < n_tm or done_lm < n_lm:
        if done_lm >= n_lm:
            pick_tm = True
        elif done_tm >= n_tm:
            pick_tm = False
        else:
            pick_tm = (done_tm + 1) * n_lm <= (done_lm + 1) * n_tm
        if pick_tm:
            sched.append("tm")
            done_tm += 1
        else:
            sched.append("lm")
            done_lm += 1
    return sched


def metrics_csv(metrics, supervised: bool) -> str:
    """Render the per-epoch metrics table (deterministic float formatting)."""
    header = "epoch,tm_loss,lm_loss,dev_ppl" + (",dev_acc" if supervised else "")
    rows = [header]
    for m in metrics:
        cells = [str(m.epoch),
                 "" if m.tm_loss is None else repr(m.tm_loss),
                 repr(m.lm_loss), repr(m.dev_ppl)]
        if supervised:
            cells.append("" if m.dev_acc is None else repr(m.dev_acc))
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def train(state: TrainState, train_corpus: Corpus, dev_corpus: Corpus,
          out_dir: Optional[str] = None) -> TrainResult:
    """Run (or continue) training until config.n_epoch epochs are done."""
    model = state.model
    cfg = model.config
    opt = state.optimizer
    rng = state.rng
    result = TrainResult(state=state)
    pad_frozen = [n for n in ("tm_embed", "lm_embed") if model.has(n)]

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(state.epoch + 1, cfg.n_epoch + 1):
        if cfg.vanilla:
            tm_batches = []
        else:
            tm_batches, _ = make_tm_batches(train_corpus, cfg.n_batch, cfg.m1,
                                            cfg.m3, rng=rng, with_tags=cfg.tags)
        lm_batches = make_lm_batches(train_corpus, cfg.n_batch, cfg.m2, cfg.m3,
                                     rng=rng, with_tags=cfg.tags)
        cls_batches = (make_cls_batches(train_corpus, cfg.n_batch, cfg.m3, rng=rng,
                                        with_tags=cfg.tags)
                       if cfg.supervised else [])
        schedule = interleave_schedule(len(tm_batches), len(lm_batches))
        schedule += ["cls"] * len(cls_batches)

        iters = {"tm": iter(tm_batches), "lm": iter(lm_batches), "cls": iter(cls_batches)}
        tm_total, tm_count = 0.0, 0
        lm_ce_total, lm_tok_total = 0.0, 0
        for kind in schedule:
            batch = next(iters[kind])
            with Tape() as tape:
                if kind == "tm":
                    loss = tm_loss(model, batch, training=True, rng=rng)
                    value = float(loss.data)
                    tm_total += value
                    tm_count += 1
                elif kind == "lm":
                    loss_sum, n_tok = lm_loss(model, batch, training=True, rng=rng)
                    # step on the per-token mean so batch size does not skew scale
                    loss = T.scale(loss_sum, 1.0 / max(n_tok, 1))
                    value = float(loss.data)
                    lm_ce_total += float(loss_sum.data)
                    lm_tok_total += n_tok
                else:
                    loss = classification_loss(model, batch, training=True, rng=rng)
                    value = float(loss.data)
                if not np.isfinite(value):
                    raise DivergenceError(kind, opt.step_count + 1)
                tape.backward(loss)
            freeze_pad_rows(model.params, pad_frozen)
            fill_missing_grads(model.params)
            clip_global_norm(model.params, cfg.clip_norm)
            adam_step(model.params, opt)

        dev_ppl = perplexity(model, dev_corpus)
        dev_acc = (classification_accuracy(model, dev_corpus)
                   if cfg.supervised else None)
        metric = EpochMetrics(
            epoch=epoch,
            tm_loss=None if cfg.vanilla else (tm_total / max(tm_count, 1)),
            lm_loss=lm_ce_total / max(lm_tok_total, 1),
            dev_ppl=float(dev_ppl),
            dev_acc=None if dev_acc is None else float(dev_acc),
        )
        result.metrics.append(metric)
        result.schedule_log.append(schedule)
        state.epoch = epoch
        if state.best_dev_ppl is None or dev_ppl < state.best_dev_ppl:
            state.best_dev_ppl = float(dev_ppl)
            state.best_epoch = epoch
            if out_dir:
                save_checkpoint(os.path.join(out_dir, "best.ckpt"), state)
        if out_dir:
            save_checkpoint(os.path.join(out_dir, "last.ckpt"), state)
            _write_logs(out_dir, result, cfg.supervised)
        log.info("epoch %d: tm_loss=%s lm_loss=%.4f dev_ppl=%.3f%s", epoch,
                 "-" if metric.tm_loss is None else f"{metric.tm_loss:.4f}",
                 metric.lm_loss, metric.dev_ppl,
                 "" if metric.dev_acc is None else f" dev_acc={metric.dev_acc:.3f}")

    if out_dir and cfg.n_epoch == 0:
        save_checkpoint(os.path.join(out_dir, "last.ckpt"), state)
    return result


def _write_logs(out_dir: str, result: TrainResult, supervised: bool):
    from .ioutil import atomic_write_text
    atomic_write_text(os.path.join(out_dir, "metrics.csv"),
                      metrics_csv(result.metrics, supervised))
    lines = []
    for i, sched in enumerate(result.schedule_log, start=1):
        lines.append(f"epoch {i}: " + " ".join(sched))
    atomic_write_text(os.path.join(out_dir, "schedule.log"), "\n".join(lines) + "\n")
