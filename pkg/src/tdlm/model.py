"""Model parameter set: named tensors, seeded initialization, metadata.

Every weight matrix draws from uniform(-sqrt(6/(fan_in+fan_out)), +...)
with a per-tensor RNG derived from (seed, tensor name), so two models
built from the same seed share bit-identical draws for every tensor they
have in common (a vanilla model's LSTM equals the full model's LSTM; a
tag-augmented model's attention table extends the plain one column-wise).
Biases start at zero; the topic lookup tables use uniform(-0.05, 0.05);
tag vectors start at zero.  Pad embedding rows are zero and stay frozen.
"""

from __future__ import annotations

import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig
from .corpus import Vocabulary
from .errors import ConfigError
from .tensor import Tensor, DEFAULT_DTYPE

PAD_FROZEN_TABLES = ("tm_embed", "lm_embed")


def _rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])))


def _glorot(seed, name, rows, cols, dtype):
    limit = np.sqrt(6.0 / (rows + cols))
    return _rng_for(seed, name).uniform(-limit, limit, size=(rows, cols)).astype(dtype)


def _uniform05(seed, name, rows, cols, dtype):
    return _rng_for(seed, name).uniform(-0.05, 0.05, size=(rows, cols)).astype(dtype)


@dataclass
class TdlmModel:
    """Configuration, vocabulary, and the named parameter tensors.

    ``params`` maps name -> Tensor (requires_grad).  Label and tag name
    tables are populated when the corresponding extension is active.
    """
    config: TrainConfig
    vocab: Vocabulary
    params: "OrderedDict[str, Tensor]"
    label_names: Optional[list] = None
    tag_names: Optional[list] = None
    tag_freqs: Optional[np.ndarray] = None

    def param(self, name: str) -> Tensor:
        return self.params[name]

    def has(self, name: str) -> bool:
        return name in self.params

    @property
    def n_classes(self) -> int:
        return len(self.label_names) if self.label_names else 0

    @property
    def n_tags(self) -> int:
        return len(self.tag_names) if self.tag_names else 0

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


def init_params(config: TrainConfig, vocab_size: int, n_classes: int = 0,
                n_tags: int = 0, dtype=DEFAULT_DTYPE) -> "OrderedDict[str, Tensor]":
    """Build the parameter dict for the configured model variant."""
    cfg = config
    seed = cfg.seed
    V = vocab_size
    params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(name, data):
        params[name] = Tensor(np.ascontiguousarray(data, dtype=dtype),
                              requires_grad=True, name=name)

    if not cfg.vanilla:
        tm_embed = _glorot(seed, "tm_embed", V, cfg.e, dtype)
        tm_embed[0, :] = 0.0  # pad row, frozen
        add("tm_embed", tm_embed)
        add("conv_W", _glorot(seed, "conv_W", cfg.a, cfg.e * cfg.h, dtype))
        add("conv_b", np.zeros(cfg.a, dtype=dtype))
        A = _uniform05(seed, "A", cfg.k, cfg.a, dtype)
        if cfg.tags:
            # Tag columns draw separately so the base block matches the
            # untagged model built from the same seed.
            A = np.concatenate([A, _uniform05(seed, "A_tag", cfg.k, cfg.f, dtype)], axis=1)
        add("A", A)
        add("B", _uniform05(seed, "B", cfg.k, cfg.b, dtype))
        add("tm_out_W", _glorot(seed, "tm_out_W", cfg.b, V, dtype))
        add("tm_out_b", np.zeros(V, dtype=dtype))
        if cfg.tags:
            add("tag_embed", np.zeros((n_tags, cfg.f), dtype=dtype))

    lm_embed = _glorot(seed, "lm_embed", V, cfg.e, dtype)
    lm_embed[0, :] = 0.0
    add("lm_embed", lm_embed)
    for layer in range(1, cfg.n_layer + 1):
        in_dim = cfg.e if layer == 1 else cfg.n_hidden
        for gate in ("i", "f", "o", "c"):
            add(f"lstm{layer}_W{gate}",
                _glorot(seed, f"lstm{layer}_W{gate}", in_dim, cfg.n_hidden, dtype))
            add(f"lstm{layer}_U{gate}",
                _glorot(seed, f"lstm{layer}_U{gate}", cfg.n_hidden, cfg.n_hidden, dtype))
            add(f"lstm{layer}_b{gate}", np.zeros(cfg.n_hidden, dtype=dtype))
    if not cfg.vanilla:
        for gate in ("z", "r", "h"):
            add(f"gate_W{gate}", _glorot(seed, f"gate_W{gate}", cfg.b, cfg.n_hidden, dtype))
            add(f"gate_U{gate}", _glorot(seed, f"gate_U{gate}", cfg.n_hidden, cfg.n_hidden, dtype))
            add(f"gate_b{gate}", np.zeros(cfg.n_hidden, dtype=dtype))
    add("lm_out_W", _glorot(seed, "lm_out_W", cfg.n_hidden, V, dtype))
    add("lm_out_b", np.zeros(V, dtype=dtype))

    if cfg.supervised:
        if cfg.vanilla:
            raise ConfigError("supervised mode needs the topic component")
        if n_classes <= 0:
            raise ConfigError("supervised mode needs at least one label class")
        head_in = cfg.a + cfg.b + (cfg.f if cfg.tags else 0)
        add("cls_W", _glorot(seed, "cls_W", head_in, n_classes, dtype))
        add("cls_b", np.zeros(n_classes, dtype=dtype))
    return params


def init_model(config: TrainConfig, vocab: Vocabulary, label_names=None,
               tag_names=None, tag_freqs=None, dtype=DEFAULT_DTYPE) -> TdlmModel:
    config.validate()
    if config.tags and not tag_names:
        raise ConfigError("tags mode enabled but the corpus provides no tags")
    if config.supervised and not label_names:
        raise ConfigError("supervised mode enabled but the corpus provides no labels")
    params = init_params(config, len(vocab),
                         n_classes=len(label_names) if label_names else 0,
                         n_tags=len(tag_names) if tag_names else 0, dtype=dtype)
    return TdlmModel(config=config, vocab=vocab, params=params,
                     label_names=list(label_names) if label_names else None,
                     tag_names=list(tag_names) if tag_names else None,
                     tag_freqs=(np.asarray(tag_freqs, dtype=np.int64)
                                if tag_freqs is not None else None))
