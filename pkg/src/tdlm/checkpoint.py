"""Checkpoint save/load: magic "TDLM1", JSON header, raw float32 payload.

The header carries the config, the vocabulary, label/tag tables, the
epoch counter, optimizer scalars, and the training RNG state; the payload
holds every parameter tensor plus the Adam moment arrays.  A save/load
round trip is byte-identical, so resuming reproduces an uninterrupted
run's trajectory exactly.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import TrainConfig
from .corpus import Vocabulary
from .errors import CheckpointError
from .ioutil import read_container, write_container
from .model import TdlmModel
from .optim import AdamState
from .tensor import Tensor

MAGIC = b"TDLM1"
FORMAT_VERSION = 1


@dataclass
class TrainState:
    """Everything needed to continue (or start) a training run."""
    model: TdlmModel
    optimizer: AdamState
    rng: np.random.Generator
    epoch: int = 0
    best_dev_ppl: Optional[float] = None
    best_epoch: Optional[int] = None


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_json(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def save_checkpoint(path: str, state: TrainState):
    model = state.model
    for name, p in model.params.items():
        if p.data.dtype != np.float32:
            raise CheckpointError(f"checkpoints store float32 tensors; {name!r} is "
                                  f"{p.data.dtype.name}")
    opt = state.optimizer
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": {
            "words": model.vocab.words,
            "freqs": [int(x) for x in model.vocab.freqs],
            "stop_flags": [bool(x) for x in model.vocab.stop_flags],
        },
        "label_names": model.label_names,
        "tag_names": model.tag_names,
        "tag_freqs": ([int(x) for x in model.tag_freqs]
                      if model.tag_freqs is not None else None),
        "epoch": state.epoch,
        "best_dev_ppl": state.best_dev_ppl,
        "best_epoch": state.best_epoch,
        "rng_state": _rng_state_to_json(state.rng),
        "adam": {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
                 "eps": opt.eps, "step_count": opt.step_count},
    }
    arrays = []
    for name, p in model.params.items():
        arrays.append((name, p.data))
    for name in model.params:
        arrays.append((f"adam_m.{name}", opt.m[name]))
        arrays.append((f"adam_v.{name}", opt.v[name]))
    write_container(path, MAGIC, header, arrays)


def load_checkpoint(path: str) -> TrainState:
    header, arrays = read_container(path, MAGIC)
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}, "
                              f"expected {FORMAT_VERSION}")
    config = TrainConfig.from_dict(header["config"])
    voc = header["vocab"]
    vocab = Vocabulary(voc["words"], voc["freqs"], voc["stop_flags"])

    params: "OrderedDict[str, Tensor]" = OrderedDict()
    for rec in header["arrays"]:
        name = rec["name"]
        if name.startswith("adam_m.") or name.startswith("adam_v."):
            continue
        if name not in arrays:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        params[name] = Tensor(arrays[name], requires_grad=True, name=name)

    model = TdlmModel(
        config=config, vocab=vocab, params=params,
        label_names=header.get("label_names"),
        tag_names=header.get("tag_names"),
        tag_freqs=(np.asarray(header["tag_freqs"], dtype=np.int64)
                   if header.get("tag_freqs") else None),
    )

    adam_hdr = header["adam"]
    opt = AdamState(params, lr=adam_hdr["lr"], beta1=adam_hdr["beta1"],
                    beta2=adam_hdr["beta2"], eps=adam_hdr["eps"])
    opt.step_count = int(adam_hdr["step_count"])
    for name, p in params.items():
        m = arrays.get(f"adam_m.{name}")
        v = arrays.get(f"adam_v.{name}")
        if m is None or v is None:
            raise CheckpointError(f"{path}: missing optimizer moments for {name!r}")
        if m.shape != p.data.shape or v.shape != p.data.shape:
            raise CheckpointError(f"{path}: moment shape mismatch for {name!r}")
        opt.m[name] = m.copy()
        opt.v[name] = v.copy()

    rng = _rng_from_json(header["rng_state"])
    return TrainState(model=model, optimizer=opt, rng=rng,
                      epoch=int(header["epoch"]),
                      best_dev_ppl=header.get("best_dev_ppl"),
                      best_epoch=header.get("best_epoch"))
