"""Byte-level corpus handling and window batching"""

import math
import os
from typing import Iterator, Tuple, Union

import numpy as np

from autodiff.rng import Rng
from errors import DataError

VOCAB_SIZE = 256


def tokenize_bytes(text: Union[bytes, str]) -> np.ndarray:
    if isinstance(text, str):
        text = text.encode('utf-8')
    if not text:
        raise DataError("cannot tokenize an empty input")
    return np.frombuffer(bytes(text), dtype=np.uint8).astype(np.int64)


def detokenize(ids) -> bytes:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= VOCAB_SIZE):
        raise IndexError("byte ids must lie in [0, 256)")
    return ids.astype(np.uint8).tobytes()


def load_corpus(path: str) -> np.ndarray:
    if not path:
        raise DataError("no data_path configured")
    if not os.path.isfile(path):
        raise DataError(f"corpus not found: {path}")
    with open(path, 'rb') as f:
        return tokenize_bytes(f.read())


class TrainBatches:
    """Endless stream of training batches, reshuffled every epoch"""

    def __init__(self, windows: np.ndarray, batch_size: int, seed: int):
        self.windows = windows
        self.batch_size = batch_size
        self.rng = Rng(seed)
        self.epoch = 0

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        epoch = 0
        while True:
            self.epoch = epoch
            order = self.rng.generator(f'batches:{epoch}').permutation(len(self.windows))
            for start in range(0, len(order) - self.batch_size + 1, self.batch_size):
                batch = self.windows[order[start:start + self.batch_size]]
                yield batch[:, :-1], batch[:, 1:]
            epoch += 1


class ValBatches:
    """Validation windows in corpus order; iterable any number of times"""

    def __init__(self, windows: np.ndarray, batch_size: int):
        self.windows = windows
        self.batch_size = batch_size

    def __len__(self) -> int:
        return math.ceil(len(self.windows) / self.batch_size)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for start in range(0, len(self.windows), self.batch_size):
            batch = self.windows[start:start + self.batch_size]
            yield batch[:, :-1], batch[:, 1:]

    def regroup(self, batch_size: int) -> 'ValBatches':
        return ValBatches(self.windows, batch_size)

    @property
    def n_tokens(self) -> int:
        return int(self.windows.shape[0] * (self.windows.shape[1] - 1))


def _split_point(n_ids: int, split_fraction: float) -> int:
    return n_ids - int(n_ids * split_fraction)


def _counts(n_ids: int, window: int, split_fraction: float) -> Tuple[int, int]:
    split = _split_point(n_ids, split_fraction)
    return split // window, (n_ids - split) // window


def minimum_corpus_size(seq_len: int, batch_size: int, split_fraction: float) -> int:
    """Fewest ids giving one full training batch and one validation window"""
    window = seq_len + 1
    n_ids = max(math.ceil(batch_size * window / (1.0 - split_fraction)),
                math.ceil(window / split_fraction))
    while True:
        n_train, n_val = _counts(n_ids, window, split_fraction)
        if n_train >= batch_size and n_val >= 1:
            return n_ids
        n_ids += 1


def make_batches(ids, seq_len: int, batch_size: int, split_fraction: float,
                 seed: int) -> Tuple[TrainBatches, ValBatches]:
    """
    Cut the corpus into non-overlapping windows of seq_len + 1 ids

    Args:
        ids: Token ids of the whole corpus
        seq_len: Model input length; each window also carries the next-token target
        batch_size: Windows per batch
        split_fraction: Trailing share of the corpus kept for validation
        seed: Shuffle seed for the training order

    Returns:
        (train batches, validation batches)
    """
    ids = np.asarray(ids, dtype=np.int64)
    window = seq_len + 1
    n_train, n_val = _counts(len(ids), window, split_fraction)
    if n_train < batch_size or n_val < 1:
        required = minimum_corpus_size(seq_len, batch_size, split_fraction)
        raise DataError(
            f"corpus of {len(ids)} ids is too small: seq_len={seq_len}, batch_size={batch_size}, "
            f"split_fraction={split_fraction} need at least {required} ids")

    split = _split_point(len(ids), split_fraction)
    train_windows = ids[:n_train * window].reshape(n_train, window)
    val_windows = ids[split:split + n_val * window].reshape(n_val, window)
    return TrainBatches(train_windows, batch_size, seed), ValBatches(val_windows, batch_size)
