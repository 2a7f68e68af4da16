import zlib

import numpy as np


class Rng:
    """
    Splittable counter-based random source.

    One seed fans out into independent named streams ('init', 'batches:0',
    'toy:train', ...). Each stream is a Philox generator keyed by the seed and
    a hash of the stream name, so the numbers drawn from one stream never
    depend on how much another stream was used.
    """

    BIT_GENERATOR = 'Philox'

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams = []

    def generator(self, stream: str) -> np.random.Generator:
        key = zlib.crc32(stream.encode('utf-8'))
        sequence = np.random.SeedSequence(self.seed, spawn_key=(key,))
        if stream not in self._streams:
            self._streams.append(stream)
        return np.random.Generator(np.random.Philox(sequence))

    def state(self) -> dict:
        """Everything needed to recreate the streams handed out so far"""
        return {
            'bit_generator': self.BIT_GENERATOR,
            'seed': self.seed,
            'streams': list(self._streams),
        }

    @classmethod
    def from_state(cls, state: dict) -> 'Rng':
        rng = cls(state['seed'])
        rng._streams = list(state.get('streams', []))
        return rng
