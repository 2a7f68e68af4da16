import hashlib
from typing import Dict, Iterator, List, Tuple

import numpy as np

from autodiff.tensor import Parameter


class Module:
    """Container that discovers its parameters from its attributes"""

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self, prefix: str):
        for attr, value in vars(self).items():
            if attr.startswith('_'):
                continue
            path = f'{prefix}{attr}'
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + '.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f'{path}.{i}.')

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def assign_names(self, prefix: str = ''):
        """Stamp every parameter with its dotted path"""
        for name, p in self.named_parameters(prefix):
            p.name = name

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(int(p.size) for p in self.parameters())

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, p in self.named_parameters():
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()
