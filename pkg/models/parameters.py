"""
Named parameter store split into encoder, decoder and frozen knowledge groups.
"""

from enum import Enum
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy import stats

from core.exceptions import ContractError
from engine.tensor import Tensor


class ParamGroup(str, Enum):
    ENCODER = "encoder"  # protein encoder
    DECODER = "decoder"  # PiK decoder and heads
    KNOWLEDGE = "knowledge"  # frozen language encoder


class Parameters:
    """Ordered name -> Tensor map; knowledge tensors never require grad"""

    def __init__(self) -> None:
        self._tensors: Dict[str, Tensor] = {}
        self._groups: Dict[str, ParamGroup] = {}

    def add(self, name: str, data: np.ndarray, group: ParamGroup) -> Tensor:
        if name in self._tensors:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor = Tensor(
            np.asarray(data, dtype=np.float32),
            requires_grad=group is not ParamGroup.KNOWLEDGE,
            name=name,
        )
        self._tensors[name] = tensor
        self._groups[name] = ParamGroup(group)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def group_of(self, name: str) -> ParamGroup:
        return self._groups[name]

    def names(self, group: ParamGroup | None = None) -> List[str]:
        return [n for n in self._tensors if group is None or self._groups[n] is group]

    def learnable(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self._tensors.items() if t.requires_grad}

    def frozen(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self._tensors.items() if not t.requires_grad}

    def num_parameters(self, learnable_only: bool = False) -> int:
        return sum(
            t.size for t in self._tensors.values() if t.requires_grad or not learnable_only
        )

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        """Gradient per tensor; zeros where none was populated"""
        return {
            n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in self._tensors.items()
        }

    def arrays(self) -> Dict[str, np.ndarray]:
        return {n: t.data for n, t in self._tensors.items()}

    def copy(self) -> "Parameters":
        clone = Parameters()
        for name, t in self._tensors.items():
            clone.add(name, t.data.copy(), self._groups[name])
        return clone


class ParameterInitializer:
    """Truncated-normal weights (std 0.02, cut at 2 std), unit gains, zero biases"""

    def __init__(self, params: Parameters, rng: np.random.Generator, std: float = 0.02):
        self.params = params
        self.rng = rng
        self.std = std

    def normal(self, name: str, shape: Tuple[int, ...], group: ParamGroup) -> Tensor:
        data = stats.truncnorm.rvs(-2.0, 2.0, scale=self.std, size=shape, random_state=self.rng)
        return self.params.add(name, data, group)

    def zeros(self, name: str, shape: Tuple[int, ...], group: ParamGroup) -> Tensor:
        return self.params.add(name, np.zeros(shape), group)

    def ones(self, name: str, shape: Tuple[int, ...], group: ParamGroup) -> Tensor:
        return self.params.add(name, np.ones(shape), group)
