"""Shared helpers for small dense parameter sets."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    return ad.add_bias(ad.matmul(x, w), b)


class ParamSet:
    """Ordered name -> Tensor mapping with copy/restore helpers."""

    def __init__(self, tensors: dict[str, np.ndarray], prefix: str):
        self.prefix = prefix
        self.tensors = {
            name: ad.Tensor(v, requires_grad=True, name=f"{prefix}.{name}") for name, v in tensors.items()
        }

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.tensors[name]

    def parameters(self) -> list[ad.Tensor]:
        return list(self.tensors.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.value.copy() for n, t in self.tensors.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for n, v in snap.items():
            self.tensors[n].value = v.copy()

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.{n}": t.value for n, t in self.tensors.items()}
