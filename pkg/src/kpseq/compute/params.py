"""Named parameter storage."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np


class ParameterStore:
    """Ordered name -> float64 array map with fixed shapes."""

    def __init__(self, arrays: dict[str, np.ndarray] | None = None):
        self._arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, arr in (arrays or {}).items():
            self.add(name, arr)

    def add(self, name: str, arr) -> None:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter name {name!r}")
        a = np.array(arr, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        self._arrays[name] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, arr) -> None:
        if name not in self._arrays:
            raise KeyError(name)
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != self._arrays[name].shape:
            raise ValueError(f"shape mismatch for {name!r}: {a.shape} vs {self._arrays[name].shape}")
        self._arrays[name] = a.copy()

    def __contains__(self, name) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    def num_params(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def copy(self) -> "ParameterStore":
        return ParameterStore({k: v for k, v in self._arrays.items()})

    def equal(self, other: "ParameterStore") -> bool:
        """Bitwise equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[k], other[k]) for k in self)
