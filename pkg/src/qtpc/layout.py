"""Named tensor-factor layouts.

A layout is an ordered list of registers; the register order is the tensor
order and amplitudes are flattened row-major (first register most significant).
"""

from dataclasses import dataclass
from math import prod
from typing import Iterable, Optional, Sequence

import numpy as np

OWNERS = ("dice", "alice", "bob")


@dataclass(frozen=True)
class Register:
    name: str
    dim: int
    owner: Optional[str] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"register {self.name!r} has dim {self.dim} < 1")
        if self.owner is not None and self.owner not in OWNERS:
            raise ValueError(f"register {self.name!r}: unknown owner {self.owner!r}")


@dataclass(frozen=True)
class TensorLayout:
    registers: tuple

    def __post_init__(self):
        regs = tuple(r if isinstance(r, Register) else Register(*r) for r in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [r.name for r in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        if not regs:
            raise ValueError("layout needs at least one register")

    @classmethod
    def of(cls, *specs) -> "TensorLayout":
        """Build from ``(name, dim)`` or ``(name, dim, owner)`` tuples."""
        return cls(tuple(Register(*s) for s in specs))

    @classmethod
    def qubits(cls, count: int) -> "TensorLayout":
        return cls(tuple(Register(f"q{k}", 2) for k in range(count)))

    @property
    def names(self) -> tuple:
        return tuple(r.name for r in self.registers)

    @property
    def dims(self) -> tuple:
        return tuple(r.dim for r in self.registers)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    def __len__(self):
        return len(self.registers)

    def __contains__(self, name):
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown register {name!r}") from None

    def register(self, name: str) -> Register:
        return self.registers[self.index(name)]

    def dim_of(self, names: Iterable[str]) -> int:
        return prod(self.register(n).dim for n in names)

    def owned_by(self, *owners: str) -> tuple:
        return tuple(r.name for r in self.registers if r.owner in owners)

    def sub(self, names: Iterable[str]) -> "TensorLayout":
        """Sub-layout of ``names``, kept in this layout's order."""
        wanted = set(names)
        for n in wanted:
            self.index(n)
        return TensorLayout(tuple(r for r in self.registers if r.name in wanted))

    def extend(self, *registers: Register, front: Sequence[Register] = ()) -> "TensorLayout":
        return TensorLayout(tuple(front) + self.registers + tuple(registers))

    def basis_index(self, values: dict) -> int:
        """Flat index of the product basis state; unspecified registers are 0."""
        for n in values:
            self.index(n)
        digits = []
        for r in self.registers:
            v = int(values.get(r.name, 0))
            if not 0 <= v < r.dim:
                raise IndexError(f"value {v} out of range for register {r.name!r} (dim {r.dim})")
            digits.append(v)
        return int(np.ravel_multi_index(digits, self.dims))

    def basis_values(self, index: int) -> dict:
        return dict(zip(self.names, (int(x) for x in np.unravel_index(index, self.dims))))

    def _split_axes(self, left: Iterable[str]):
        left = set(left)
        for n in left:
            self.index(n)
        lax = [k for k, n in enumerate(self.names) if n in left]
        rax = [k for k, n in enumerate(self.names) if n not in left]
        return lax, rax

    def split(self, vec: np.ndarray, left: Iterable[str]) -> np.ndarray:
        """Reshape a flat vector into a (left registers) x (remaining registers) matrix.

        Both factors keep the layout order of their registers.
        """
        vec = np.asarray(vec)
        if vec.shape != (self.total_dim,):
            raise ValueError(f"vector of shape {vec.shape} does not match layout dim {self.total_dim}")
        lax, rax = self._split_axes(left)
        dl = prod(self.dims[k] for k in lax)
        t = vec.reshape(self.dims).transpose(lax + rax)
        return t.reshape(dl, -1)

    def merge(self, mat: np.ndarray, left: Iterable[str]) -> np.ndarray:
        """Inverse of :meth:`split`."""
        lax, rax = self._split_axes(left)
        order = lax + rax
        t = np.asarray(mat).reshape([self.dims[k] for k in order])
        return t.transpose(np.argsort(order)).reshape(-1)

    def permute_to(self, vec: np.ndarray, names: Sequence[str]) -> np.ndarray:
        """Reorder a flat vector so that its registers follow ``names``."""
        if sorted(names) != sorted(self.names):
            raise ValueError("names must be a permutation of the layout")
        axes = [self.index(n) for n in names]
        return np.asarray(vec).reshape(self.dims).transpose(axes).reshape(-1)
