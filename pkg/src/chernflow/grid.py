"""Derivation backends: how the frame fields ``e_k`` act on scalar data.

Fields are arrays whose leading axes are the backend's spatial ``shape``
(empty for left-invariant data); any trailing axes are carried along.
Frame directions are numbered ``0..n-1`` for ``e_1..e_n`` and ``n..2n-1``
for ``ebar_1..ebar_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fiber import ComplexFrame, build_complex_frame, standard_J


class ConstantBackend:
    """Left-invariant data: every frame derivative vanishes identically."""

    shape: tuple = ()

    def __init__(self, n: int):
        self.n = n

    def pad(self, field):
        return field

    def d(self, field, direction: int, padded=None):
        return np.zeros_like(np.asarray(field, dtype=complex))

    def dd(self, field, i: int, j: int, padded=None):
        """``e_i ebar_j`` applied to ``field``."""
        return np.zeros_like(np.asarray(field, dtype=complex))


class JetBackend:
    """Derivatives of a single function at one point, read from its 2-jet.

    ``grad[a] = v_a(F)`` and ``hess[a, b] = v_a(v_b(F))`` along the real
    basis; frame fields are constant combinations of the ``v_a``.  The field
    argument is ignored: the jet is the field.
    """

    shape: tuple = ()

    def __init__(self, frame: ComplexFrame, grad, hess):
        self.n = frame.n
        self._B = frame.basis
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    def pad(self, field):
        return field

    def d(self, field, direction: int, padded=None):
        return self._B[:, direction] @ self.grad

    def dd(self, field, i: int, j: int, padded=None):
        return self._B[:, i] @ self.hess @ self._B[:, self.n + j]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the flat torus ``R^{2n} / Z^{2n}``.

    Real coordinates are ordered ``(x_1, y_1, ..., x_n, y_n)`` with
    ``z_j = x_j + i y_j``.
    """

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.N < 8:
            raise ValueError(f"need at least 8 points per axis, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dim

    def coords(self):
        """Coordinate arrays ``x_1, y_1, ...`` each of grid shape."""
        x = np.arange(self.N) * self.h
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def frame(self) -> ComplexFrame:
        """``e_j = d/dz_j = (d/dx_j - i d/dy_j) / 2``."""
        return build_complex_frame(standard_J(self.dim))

    def mean(self, field):
        axes = tuple(range(self.dim))
        return np.mean(field, axis=axes)


class GridBackend:
    """Second-order periodic central differences for the coordinate frame."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.n = grid.n
        self.shape = grid.shape

    # real partials ------------------------------------------------------
    def pad(self, field):
        """Field with one periodic ghost layer on every spatial axis."""
        field = np.asarray(field)
        width = [(1, 1)] * len(self.shape) + [(0, 0)] * (field.ndim - len(self.shape))
        return np.pad(field, width, mode="wrap")

    def _view(self, padded, offsets):
        N = self.grid.N
        idx = [slice(1, 1 + N)] * len(self.shape)
        for axis, off in offsets.items():
            idx[axis] = slice(1 + off, 1 + off + N)
        return padded[tuple(idx)]

    def partial(self, field, axis: int, padded=None):
        P = self.pad(field) if padded is None else padded
        return (self._view(P, {axis: 1}) - self._view(P, {axis: -1})) / (2 * self.grid.h)

    def partial2(self, field, a: int, b: int, padded=None):
        """Compact second difference for ``a == b``, composed central differences otherwise."""
        h = self.grid.h
        P = self.pad(field) if padded is None else padded
        if a == b:
            return (self._view(P, {a: 1}) - 2 * self._view(P, {}) + self._view(P, {a: -1})) / h**2
        v = self._view
        return (v(P, {a: 1, b: 1}) - v(P, {a: 1, b: -1}) - v(P, {a: -1, b: 1}) + v(P, {a: -1, b: -1})) / (4 * h**2)

    # frame derivatives --------------------------------------------------
    def d(self, field, direction: int, padded=None):
        n = self.n
        j, sign = (direction, -1j) if direction < n else (direction - n, 1j)
        P = self.pad(field) if padded is None else padded
        return 0.5 * (self.partial(field, 2 * j, P) + sign * self.partial(field, 2 * j + 1, P))

    def dd(self, field, i: int, j: int, padded=None):
        """``e_i ebar_j field = ((d_xi d_xj + d_yi d_yj) + i (d_xi d_yj - d_yi d_xj)) / 4``."""
        xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        P = self.pad(field) if padded is None else padded
        real = self.partial2(field, xi, xj, P) + self.partial2(field, yi, yj, P)
        if i == j:
            return 0.25 * real
        imag = self.partial2(field, xi, yj, P) - self.partial2(field, yi, xj, P)
        return 0.25 * (real + 1j * imag)
