"""Tensor-product Chebyshev caches on a cube around the parametrix base point.

Smooth fields produced by ray integration are fitted once on a
Chebyshev-Lobatto grid; values, gradients, and Hessians anywhere in the cube
then come from differentiating the series (spectral accuracy), which keeps
the parametrix chain self-consistent.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as C


def lobatto_nodes(n: int, half: float) -> np.ndarray:
    return half * np.cos(np.pi * np.arange(n) / (n - 1))[::-1]


class ChebCube:
    """Fit/evaluate scalar or small-tensor fields on [center +- half]^3."""

    def __init__(self, center, half: float, n: int = 17):
        self.center = np.asarray(center, float)
        self.half = float(half)
        self.n = int(n)
        self.nodes1 = lobatto_nodes(self.n, self.half)
        V = C.chebvander(self.nodes1 / self.half, self.n - 1)
        self.Minv = np.linalg.inv(V)
        g = np.stack(np.meshgrid(self.nodes1, self.nodes1, self.nodes1,
                                 indexing="ij"), axis=-1)
        self.node_points = self.center + g.reshape(-1, 3)

    def fit(self, values: np.ndarray) -> np.ndarray:
        """values: (n^3, *comp) in node order -> coefficients (n,n,n,*comp)."""
        comp = values.shape[1:]
        v = values.reshape(self.n, self.n, self.n, -1)
        c = np.einsum('ai,bj,ck,ijkm->abcm', self.Minv, self.Minv, self.Minv, v)
        return c.reshape((self.n,) * 3 + comp)

    def _scaled(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        return (x - self.center) / self.half

    def eval(self, coeffs: np.ndarray, x) -> np.ndarray:
        u = self._scaled(x)
        comp = coeffs.shape[3:]
        c = coeffs.reshape((self.n,) * 3 + (-1,))
        outs = []
        for m in range(c.shape[-1]):
            outs.append(C.chebval3d(u[:, 0], u[:, 1], u[:, 2], c[..., m]))
        out = np.stack(outs, axis=-1)
        return out.reshape(u.shape[0], *comp)

    def grad_coeffs(self, coeffs: np.ndarray) -> list:
        """Series of the three partial derivatives (chain rule for the scaling)."""
        comp = coeffs.shape[3:]
        c = coeffs.reshape((self.n,) * 3 + (-1,))
        out = []
        for axis in range(3):
            d = C.chebder(c, m=1, axis=axis) / self.half
            pad = [(0, 0)] * d.ndim
            pad[axis] = (0, 1)
            out.append(np.pad(d, pad).reshape((self.n,) * 3 + comp))
        return out


class CachedField:
    """A fitted field with value/gradient/Hessian evaluators."""

    def __init__(self, cube: ChebCube, values: np.ndarray):
        self.cube = cube
        self.c0 = cube.fit(values)
        self.c1 = cube.grad_coeffs(self.c0)
        self.c2 = [[cube.grad_coeffs(self.c1[i])[j] for j in range(3)] for i in range(3)]

    def val(self, x):
        return self.cube.eval(self.c0, x)

    def grad(self, x):
        """(batch, 3, *comp)."""
        return np.stack([self.cube.eval(c, x) for c in self.c1], axis=1)

    def hess(self, x):
        """(batch, 3, 3, *comp), symmetrized."""
        h = np.stack([np.stack([self.cube.eval(self.c2[i][j], x) for j in range(3)], axis=1)
                      for i in range(3)], axis=1)
        return 0.5 * (h + np.swapaxes(h, 1, 2))
