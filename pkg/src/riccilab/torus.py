"""Periodic finite-difference chart on the flat 3-torus [0, L)^3.

Tensor fields are numpy arrays with component axes first and the three grid
axes last: scalars (N,N,N), covectors (3,N,N,N), 2-tensors (3,3,N,N,N).
Stencils are 4th-order central differences with periodic wrap.
"""
from __future__ import annotations

import numpy as np

from .analytic import TrigTensor2
from .summation import pairwise_sum


class GridChart:
    """Uniform periodic grid: N points per axis, period L, spacing h = L/N."""

    def __init__(self, N: int, L: float = 2 * np.pi):
        if N < 8 or N % 2:
            raise ValueError("N must be even and at least 8")
        self.N = int(N)
        self.L = float(L)
        self.h = self.L / self.N
        ax = np.arange(self.N) * self.h
        self.axes = ax
        self.X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=0)

    # -- stencils ----------------------------------------------------------
    def d1(self, f: np.ndarray, axis: int) -> np.ndarray:
        """4th-order first derivative along grid axis in {0,1,2}."""
        a = axis - 3
        r = np.roll
        return (8.0 * (r(f, -1, a) - r(f, 1, a)) - (r(f, -2, a) - r(f, 2, a))) / (12.0 * self.h)

    def d2(self, f: np.ndarray, axis: int) -> np.ndarray:
        """4th-order second derivative along grid axis in {0,1,2}."""
        a = axis - 3
        r = np.roll
        return (-(r(f, -2, a) + r(f, 2, a)) + 16.0 * (r(f, -1, a) + r(f, 1, a))
                - 30.0 * f) / (12.0 * self.h ** 2)

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Stack of d1 along all three axes (new leading axis)."""
        return np.stack([self.d1(f, c) for c in range(3)], axis=0)

    def d1_symbol(self, k: float) -> float:
        """Fourier symbol of d1 acting on exp(i k x): returns s with d1 -> i*s."""
        kh = k * self.h
        return (8.0 * np.sin(kh) - np.sin(2.0 * kh)) / (6.0 * self.h)

    def d2_symbol(self, k: float) -> float:
        """Fourier symbol of d2 acting on exp(i k x) (negative for k != 0)."""
        kh = k * self.h
        return (-2.0 * np.cos(2.0 * kh) + 32.0 * np.cos(kh) - 30.0) / (12.0 * self.h ** 2)

    # -- quadrature ---------------------------------------------------------
    def quadrature(self, f: np.ndarray, sqrt_det_g: np.ndarray | None = None) -> float:
        """integral of f dmu_g = sum f sqrt(det g) h^3, fixed-tree reduction."""
        w = f if sqrt_det_g is None else f * sqrt_det_g
        return pairwise_sum(w) * self.h ** 3

    def sample_metric(self, field: TrigTensor2) -> np.ndarray:
        """Sample an analytic metric onto the grid: (3,3,N,N,N)."""
        pts = self.X.reshape(3, -1).T
        g = field.d(pts, 0)
        return g.T.reshape(3, 3, self.N, self.N, self.N).transpose(1, 0, 2, 3, 4)

    def wrap_delta(self, y) -> np.ndarray:
        """Minimal periodic displacement field x - y: (3,N,N,N) in (-L/2, L/2]."""
        y = np.asarray(y, dtype=float).reshape(3, 1, 1, 1)
        d = self.X - y
        return (d + self.L / 2.0) % self.L - self.L / 2.0


def periodized_gaussian(chart: GridChart, y, sigma: float, shells: int = 2) -> np.ndarray:
    """Lattice-periodized Gaussian of width sigma centred at y (flat distance).

    Normalization (2 pi sigma^2)^{-3/2}; lattice images truncated at the given
    number of shells per axis (error < exp(-(shells*L - L/2)^2 / (2 sigma^2))).
    """
    d = chart.wrap_delta(y)
    out = np.zeros((chart.N,) * 3)
    rng = range(-shells, shells + 1)
    for k1 in rng:
        for k2 in rng:
            for k3 in rng:
                shift = np.array([k1, k2, k3], dtype=float).reshape(3, 1, 1, 1) * chart.L
                r2 = ((d + shift) ** 2).sum(axis=0)
                out += np.exp(-r2 / (2.0 * sigma ** 2))
    return out / (2.0 * np.pi * sigma ** 2) ** 1.5


def mollified_delta(chart: GridChart, sqrt_det_g: np.ndarray, y, sigma: float,
                    pair: tuple[int, int]) -> np.ndarray:
    """Mollified Dirac bitensor column: e_sigma(x,y) * symmetrized basis at (i',k').

    Parallel transport is the identity on the flat chart; the scalar profile is
    normalized so its mass against dmu_g is exactly 1.  Requires sigma >= 2h.
    """
    if sigma < 2.0 * chart.h:
        raise ValueError(f"mollification width {sigma} under-resolved (need >= 2h = {2*chart.h})")
    prof = periodized_gaussian(chart, y, sigma)
    prof = prof / chart.quadrature(prof, sqrt_det_g)
    i, k = pair
    basis = np.zeros((3, 3))
    basis[i, k] += 0.5
    basis[k, i] += 0.5
    return basis.reshape(3, 3, 1, 1, 1) * prof


def theta_heat_profile(chart: GridChart, y, variance: float, shells: int = 3) -> np.ndarray:
    """Flat-torus heat profile with per-axis variance: product of 1-D theta sums.

    Equals the periodized Gaussian of width sqrt(variance); used as the kernel
    oracle with variance = sigma^2 + 2 eta.
    """
    d = chart.wrap_delta(y)
    out = np.ones((chart.N,) * 3)
    pref = 1.0 / np.sqrt(2.0 * np.pi * variance)
    for c in range(3):
        acc = np.zeros_like(d[c])
        for k in range(-shells, shells + 1):
            acc += np.exp(-((d[c] + k * chart.L) ** 2) / (2.0 * variance))
        out *= pref * acc
    return out


def band_limited_field(chart: GridChart, seed: int, kmax: int = 2, amplitude: float = 1.0,
                       shape: tuple = ()) -> np.ndarray:
    """Seeded smooth random field: sum of harmonics with |k|_inf <= kmax.

    Used for reproducible random test inputs; the same seed gives the same
    field at every resolution (modes are sampled in a fixed order).
    """
    rng = np.random.default_rng(seed)
    x = chart.X * (2 * np.pi / chart.L)
    out = np.zeros(shape + (chart.N,) * 3)
    flat = out.reshape(-1, *out.shape[-3:])
    for idx in range(flat.shape[0]):
        for k1 in range(-kmax, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                for k3 in range(-kmax, kmax + 1):
                    if k1 == k2 == k3 == 0:
                        continue
                    c, s, ph = rng.uniform(-1, 1), rng.uniform(0, 1), rng.uniform(0, 2 * np.pi)
                    flat[idx] += c * np.cos(k1 * x[0] + k2 * x[1] + k3 * x[2] + ph)
    k = 2 * kmax + 1
    return amplitude * out / (k ** 1.5)


def band_limited_sym2(chart: GridChart, seed: int, kmax: int = 2, amplitude: float = 1.0) -> np.ndarray:
    """Seeded random symmetric 2-tensor field (3,3,N,N,N)."""
    raw = band_limited_field(chart, seed, kmax, amplitude, shape=(3, 3))
    return 0.5 * (raw + raw.transpose(1, 0, 2, 3, 4))
