"""Conjugate heat-kernel columns, their oracles, and the integral representations.

A kernel column is the conjugate-flow evolution of a mollified Dirac bitensor
slice: fixed source point y, fixed primed pair (i',k'), field K^{ab}(x; eta).
Six columns (i' <= k') span the kernel slot.  Ground truths: the flat-torus
theta sum (width^2 = sigma^2 + 2 eta) and the S^3 spectral sum (eigenvalues
k(k+2), multiplicities (k+1)^2, zonal weights).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conservation import DriftReport
from .flows import (BackwardView, integrate_conjugate_H, integrate_conjugate_H_multi,
                    integrate_ricci)
from .milnor import VOL_UNIT_SPHERE
from .torus import GridChart, mollified_delta, theta_heat_profile

PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass
class KernelColumn:
    y: np.ndarray
    pair: tuple
    sigma: float
    etas: np.ndarray
    track: list

    def at(self, k: int) -> np.ndarray:
        return self.track[k]


def evolve_kernel_column(back: BackwardView, y, pair, sigma: float) -> KernelColumn:
    """Integrate the conjugate flow from the mollified delta column."""
    chart = back.traj.chart
    geo0 = back.geometry(0)
    K0 = mollified_delta(chart, geo0.sqrtg, y, sigma, pair)
    track = integrate_conjugate_H(back, K0)
    return KernelColumn(np.asarray(y, float), tuple(pair), float(sigma),
                        np.asarray(back.etas), track)


def evolve_all_columns(back: BackwardView, y, sigma: float) -> dict:
    """All six independent columns, integrated jointly over shared geometries."""
    chart = back.traj.chart
    geo0 = back.geometry(0)
    inits = [mollified_delta(chart, geo0.sqrtg, y, sigma, pair) for pair in PAIRS]
    tracks = integrate_conjugate_H_multi(back, inits)
    return {pair: KernelColumn(np.asarray(y, float), tuple(pair), float(sigma),
                               np.asarray(back.etas), tracks[i])
            for i, pair in enumerate(PAIRS)}


def flat_column_oracle(chart: GridChart, y, pair, sigma: float, eta: float) -> np.ndarray:
    """Flat-torus column: theta-periodized Gaussian with width^2 = sigma^2 + 2 eta."""
    prof = theta_heat_profile(chart, y, sigma ** 2 + 2.0 * eta)
    i, k = pair
    basis = np.zeros((3, 3))
    basis[i, k] += 0.5
    basis[k, i] += 0.5
    return basis.reshape(3, 3, 1, 1, 1) * prof


def representation_series(back: BackwardView, column: KernelColumn, kind: str,
                          tolerance=None) -> DriftReport:
    """Series eta -> integral K^{ab}(eta) b_ab(eta) dmu for b = Ric or g - 2 eta Ric."""
    vals = []
    for k, eta in enumerate(back.etas):
        geo = back.geometry(k)
        b = geo.Ric if kind == "ricci" else geo.g - 2.0 * eta * geo.Ric
        vals.append(geo.pairing(column.track[k], b))
    name = f"representation[{kind}]{column.pair}"
    return DriftReport(name, np.asarray(back.etas), np.asarray(vals), tolerance)


def ricci_representation_check(back: BackwardView, columns: dict, tolerance=1e-6) -> dict:
    """Drift of int K.Ric dmu per column plus endpoint recovery of Ric(y, eta=0)."""
    geo0 = back.geometry(0)
    y = next(iter(columns.values())).y
    idx = tuple(np.round(y / back.traj.chart.h).astype(int) % back.traj.chart.N)
    ric_y = geo0.Ric[(slice(None), slice(None)) + idx]
    reports, endpoint_err = {}, np.zeros((3, 3))
    scale = max(np.max(np.abs(ric_y)), 1e-300)
    for pair, col in columns.items():
        rep = representation_series(back, col, "ricci", tolerance)
        reports[pair] = rep
        err = abs(rep.values[-1] - ric_y[pair])
        endpoint_err[pair] = endpoint_err[pair[::-1]] = err
    return {"reports": reports, "endpoint_error": float(np.max(endpoint_err)),
            "endpoint_error_rel": float(np.max(endpoint_err)) / scale,
            "reference": ric_y}


def metric_representation_check(back: BackwardView, columns: dict, tolerance=1e-6) -> dict:
    """Drift of int K.(g - 2 eta Ric) dmu plus endpoint recovery of g(y, eta=0)."""
    geo0 = back.geometry(0)
    y = next(iter(columns.values())).y
    idx = tuple(np.round(y / back.traj.chart.h).astype(int) % back.traj.chart.N)
    g_y = geo0.g[(slice(None), slice(None)) + idx]
    reports, endpoint_err = {}, np.zeros((3, 3))
    for pair, col in columns.items():
        rep = representation_series(back, col, "metric_shifted", tolerance)
        reports[pair] = rep
        err = abs(rep.values[-1] - g_y[pair])
        endpoint_err[pair] = endpoint_err[pair[::-1]] = err
    return {"reports": reports, "endpoint_error": float(np.max(endpoint_err)),
            "endpoint_error_rel": float(np.max(endpoint_err)) / np.max(np.abs(g_y)),
            "reference": g_y}


def assemble_quadratic_form(columns: dict, v: np.ndarray, k: int) -> np.ndarray:
    """M^{ab}(x) = sum_{i'k'} v_{i'} v_{k'} K^{ab}_{i'k'}(x) at time index k."""
    out = None
    for (i, j), col in columns.items():
        w = v[i] * v[j] * (2.0 if i != j else 1.0)
        out = w * col.track[k] if out is None else out + w * col.track[k]
    return out


def positivity_check(columns: dict, n_vectors: int = 100, seed: int = 2024,
                     sample_every: int = 1) -> dict:
    """Positivity of the kernel quadratic form on seeded random vectors.

    For each v the 3x3 matrix field M^{ab} = K^{ab}_{i'k'} v_{i'} v_{k'} must be
    positive semidefinite (up to roundoff) at every grid point and sample time.
    """
    rng = np.random.default_rng(seed)
    n_times = len(next(iter(columns.values())).track)
    worst = np.inf
    peak = 0.0
    for _ in range(n_vectors):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        for k in range(0, n_times, sample_every):
            M = assemble_quadratic_form(columns, v, k)
            m = np.moveaxis(np.moveaxis(M, 0, -1), 0, -1)
            ev = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2)))
            worst = min(worst, float(ev[..., 0].min()))
            peak = max(peak, float(np.abs(ev).max()))
    return {"min_eigenvalue": worst, "peak": peak, "rel_min": worst / max(peak, 1e-300)}


# ---------------------------------------------------------------------------
# sphere normalization (homogeneous reduction)
# ---------------------------------------------------------------------------

def sphere_normalization_check(T0: float = 0.25, beta_star: float = 0.1,
                               dt: float = 1e-4) -> dict:
    """Expanding-soliton kernel normalization on the round sphere.

    Along g(beta) = 4 (T0 - beta) g_unit the traced kernel reduces to an
    isotropic conjugate-flow solution; normalizing its delta-limit mass
    (trace of the identity bitensor = 3) the scaled integral
    (r(eta)^3 / 3) int gbar K gbar dmubar must equal 1 at every eta.
    """
    A0 = 4.0 * T0
    traj = integrate_ricci("milnor", [A0, A0, A0], beta_star, dt)
    back = traj.backward()
    r0_sq = float(np.diag(traj.metric(len(traj.times) - 1))[0])      # r^2(eta=0)
    w0 = 1.0 / (r0_sq ** 1.5 * VOL_UNIT_SPHERE)
    track = integrate_conjugate_H(back, w0 * np.eye(3))
    mass0 = 3.0 * w0 * r0_sq ** 1.5 * VOL_UNIT_SPHERE
    values, radii = [], []
    for k, eta in enumerate(back.etas):
        geo = back.geometry(k)
        r3 = geo.A[0] ** 1.5
        w = track[k][0, 0]
        values.append(VOL_UNIT_SPHERE * r3 * w)
        radii.append(np.sqrt(geo.A[0]))
    values = np.asarray(values)
    radii = np.asarray(radii)
    radius_identity = np.max(np.abs(radii ** 2 - 4.0 * np.asarray(back.etas) - r0_sq))
    return {"etas": np.asarray(back.etas), "values": values,
            "max_deviation": float(np.max(np.abs(values - 1.0))),
            "delta_limit_mass": mass0,
            "radius_identity_max_err": float(radius_identity)}


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def torus_theta_kernel(chart: GridChart, y, t: float) -> np.ndarray:
    """Scalar heat kernel on the flat torus at time t (lattice theta sum)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return theta_heat_profile(chart, y, 2.0 * t)


def sphere_spectral_kernel(d, t: float, k_max: int | None = None):
    """Scalar heat kernel on the unit S^3 at geodesic distance d.

    K(d, t) = (1/2 pi^2) sum_k e^{-k(k+2) t} (k+1) sin((k+1) d)/ sin d.
    The truncation k_max is chosen so e^{-k(k+2)t} (k+1)^3 < 1e-12.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if k_max is None:
        k_max = 1
        while np.exp(-k_max * (k_max + 2) * t) * (k_max + 1) ** 3 >= 1e-12:
            k_max += 1
            if k_max > 20000:
                raise ValueError("tail bound not reachable")
    d = np.asarray(d, dtype=float)
    small = np.abs(np.sin(d)) < 1e-12
    acc = np.zeros_like(d)
    for k in range(k_max + 1):
        n = k + 1.0
        zonal = np.where(small, n, np.sin(n * d) / np.where(small, 1.0, np.sin(d)))
        acc = acc + np.exp(-k * (k + 2) * t) * n * zonal
    return acc / (2.0 * np.pi ** 2)


def sphere_kernel_mass(t: float, n_quad: int = 400) -> float:
    """integral of the spectral kernel over S^3 (should be 1)."""
    d = (np.arange(n_quad) + 0.5) * np.pi / n_quad
    vals = sphere_spectral_kernel(d, t) * 4.0 * np.pi * np.sin(d) ** 2
    return float(np.sum(vals) * np.pi / n_quad)
