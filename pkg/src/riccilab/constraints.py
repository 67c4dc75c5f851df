"""Ricci-flow conjugated constraint sets (Hamiltonian-type scalar constraint).

The constraint on a triple (g, s, f) with coupling C reads
    C(g, s, f) = R - |s|^2 + (tr_g s)^2 - C f
with norms and traces taken in g; s may carry either index placement.
"""
from __future__ import annotations

import numpy as np

from .conservation import pairing_series, scalar_conjugacy_series
from .flows import (integrate_conjugate_H, integrate_reduced_linearized,
                    integrate_scalar_backward, integrate_scalar_forward)


def evaluate_constraint(geo, s, f, C: float, contravariant: bool = False):
    """Pointwise constraint residual field R - |s|^2 + (tr s)^2 - C f."""
    s_up = s if contravariant else geo.raise2(s)
    s_low = geo.lower2(s) if contravariant else s
    norm2 = np.einsum('ab...,ab...->...', s_up, s_low)
    tr = np.einsum('ab...,ab...->...', geo.g if contravariant else geo.gi, s)
    return geo.Rsc - norm2 + tr ** 2 - C * f


def solve_conjugate_density(geo, Hstar, C: float) -> dict:
    """Solve the constraint pointwise for the density: varpi* = (R - |H|^2 + (tr H)^2)/C.

    Reports the mass of the resulting density and the rescaled coupling that
    would normalize the mass to 1 (the pointwise constraint and unit mass
    overdetermine the pair, so the rescale is reported rather than applied).
    """
    if C == 0:
        raise ValueError("coupling constant C must be nonzero")
    H_low = geo.lower2(Hstar)
    norm2 = np.einsum('ab...,ab...->...', Hstar, H_low)
    tr = np.einsum('ab...,ab...->...', geo.g, Hstar)
    varpi = (geo.Rsc - norm2 + tr ** 2) / C
    if hasattr(geo, "chart"):
        mass = geo.chart.quadrature(varpi, geo.sqrtg)
        sign_ok = bool(np.min(varpi) >= 0)
    else:
        mass = float(varpi) * geo.volume
        sign_ok = bool(varpi >= 0)
    return {"varpi": varpi, "mass": mass,
            "normalizing_C": C * mass if mass != 0 else np.inf,
            "nonnegative": sign_ok}


def conjugated_pair_report(traj, h0, rho0, Hstar, varpi_star, C: float,
                           residual_tol: float = 1e-12, drift_tol: float = 1e-8) -> dict:
    """Run the four flows and certify the interpolation conservation identities.

    Forward data (h0, rho0) must satisfy the constraint at beta=0 and backward
    data (Hstar, varpi_star) at eta=0; the three conserved pairings
    (int H h~, int H Ric, int rho dvarpi) interpolate between them.
    """
    geo0 = traj.geometry(0)
    geoK = traj.geometry(len(traj.times) - 1)
    res_fwd = evaluate_constraint(geo0, h0, rho0, C)
    res_bwd = evaluate_constraint(geoK, Hstar, varpi_star, C, contravariant=True)
    r_fwd = float(np.max(np.abs(res_fwd)))
    r_bwd = float(np.max(np.abs(res_bwd)))

    back = traj.backward()
    htrack = integrate_reduced_linearized(traj, h0)
    rho_track = integrate_scalar_forward(traj, rho0)
    Htrack = integrate_conjugate_H(back, Hstar)
    varpi_track = integrate_scalar_backward(back, varpi_star)

    drifts = {
        "pair_H_h": pairing_series(back, Htrack, "hred", htrack, tolerance=drift_tol),
        "pair_H_ric": pairing_series(back, Htrack, "ricci", tolerance=drift_tol),
        "pair_rho_varpi": scalar_conjugacy_series(back, rho_track, varpi_track,
                                                  tolerance=drift_tol),
    }
    conjugated = (r_fwd <= residual_tol and r_bwd <= residual_tol
                  and all(rep.verdict for rep in drifts.values()))
    return {
        "forward_residual": r_fwd,
        "backward_residual": r_bwd,
        "drifts": drifts,
        "verdict": "conjugated" if conjugated else "not conjugated",
    }
