"""Conserved pairings, monotonicity, and operator identities along stored flows.

Every check returns a :class:`DriftReport` whose headline number is the drift
of a time series against its eta=0 value, matching the statements
"integral ... at eta=0 equals integral ... at eta=beta*".
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import BackwardView, integrate_conjugate_H, integrate_reduced_linearized
from .torus import band_limited_sym2, band_limited_field


@dataclass
class DriftReport:
    name: str
    times: np.ndarray
    values: np.ndarray
    tolerance: float | None = None
    reference: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def drift_abs(self) -> float:
        return float(np.max(np.abs(self.values - self.values[0])))

    @property
    def drift_rel(self) -> float:
        scale = max(abs(float(self.values[0])), float(np.max(np.abs(self.values))), 1e-300)
        return self.drift_abs / scale

    @property
    def verdict(self) -> bool | None:
        if self.tolerance is None:
            return None
        return bool(self.drift_rel <= self.tolerance)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "drift_abs": self.drift_abs,
            "drift_rel": self.drift_rel,
            "initial": float(self.values[0]),
        }
        if self.tolerance is not None:
            out["tolerance"] = self.tolerance
            out["verdict"] = "pass" if self.verdict else "fail"
        if self.reference is not None:
            out["reference"] = self.reference
        out.update(self.extra)
        return out


def _forward_track_at_eta(track, k_eta):
    """Track stored along beta read at the k-th eta knot."""
    return track[len(track) - 1 - k_eta]


def pairing_series(back: BackwardView, Htrack, btrack_kind, btrack=None,
                   tolerance=None, name=None) -> DriftReport:
    """Series of integral H^{ab}(eta) b_ab(eta) dmu_{g(eta)}.

    ``btrack_kind``: 'hred' (co-evolved track, pass btrack stored along beta),
    'ricci', 'metric_shifted' (g - 2 eta Ric), 'metric', or 'custom' with
    btrack stored along eta.
    """
    vals = []
    for k, eta in enumerate(back.etas):
        geo = back.geometry(k)
        H = Htrack[k]
        if btrack_kind == "hred":
            b = _forward_track_at_eta(btrack, k)
        elif btrack_kind == "ricci":
            b = geo.Ric
        elif btrack_kind == "metric":
            b = geo.g
        elif btrack_kind == "metric_shifted":
            b = geo.g - 2.0 * eta * geo.Ric
        elif btrack_kind == "custom":
            b = btrack[k]
        else:
            raise ValueError(btrack_kind)
        vals.append(geo.pairing(H, b))
    return DriftReport(name or f"pairing[{btrack_kind}]", np.asarray(back.etas),
                       np.asarray(vals), tolerance)


def transverse_pairing_series(back: BackwardView, HTtrack, htrack,
                              tolerance=None) -> DriftReport:
    """Pairs a divergence-free H_T against the divergence-free part of h~(eta).

    The projection is recomputed at every sample time (torus backend); on the
    Milnor backend diagonal forms are already transverse.
    """
    vals = []
    for k in range(len(back.etas)):
        geo = back.geometry(k)
        h = _forward_track_at_eta(htrack, k)
        if back.backend == "torus":
            hT, _, _ = geo.project_divergence_free(h)
        else:
            hT = h
        vals.append(geo.pairing(HTtrack[k], hT))
    return DriftReport("transverse_pairing", np.asarray(back.etas), np.asarray(vals), tolerance)


def divergence_norm_series(back: BackwardView, Htrack, natural=True) -> DriftReport:
    """||delta H(eta)|| along the conjugate flow (Cor. divergence invariance)."""
    vals = []
    for k in range(len(back.etas)):
        geo = back.geometry(k)
        div = geo.divergence_natural(Htrack[k], contravariant=True) if natural \
            else geo.divergence(Htrack[k], contravariant=True)
        vals.append(geo.norm1(div) if hasattr(geo, "norm1")
                    else float(np.sqrt(np.einsum('a,ab,b->', div, geo.gi, div) * geo.volume)))
    return DriftReport("divergence_norm", np.asarray(back.etas), np.asarray(vals))


def monotonicity_identity(back: BackwardView, Htrack) -> dict:
    """Two-sided identity d/deta int |dH|^2 = -int R |dH|^2 - 2 int |nab dH|^2.

    Returns the identity residual series (interior 4th-order FD in eta), the
    sign report for d/deta int |dH|^2, and the maximum pointwise-sampled R.
    """
    etas = np.asarray(back.etas)
    lhs_q = []
    rhs_q = []
    rmin = np.inf
    for k in range(len(etas)):
        geo = back.geometry(k)
        div = geo.divergence(Htrack[k], contravariant=True)
        lhs_q.append(geo.ip1(div, div))
        r_d2 = np.einsum('ab...,a...,b...->...', geo.gi, div, div)
        cd = geo.cov_covector(div)
        nd2 = np.einsum('ci...,aj...,ca...,ij...->...', geo.gi, geo.gi, cd, cd)
        rhs_q.append(-geo.chart.quadrature(geo.Rsc * r_d2, geo.sqrtg)
                     - 2.0 * geo.chart.quadrature(nd2, geo.sqrtg))
        rmin = min(rmin, float(np.min(geo.Rsc)))
    lhs_q = np.asarray(lhs_q)
    rhs_q = np.asarray(rhs_q)
    dt = etas[1] - etas[0]
    dlhs = (-lhs_q[4:] + 8 * lhs_q[3:-1] - 8 * lhs_q[1:-3] + lhs_q[:-4]) / (12 * dt)
    resid = dlhs - rhs_q[2:-2]
    scale = max(np.max(np.abs(rhs_q)), 1e-300)
    return {
        "etas": etas[2:-2],
        "residual": resid,
        "residual_rel": float(np.max(np.abs(resid)) / scale),
        "dnorm_series": lhs_q,
        "max_dnorm_increase": float(np.max(np.diff(lhs_q))),
        "min_scalar_curvature": rmin,
    }


def scalar_conjugacy_series(back: BackwardView, rho_track, varpi_track,
                            tolerance=None) -> DriftReport:
    """Series of integral rho(beta) varpi(beta) dmu_{g(beta)} (read along eta)."""
    vals = []
    for k in range(len(back.etas)):
        geo = back.geometry(k)
        rho = _forward_track_at_eta(rho_track, k)
        w = varpi_track[k]
        if back.backend == "torus":
            vals.append(geo.chart.quadrature(rho * w, geo.sqrtg))
        else:
            vals.append(float(rho * w) * geo.volume)
    return DriftReport("scalar_conjugacy", np.asarray(back.etas), np.asarray(vals), tolerance)


def converse_characterization(back: BackwardView, Htrack) -> DriftReport:
    """Residual of d/deta int g H dmu - 2 int Ric H dmu (backward-flow converse)."""
    etas = np.asarray(back.etas)
    gh, rich = [], []
    for k in range(len(etas)):
        geo = back.geometry(k)
        gh.append(geo.pairing(Htrack[k], geo.g))
        rich.append(geo.pairing(Htrack[k], geo.Ric))
    gh = np.asarray(gh)
    rich = np.asarray(rich)
    dt = etas[1] - etas[0]
    dgh = (-gh[4:] + 8 * gh[3:-1] - 8 * gh[1:-3] + gh[:-4]) / (12 * dt)
    resid = dgh - 2.0 * rich[2:-2]
    rep = DriftReport("converse_characterization", etas[2:-2], resid)
    rep.extra["residual_max"] = float(np.max(np.abs(resid)))
    rep.extra["scale"] = float(np.max(np.abs(rich)))
    return rep


# ---------------------------------------------------------------------------
# operator identity suite along a trajectory
# ---------------------------------------------------------------------------

def identity_commutation(geo, S) -> float:
    """Lemma: nab^k Delta_L S_kl - [Delta nab S + curvature terms], relative sup."""
    LS = geo.lichnerowicz_cov(S)
    lhs = -geo.divergence_natural(LS)
    covS = geo.cov2(S)
    covRic = geo.cov2(geo.Ric)
    Suu = geo.raise2(S)
    nabS = -geo.divergence_natural(S)            # nabla^k S_kl
    Rmix = np.einsum('ls...,sa...->la...', geo.Ric, geo.gi)
    lapdiv = _lap_covector_of(geo, nabS)
    rhs = (lapdiv + np.einsum('ab...,lab...->l...', Suu, covRic)
           - np.einsum('la...,a...->l...', Rmix, nabS)
           - 2.0 * np.einsum('ka...,kla...->l...', Suu, covRic))
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _lap_covector_of(geo, v):
    return geo.lap_covector(v)


def identity_gradS(traj, Strack, k: int) -> float:
    """Divergence evolution along dS/dbeta = Delta_L S (corrected coefficient 2).

    Compares the 4th-order FD of nabla^k S_kl in beta against
    Delta divS - Ric.divS + 2 S^{ab} nab_l R_ab + 2 R^{ik} nab_i S_kl
    - 2 S^{ik} nab_i R_kl.
    """
    dt = traj.dt

    def divS(j):
        geo = traj.geometry(j)
        return -geo.divergence_natural(Strack[j])

    lhs = (-divS(k + 2) + 8 * divS(k + 1) - 8 * divS(k - 1) + divS(k - 2)) / (12 * dt)
    geo = traj.geometry(k)
    S = Strack[k]
    covS = geo.cov2(S)
    covRic = geo.cov2(geo.Ric)
    Suu = geo.raise2(S)
    Ricuu = geo.raise2(geo.Ric)
    nabS = -geo.divergence_natural(S)
    Rmix = np.einsum('ls...,sa...->la...', geo.Ric, geo.gi)
    rhs = (geo.lap_covector(nabS)
           - np.einsum('la...,a...->l...', Rmix, nabS)
           + 2.0 * np.einsum('ab...,lab...->l...', Suu, covRic)
           + 2.0 * np.einsum('ik...,ikl...->l...', Ricuu, covS)
           - 2.0 * np.einsum('ik...,ikl...->l...', Suu, covRic))
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def identity_hessian(traj, k: int, f0, fdot) -> float:
    """Hessian identity along the flow for f(beta) = f0 + beta*fdot.

    Asserts the verified form of the contravariant-Hessian evolution:
      (d/dbeta + Delta_L - R)(Hess f)^{ab}
        = nab^a nab^b ((d/dbeta + Delta) f) + 2 R^{ia} H_i^b + 2 R^{kb} H^a_k
          - R H^{ab} + 2 (nab^a R^b_l + nab^b R^a_l - nab_l R^{ab}) nab^l f
    with H = Hess f.
    """
    dt = traj.dt

    def hess_up(j):
        geo = traj.geometry(j)
        f = f0 + traj.times[j] * fdot
        hess = geo.cov_covector(geo.chart.grad(f))
        hess = 0.5 * (hess + np.einsum('ab...->ba...', hess))
        return geo.raise2(hess)

    dH = (-hess_up(k + 2) + 8 * hess_up(k + 1) - 8 * hess_up(k - 1) + hess_up(k - 2)) / (12 * dt)
    geo = traj.geometry(k)
    f = f0 + traj.times[k] * fdot
    Hup = hess_up(k)
    Hlow = geo.lower2(Hup)
    lhs = dH + geo.lichnerowicz_contra(Hup) - geo.Rsc * Hup

    u = fdot + geo.lap_scalar(f)
    hess_u = geo.cov_covector(geo.chart.grad(u))
    term1 = geo.raise2(0.5 * (hess_u + np.einsum('ab...->ba...', hess_u)))
    Ricuu = geo.raise2(geo.Ric)
    Hi_b = np.einsum('sb...,is...->ib...', geo.gi, Hlow)               # H_i^b = g^{sb} H_is
    mix = (2.0 * np.einsum('ia...,ib...->ab...', Ricuu, Hi_b)
           + 2.0 * np.einsum('kb...,ka...->ab...', Ricuu, Hi_b))
    covRic = geo.cov2(geo.Ric)
    gradf_up = geo.raise1(geo.chart.grad(f))
    covRic_upup = np.einsum('cij...,ia...,jb...->cab...', covRic, geo.gi, geo.gi)
    covRic_bl = np.einsum('bi...,cil...->cbl...', geo.gi, covRic)      # nab_c R^b_l
    nabA = np.einsum('ac...,cbl...->abl...', geo.gi, covRic_bl)        # nab^a R^b_l
    t3 = 2.0 * np.einsum('abl...,l...->ab...',
                         nabA + np.einsum('bal...->abl...', nabA)
                         - np.einsum('lab...->abl...', covRic_upup), gradf_up)
    rhs = term1 + mix - geo.Rsc * Hup + t3
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def identity_scalev4(traj, k: int) -> float:
    """Ricci evolution by the Lichnerowicz--DeRham Laplacian (absolute residual)."""
    dt = traj.dt

    def ric(j):
        return traj.geometry(j).Ric

    lhs = (-ric(k + 2) + 8 * ric(k + 1) - 8 * ric(k - 1) + ric(k - 2)) / (12 * dt)
    geo = traj.geometry(k)
    return float(np.max(np.abs(lhs - geo.lichnerowicz_cov(geo.Ric))))


def identity_suite(traj, seed: int = 11) -> dict:
    """Evaluate the operator identities on seeded random smooth inputs."""
    out = {}
    kmid = len(traj.times) // 2
    kmid = max(2, min(kmid, len(traj.times) - 3))
    if traj.backend == "torus":
        chart = traj.chart
        S0 = band_limited_sym2(chart, seed, amplitude=0.5)
        geo = traj.geometry(kmid)
        out["commutation_rel"] = identity_commutation(geo, S0)
        Strack = integrate_reduced_linearized(traj, S0)
        out["gradS_rel"] = identity_gradS(traj, Strack, kmid)
        f0 = band_limited_field(chart, seed + 1)
        fdot = band_limited_field(chart, seed + 2)
        out["hessian_rel"] = identity_hessian(traj, kmid, f0, fdot)
    out["scalev4_abs"] = identity_scalev4(traj, kmid)
    return out
