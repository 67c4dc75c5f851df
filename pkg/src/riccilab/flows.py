"""Time integration of the forward and backward (conjugate) flows.

The forward Ricci flow is integrated with classical RK4 and every step is
stored.  Co-evolved fields (reduced linearized flow, gauge vector, solitonic
covector, scalar pair, Uhlenbeck frame, conjugate flows) are integrated
afterwards along the stored metric track; metric values at RK substages come
from cubic Hermite interpolation of the stored snapshots and their exact
slopes, so the backward pass never re-runs the forward flow.

Memory: one torus snapshot is 9 N^3 floats (N=24: ~1 MB), so K <= 2000 steps
stay within desk RAM as documented.
"""
from __future__ import annotations

import numpy as np

from .geom import TorusGeometry, PositivityError, min_metric_eigenvalue
from .milnor import MilnorGeometry
from .torus import GridChart

CFL_DEFAULT = 0.2
BLOWUP_FACTOR = 1e3


class FlowGuardError(RuntimeError):
    pass


def _ric_sup(geo) -> float:
    """sup_x |Ric|_g, the Sesum--Simon blow-up monitor."""
    ric2 = np.einsum('ab...,ab...->...', geo.raise2(geo.Ric) if hasattr(geo, 'raise2') else geo.Ric,
                     geo.Ric)
    return float(np.sqrt(np.max(ric2)))


class _TrajectoryBase:
    """Stored flow: strictly increasing times, positive-definite snapshots."""

    def __init__(self, times, gs, gauge="none", events=None):
        self.times = np.asarray(times, dtype=float)
        self.gs = gs
        self.dt = float(self.times[1] - self.times[0]) if len(times) > 1 else 0.0
        self.gauge = gauge
        self.events = events or []
        self._geo = {}
        self._slope = {}

    @property
    def beta_star(self) -> float:
        return float(self.times[-1])

    def metric(self, k: int) -> np.ndarray:
        return self.gs[k]

    def geometry(self, k: int):
        if k not in self._geo:
            self._geo[k] = self._make_geometry(self.gs[k])
            if len(self._geo) > 8:
                self._geo.pop(next(iter(self._geo)))
        return self._geo[k]

    def knot_slope(self, k: int) -> np.ndarray:
        if k not in self._slope:
            self._slope[k] = self._rhs(self.geometry(k), self.gs[k])
            if len(self._slope) > 8:
                self._slope.pop(next(iter(self._slope)))
        return self._slope[k]

    def metric_at(self, beta: float) -> np.ndarray:
        """Cubic Hermite interpolation of the stored track."""
        t = self.times
        if beta <= t[0]:
            return self.gs[0]
        if beta >= t[-1]:
            return self.gs[-1]
        k = int(np.searchsorted(t, beta, side="right")) - 1
        k = min(k, len(t) - 2)
        h = t[k + 1] - t[k]
        s = (beta - t[k]) / h
        if s < 1e-12:
            return self.gs[k]
        if s > 1 - 1e-12:
            return self.gs[k + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s ** 2 * (3 - 2 * s)
        h11 = s ** 2 * (s - 1)
        return (h00 * self.gs[k] + h01 * self.gs[k + 1]
                + h * (h10 * self.knot_slope(k) + h11 * self.knot_slope(k + 1)))

    def geometry_at(self, beta: float):
        key = round(float(beta) / max(self.dt, 1e-300) * 2)
        cache = self._geo
        gkey = ("t", key)
        if gkey not in cache:
            cache[gkey] = self._make_geometry(self.metric_at(beta))
            if len(cache) > 8:
                cache.pop(next(iter(cache)))
        return cache[gkey]

    def backward(self) -> "BackwardView":
        return BackwardView(self)


class TorusTrajectory(_TrajectoryBase):
    backend = "torus"

    def __init__(self, chart: GridChart, times, gs, gauge="none", g0_ref=None, events=None):
        self.chart = chart
        self._g0_ref = g0_ref if g0_ref is not None else gs[0]
        super().__init__(times, gs, gauge, events)
        self._gam0 = None

    def _make_geometry(self, g):
        return TorusGeometry(self.chart, g)

    def _rhs(self, geo, g):
        rhs = -2.0 * geo.Ric
        if self.gauge == "deturck":
            if self._gam0 is None:
                self._gam0 = TorusGeometry(self.chart, self._g0_ref).Gam
            Xup = np.einsum('bc...,abc...->a...', geo.gi, geo.Gam - self._gam0)
            rhs = rhs - 2.0 * geo.lie_metric(geo.lower1(Xup))
        return rhs


class MilnorTrajectory(_TrajectoryBase):
    backend = "milnor"

    def _make_geometry(self, g):
        return MilnorGeometry(np.diag(g))

    def _rhs(self, geo, g):
        return -2.0 * geo.Ric


class BackwardView:
    """Time reversal eta = beta* - beta of a completed trajectory."""

    def __init__(self, traj: _TrajectoryBase):
        self.traj = traj
        self.beta_star = traj.beta_star
        self.etas = traj.beta_star - traj.times[::-1]
        self.dt = traj.dt
        self.backend = traj.backend

    def metric_at(self, eta: float) -> np.ndarray:
        return self.traj.metric_at(self.beta_star - eta)

    def geometry_at(self, eta: float):
        return self.traj.geometry_at(self.beta_star - eta)

    def geometry(self, k: int):
        """Geometry at the k-th eta knot (eta_k = beta* - beta_{K-k})."""
        return self.traj.geometry(len(self.traj.times) - 1 - k)


# ---------------------------------------------------------------------------
# forward Ricci flow
# ---------------------------------------------------------------------------

def check_cfl(chart_or_metric, dt: float, cfl: float = CFL_DEFAULT):
    if isinstance(chart_or_metric, GridChart):
        limit = cfl * chart_or_metric.h ** 2
        if dt > limit * (1 + 1e-12):
            raise FlowGuardError(f"dt={dt} violates CFL limit {limit:.3e} (h={chart_or_metric.h:.3f})")
    else:
        A = np.asarray(chart_or_metric, dtype=float)
        limit = 1e-3 * float(np.min(A))
        if dt > limit * (1 + 1e-12):
            raise FlowGuardError(f"dt={dt} violates Milnor limit {limit:.3e}")


def integrate_ricci(backend, g0, beta_star: float, dt: float, gauge: str = "none",
                    cfl: float = CFL_DEFAULT):
    """Explicit RK4 Ricci flow; snapshots stored at every step.

    ``backend`` is a GridChart (g0 shape (3,3,N,N,N)) or the string "milnor"
    (g0 = diagonal triple).  With gauge="deturck" the flow follows
    dg/dbeta = -2 Ric - L_X g with the DeTurck vector taken relative to g(0).
    Positivity loss or a Ricci sup exceeding 1e3 x initial truncates the
    trajectory with a recorded event.
    """
    milnor = not isinstance(backend, GridChart)
    if milnor:
        g0 = np.diag(np.asarray(g0, dtype=float)) if np.ndim(g0) == 1 else np.asarray(g0, float)
        check_cfl(np.diag(g0), dt)
        traj = MilnorTrajectory([0.0], [g0], gauge="none")
    else:
        check_cfl(backend, dt, cfl)
        traj = TorusTrajectory(backend, [0.0], [np.asarray(g0, dtype=float)], gauge=gauge)

    n_steps = int(round(beta_star / dt))
    if abs(n_steps * dt - beta_star) > 1e-9 * max(1.0, beta_star):
        raise ValueError("beta_star must be an integer multiple of dt")
    times = [0.0]
    gs = [traj.gs[0]]
    ric0 = _ric_sup(traj.geometry(0))
    events = []

    g = gs[0]
    for k in range(n_steps):
        t = k * dt
        try:
            geo1 = traj._make_geometry(g)
            k1 = traj._rhs(geo1, g)
            geo2 = traj._make_geometry(g + 0.5 * dt * k1)
            k2 = traj._rhs(geo2, g + 0.5 * dt * k1)
            geo3 = traj._make_geometry(g + 0.5 * dt * k2)
            k3 = traj._rhs(geo3, g + 0.5 * dt * k2)
            geo4 = traj._make_geometry(g + dt * k3)
            k4 = traj._rhs(geo4, g + dt * k3)
        except PositivityError as exc:
            events.append({"step": k, "event": "positivity", "detail": str(exc)})
            break
        g = g + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if min_metric_eigenvalue(g) < 1e-8:
            events.append({"step": k, "event": "positivity", "detail": "post-step eigenvalue"})
            break
        geo = traj._make_geometry(g)
        sup = _ric_sup(geo)
        if sup > BLOWUP_FACTOR * max(ric0, 1e-12):
            events.append({"step": k, "event": "curvature_blowup", "detail": f"sup|Ric|={sup:.3e}"})
            break
        times.append((k + 1) * dt)
        gs.append(g)

    cls = MilnorTrajectory if milnor else TorusTrajectory
    if milnor:
        out = cls(times, gs, gauge="none", events=events)
    else:
        out = cls(backend, times, gs, gauge=gauge, g0_ref=gs[0], events=events)
    return out


# ---------------------------------------------------------------------------
# co-evolved fields along a stored trajectory
# ---------------------------------------------------------------------------

def _co_integrate(times, geometry_at, rhs, y0):
    """RK4 for dy/dt = rhs(geo(t), y, t) along interpolated geometry."""
    return [ys[0] for ys in _co_integrate_multi(times, geometry_at, rhs, [y0])]


def _co_integrate_multi(times, geometry_at, rhs, y0_list):
    """RK4 for several tracks sharing the same stage geometries.

    Returns a list over times of lists over tracks.
    """
    ys = [np.asarray(y, dtype=float) for y in y0_list]
    out = [list(ys)]
    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        h = t1 - t0
        g1 = geometry_at(t0)
        gm = geometry_at(t0 + 0.5 * h)
        g2 = geometry_at(t1)
        k1 = [rhs(g1, y, t0) for y in ys]
        k2 = [rhs(gm, ys[i] + 0.5 * h * k1[i], t0 + 0.5 * h) for i in range(len(ys))]
        k3 = [rhs(gm, ys[i] + 0.5 * h * k2[i], t0 + 0.5 * h) for i in range(len(ys))]
        k4 = [rhs(g2, ys[i] + h * k3[i], t1) for i in range(len(ys))]
        ys = [ys[i] + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
              for i in range(len(ys))]
        out.append(list(ys))
    return out


def integrate_reduced_linearized(traj, h0):
    """Reduced linearized flow d h~/dbeta = Delta_L h~ along the trajectory."""
    return _co_integrate(traj.times, traj.geometry_at,
                         lambda geo, y, t: geo.lichnerowicz_cov(y), h0)


def integrate_w(traj, htrack):
    """Gauge covector: dw/dbeta = -nabla^b (h~_ab - (1/2) tr h~ g_ab), w(0)=0.

    The right side is the (negative of the) canonical divergence of the
    Einstein-conjugate of the co-evolved h~ interpolated linearly in beta.
    """
    times = traj.times

    def h_at(t):
        if t <= times[0]:
            return htrack[0]
        if t >= times[-1]:
            return htrack[-1]
        k = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 2)
        s = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - s) * htrack[k] + s * htrack[k + 1]

    def rhs(geo, y, t):
        # dw_a/dbeta = -nabla^b G(h~)_ab = +delta_g(G(h~))_a
        return geo.divergence(geo.einstein_conjugate(h_at(t)))

    w0 = np.zeros_like(htrack[0][0])
    return _co_integrate(times, traj.geometry_at, rhs, w0)


def assemble_full_linearized(traj, htrack, wtrack):
    """h(beta) = h~(beta) + L_{w(beta)} g(beta) solves the full linearized flow."""
    out = []
    for k in range(len(traj.times)):
        geo = traj.geometry(k)
        out.append(htrack[k] + 2.0 * geo.lie_metric(wtrack[k]))
    return out


def integrate_soliton_vector(traj, v0):
    """Solitonic covector flow dv_a/dbeta = Delta v_a + R_a^b v_b."""
    return _co_integrate(traj.times, traj.geometry_at,
                         lambda geo, y, t: geo.hodge_1form_laplacian(y), v0)


def integrate_scalar_forward(traj, rho0):
    """Plain heat flow d rho/dbeta = Delta rho along the trajectory."""
    return _co_integrate(traj.times, traj.geometry_at,
                         lambda geo, y, t: geo.lap_scalar(y), rho0)


def integrate_uhlenbeck_frame(traj, iota0):
    """Frame flow d iota^k_mu/dbeta = iota^h_mu R_h^k (Uhlenbeck trick)."""
    def rhs(geo, y, t):
        Rmix = np.einsum('hs...,sk...->hk...', geo.Ric, geo.gi)   # R_h^k
        return np.einsum('hm...,hk...->km...', y, Rmix)
    return _co_integrate(traj.times, traj.geometry_at, rhs, iota0)


def integrate_conjugate_H(back: BackwardView, Hstar):
    """Conjugate linearized flow dH/deta = Delta_L H - R H from H(eta=0)=H*."""
    def rhs(geo, y, t):
        return geo.lichnerowicz_contra(y) - geo.Rsc * y
    return _co_integrate(back.etas, back.geometry_at, rhs, Hstar)


def integrate_conjugate_H_multi(back: BackwardView, Hstars: list):
    """Several conjugate-flow tracks sharing stage geometries (kernel columns)."""
    def rhs(geo, y, t):
        return geo.lichnerowicz_contra(y) - geo.Rsc * y
    joint = _co_integrate_multi(back.etas, back.geometry_at, rhs, Hstars)
    return [[row[i] for row in joint] for i in range(len(Hstars))]


def integrate_scalar_backward(back: BackwardView, varpi_star):
    """Conjugate scalar flow d varpi/deta = Delta varpi - R varpi."""
    def rhs(geo, y, t):
        return geo.lap_scalar(y) - geo.Rsc * y
    return _co_integrate(back.etas, back.geometry_at, rhs, varpi_star)


def volume_series(traj):
    """(beta_k, Vol_k, integral R dmu at beta_k) for the volume-evolution check."""
    vols, rints = [], []
    for k in range(len(traj.times)):
        geo = traj.geometry(k)
        if traj.backend == "milnor":
            vols.append(geo.volume)
            rints.append(geo.Rsc * geo.volume)
        else:
            vols.append(geo.volume())
            rints.append(geo.chart.quadrature(geo.Rsc, geo.sqrtg))
    return np.array(vols), np.array(rints)
