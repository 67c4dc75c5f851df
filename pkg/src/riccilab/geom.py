"""Tensor calculus on the discrete torus: curvature, Laplacians, projections.

Two discretization routes coexist on purpose.  The canonical rough Laplacian
and divergence are built in summation-by-parts form (4th-order periodic
central differences are exactly skew-adjoint under plain sums), so the
canonical operators are exactly self-adjoint/adjoint with respect to the
metric quadrature.  The "natural" direct-stencil variants are kept as
independent cross-checks; identity tests pair the two routes.

Sign conventions: geometer Laplacian Delta = g^{ab} nabla_a nabla_b; curvature
anchored by the unit round 3-sphere having Ric = +2 g and scalar R = +6; the
lowered Riemann tensor Riem[a,s,b,t] satisfies the 3D reconstruction
  Riem = Ric_ab g_st + Ric_st g_ab - Ric_sb g_at - Ric_at g_sb
         + (R/2)(g_at g_sb - g_ab g_st).
"""
from __future__ import annotations

import numpy as np

from functools import partial

from .torus import GridChart
from .summation import pairwise_sum

_e = partial(np.einsum, optimize=True)

MIN_EIGENVALUE = 1e-8  # bounded-geometry guard on metric positivity


class PositivityError(ValueError):
    pass


def _inv33(g: np.ndarray) -> np.ndarray:
    """Inverse of a (3,3,...) stacked matrix field."""
    m = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)  # (..., 3, 3) with [..., a, b] = g[b, a]... symmetric
    return np.moveaxis(np.moveaxis(np.linalg.inv(m), -1, 0), -1, 0)


def _det33(g: np.ndarray) -> np.ndarray:
    m = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)
    return np.linalg.det(m)


def min_metric_eigenvalue(g: np.ndarray) -> float:
    m = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)
    return float(np.linalg.eigvalsh(m)[..., 0].min())


class TorusGeometry:
    """Metric + curvature package on a :class:`GridChart`.

    Heavy pieces (Riemann, connection derivatives) are computed lazily.
    """

    def __init__(self, chart: GridChart, g: np.ndarray, check: bool = True):
        self.chart = chart
        self.g = np.asarray(g, dtype=float)
        if check:
            lam = min_metric_eigenvalue(self.g)
            if not np.isfinite(lam) or lam < MIN_EIGENVALUE:
                raise PositivityError(f"metric minimum eigenvalue {lam:.3e} below guard")
        self.gi = _inv33(self.g)
        self.det = _det33(self.g)
        self.sqrtg = np.sqrt(self.det)
        d = chart.d1
        self.dg = np.stack([d(self.g, c) for c in range(3)], axis=0)   # (c,a,b,...)
        T = (_e('iaj...->aij...', self.dg) + _e('jai...->aij...', self.dg)
             - self.dg)
        self.Gam = 0.5 * _e('ka...,aij...->kij...', self.gi, T)
        self._cache: dict = {}

    # -- curvature -----------------------------------------------------------
    @property
    def dGam(self) -> np.ndarray:
        if 'dGam' not in self._cache:
            d = self.chart.d1
            self._cache['dGam'] = np.stack([d(self.Gam, c) for c in range(3)], axis=0)
        return self._cache['dGam']

    @property
    def R13(self) -> np.ndarray:
        if 'R13' not in self._cache:
            G = self.Gam
            dG = self.dGam
            self._cache['R13'] = (_e('mrns...->rsmn...', dG)
                                  - _e('nrms...->rsmn...', dG)
                                  + _e('rml...,lns...->rsmn...', G, G)
                                  - _e('rnl...,lms...->rsmn...', G, G))
        return self._cache['R13']

    @property
    def Riem(self) -> np.ndarray:
        if 'Riem' not in self._cache:
            self._cache['Riem'] = _e('ar...,rsbt...->asbt...', self.g, self.R13)
            # connection derivatives are only needed to assemble curvature
            self._cache.pop('dGam', None)
        return self._cache['Riem']

    @property
    def Ric(self) -> np.ndarray:
        if 'Ric' not in self._cache:
            self._cache['Ric'] = _e('rsrn...->sn...', self.R13)
        return self._cache['Ric']

    @property
    def Rsc(self) -> np.ndarray:
        if 'Rsc' not in self._cache:
            self._cache['Rsc'] = _e('ab...,ab...->...', self.gi, self.Ric)
        return self._cache['Rsc']

    @property
    def einstein(self) -> np.ndarray:
        return self.Ric - 0.5 * self.Rsc * self.g

    def riemann_from_ricci(self) -> np.ndarray:
        """3D reconstruction of the Riemann tensor from Ric and R."""
        g, Ric, R = self.g, self.Ric, self.Rsc
        return (_e('ab...,st...->asbt...', Ric, g) + _e('st...,ab...->asbt...', Ric, g)
                - _e('sb...,at...->asbt...', Ric, g) - _e('at...,sb...->asbt...', Ric, g)
                + 0.5 * R * (_e('at...,sb...->asbt...', g, g)
                             - _e('ab...,st...->asbt...', g, g)))

    # -- index gymnastics -----------------------------------------------------
    def raise2(self, h: np.ndarray) -> np.ndarray:
        return _e('ai...,bj...,ij...->ab...', self.gi, self.gi, h)

    def lower2(self, H: np.ndarray) -> np.ndarray:
        return _e('ai...,bj...,ij...->ab...', self.g, self.g, H)

    def raise1(self, w: np.ndarray) -> np.ndarray:
        return _e('ab...,b...->a...', self.gi, w)

    def lower1(self, v: np.ndarray) -> np.ndarray:
        return _e('ab...,b...->a...', self.g, v)

    def trace2(self, h: np.ndarray) -> np.ndarray:
        return _e('ab...,ab...->...', self.gi, h)

    # -- covariant derivatives (direct stencils) ------------------------------
    def cov_scalar(self, f: np.ndarray) -> np.ndarray:
        return self.chart.grad(f)

    def cov_covector(self, w: np.ndarray) -> np.ndarray:
        dw = np.stack([self.chart.d1(w, c) for c in range(3)], axis=0)
        return dw - _e('mca...,m...->ca...', self.Gam, w)

    def cov2(self, h: np.ndarray) -> np.ndarray:
        """nabla_c h_ab for a covariant symmetric 2-tensor: (c,a,b,...)."""
        dh = np.stack([self.chart.d1(h, c) for c in range(3)], axis=0)
        return (dh - _e('mca...,mb...->cab...', self.Gam, h)
                - _e('mcb...,am...->cab...', self.Gam, h))

    def cov_contra2(self, H: np.ndarray) -> np.ndarray:
        """nabla_c H^{ab}: (c,a,b,...)."""
        dH = np.stack([self.chart.d1(H, c) for c in range(3)], axis=0)
        return (dH + _e('acm...,mb...->cab...', self.Gam, H)
                + _e('bcm...,am...->cab...', self.Gam, H))

    # -- canonical (summation-by-parts) operators -----------------------------
    def _div_weighted(self, W: np.ndarray) -> np.ndarray:
        """(1/sqrt g) D_c (sqrt g W^{c...}) summed over the leading axis."""
        acc = np.zeros_like(W[0])
        for c in range(3):
            acc += self.chart.d1(self.sqrtg * W[c], c)
        return acc / self.sqrtg

    def lap_scalar(self, f: np.ndarray) -> np.ndarray:
        X = _e('ij...,j...->i...', self.gi, self.chart.grad(f))
        return self._div_weighted(X)

    def lap_covector(self, w: np.ndarray) -> np.ndarray:
        """Rough Laplacian of a covector, exactly self-adjoint form."""
        X = self.cov_covector(w)
        Xup = _e('ci...,aj...,ij...->ca...', self.gi, self.gi, X)
        out_up = self._div_weighted(Xup) + _e('acm...,cm...->a...', self.Gam, Xup)
        return self.lower1(out_up)

    def lap2(self, h: np.ndarray) -> np.ndarray:
        """Rough Laplacian of a covariant 2-tensor, exactly self-adjoint form."""
        X = self.cov2(h)
        Xup = _e('ci...,aj...,bk...,ijk...->cab...', self.gi, self.gi, self.gi, X)
        out_up = (self._div_weighted(Xup)
                  + _e('acm...,cmb...->ab...', self.Gam, Xup)
                  + _e('bcm...,cam...->ab...', self.Gam, Xup))
        return self.lower2(out_up)

    def lap2_direct(self, h: np.ndarray) -> np.ndarray:
        """Direct-stencil rough Laplacian (independent cross-check route)."""
        X = self.cov2(h)
        dX = np.stack([self.chart.d1(X, c) for c in range(3)], axis=0)
        XX = (dX - _e('mdc...,mab...->dcab...', self.Gam, X)
              - _e('mda...,cmb...->dcab...', self.Gam, X)
              - _e('mdb...,cam...->dcab...', self.Gam, X))
        return _e('dc...,dcab...->ab...', self.gi, XX)

    def divergence(self, h: np.ndarray, contravariant: bool = False) -> np.ndarray:
        """Canonical divergence delta_g h = -nabla^i h_{ik}, result lowered.

        Exact adjoint of :meth:`lie_metric` under the quadrature pairing.
        """
        H = h if contravariant else self.raise2(h)
        up = self._div_weighted(H) + _e('cab...,ab...->c...', self.Gam, H)
        return -self.lower1(up)

    def divergence_natural(self, h: np.ndarray, contravariant: bool = False) -> np.ndarray:
        """Direct-stencil divergence -g^{ij} nabla_i h_jk (independent route)."""
        hcov = self.lower2(h) if contravariant else h
        return -_e('ij...,ijk...->k...', self.gi, self.cov2(hcov))

    def lie_metric(self, w: np.ndarray) -> np.ndarray:
        """delta*_g w = (1/2) L_{w#} g = sym nabla w."""
        cw = self.cov_covector(w)
        return 0.5 * (cw + _e('ab...->ba...', cw))

    # -- Lichnerowicz--DeRham -------------------------------------------------
    def _curv_terms(self, h: np.ndarray, riem: np.ndarray) -> np.ndarray:
        Sup = _e('sc...,cb...->sb...', self.gi, h)
        Huu = self.raise2(h)
        return (-_e('as...,sb...->ab...', self.Ric, Sup)
                - _e('bs...,sa...->ab...', self.Ric, Sup)
                + 2.0 * _e('asbt...,st...->ab...', riem, Huu))

    def lichnerowicz_cov(self, h: np.ndarray) -> np.ndarray:
        """Delta_L h via the full Riemann tensor."""
        return self.lap2(h) + self._curv_terms(h, self.Riem)

    def lichnerowicz_endo(self, h: np.ndarray) -> np.ndarray:
        """Delta_L h via the explicit n=3 endomorphism built from Ric and R."""
        gi, g, Ric, R = self.gi, self.g, self.Ric, self.Rsc
        Rmix = _e('is...,as...->ai...', gi, Ric)          # R_a^i
        trh = self.trace2(h)
        RS = _e('ab...,ab...->...', self.raise2(h), Ric)
        endo = (-3.0 * _e('ai...,ib...->ab...', Rmix, h)
                - 3.0 * _e('bk...,ak...->ab...', Rmix, h)
                + 2.0 * RS * g + 2.0 * (Ric - 0.5 * R * g) * trh + R * h)
        return self.lap2(h) + endo

    def lichnerowicz_contra(self, H: np.ndarray) -> np.ndarray:
        """Delta_L on contravariant tensors: raise(Delta_L(lower H))."""
        return self.raise2(self.lichnerowicz_cov(self.lower2(H)))

    def einstein_conjugate(self, h: np.ndarray) -> np.ndarray:
        return h - 0.5 * self.trace2(h) * self.g

    def hodge_1form_laplacian(self, v: np.ndarray) -> np.ndarray:
        """Delta v_a + R_a^b v_b (rough Laplacian plus Ricci term)."""
        Rmix = _e('as...,bs...->ab...', self.Ric, self.gi)
        return self.lap_covector(v) + _e('ab...,b...->a...', Rmix, v)

    # -- pairings -------------------------------------------------------------
    def pairing(self, A: np.ndarray, b: np.ndarray) -> float:
        """integral A^{ab} b_ab dmu_g for contravariant A, covariant b."""
        return self.chart.quadrature(_e('ab...,ab...->...', A, b), self.sqrtg)

    def ip2(self, h: np.ndarray, k: np.ndarray) -> float:
        """L^2 inner product of two covariant 2-tensors."""
        return self.pairing(self.raise2(h), k)

    def ip1(self, u: np.ndarray, v: np.ndarray) -> float:
        return self.chart.quadrature(
            _e('ab...,a...,b...->...', self.gi, u, v), self.sqrtg)

    def norm2(self, h: np.ndarray) -> float:
        return np.sqrt(max(self.ip2(h, h), 0.0))

    def norm1(self, u: np.ndarray) -> float:
        return np.sqrt(max(self.ip1(u, u), 0.0))

    def volume(self) -> float:
        return self.chart.quadrature(np.ones_like(self.sqrtg), self.sqrtg)

    # -- divergence-free projection -------------------------------------------
    def _kernel_project(self, w: np.ndarray) -> np.ndarray:
        """Remove the (flat-torus) harmonic covector part: weighted means."""
        vol = self.volume()
        out = w.copy()
        for a in range(3):
            out[a] -= self.chart.quadrature(w[a], self.sqrtg) / vol
        return out

    def project_divergence_free(self, h: np.ndarray, tol: float = 1e-10,
                                max_iter: int = 4000):
        """L^2-orthogonal splitting h = h_T + 2 delta*_g(w), delta h_T = 0.

        Solves delta delta* w = (1/2) delta h by conjugate gradients; the
        operator is exactly symmetric positive semidefinite because the
        canonical divergence is the exact adjoint of delta*.  Harmonic
        covectors (constants on the torus) are projected out.
        """
        b = self._kernel_project(0.5 * self.divergence(h))
        w = np.zeros_like(b)
        r = b.copy()
        p = r.copy()
        rs = self.ip1(r, r)
        bnorm = np.sqrt(max(self.ip1(b, b), 1e-300))
        n_iter = 0
        while np.sqrt(rs) / bnorm > tol and n_iter < max_iter:
            Ap = self.divergence(self.lie_metric(p))
            alpha = rs / self.ip1(p, Ap)
            w += alpha * p
            r -= alpha * Ap
            if n_iter % 50 == 49:
                w = self._kernel_project(w)
                r = b - self.divergence(self.lie_metric(w))
            rs_new = self.ip1(r, r)
            p = r + (rs_new / rs) * p
            rs = rs_new
            n_iter += 1
        rel = np.sqrt(max(rs, 0.0)) / bnorm
        if rel > tol:
            raise RuntimeError(f"divergence-free projection stalled: rel residual {rel:.3e} "
                               f"after {n_iter} iterations")
        h_T = h - 2.0 * self.lie_metric(w)
        return h_T, w, {"iterations": n_iter, "rel_residual": rel}
