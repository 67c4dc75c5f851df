"""Exact left-invariant calculus on SU(2) in a Milnor frame.

Structure relations [e_i, e_j] = 2 eps_{ijk} e_k fix the normalization so the
diagonal metric (1,1,1) is the unit round 3-sphere (Ric = diag(2,2,2), R = 6,
volume 2 pi^2).  All operators reduce to constant-coefficient algebra on
frame components; left-invariant tensors are stored as dense (3,3) matrices
(diagonal ones are the public face, but intermediate objects need off-diagonal
slots).
"""
from __future__ import annotations

import numpy as np

VOL_UNIT_SPHERE = 2.0 * np.pi ** 2

_EPS = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_i, _j, _k] = 1.0
    _EPS[_j, _i, _k] = -1.0


def milnor_ricci_closed_form(A: np.ndarray) -> np.ndarray:
    """Frame Ricci components: Ric_ii = 2[A_i^2 - (A_j - A_k)^2]/(A_j A_k)."""
    A = np.asarray(A, dtype=float)
    out = np.zeros(3)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        out[i] = 2.0 * (A[i] ** 2 - (A[j] - A[k]) ** 2) / (A[j] * A[k])
    return out


class MilnorGeometry:
    """Diagonal left-invariant metric diag(A1, A2, A3) in the Milnor frame."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        if self.A.shape != (3,) or np.any(self.A <= 0):
            raise ValueError("Milnor metric needs three positive diagonal components")
        self.g = np.diag(self.A)
        self.gi = np.diag(1.0 / self.A)
        # Koszul connection: Gam^k_{ij} = eps_{ijk} (A_k - A_i + A_j) / A_k
        G = np.zeros((3, 3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    if _EPS[i, j, k]:
                        G[k, i, j] = _EPS[i, j, k] * (self.A[k] - self.A[i] + self.A[j]) / self.A[k]
        self.Gam = G
        # curvature from the structure constants (independent Koszul route)
        # R(e_i, e_j) e_k = Gam^m_{jk} Gam^l_{im} e_l - Gam^m_{ik} Gam^l_{jm} e_l
        #                   - 2 eps_{ijm} Gam^l_{mk} e_l
        R13 = (np.einsum('mjk,lim->lkij', G, G) - np.einsum('mik,ljm->lkij', G, G)
               - 2.0 * np.einsum('ijm,lmk->lkij', _EPS, G))
        self.R13 = R13                                     # R^l_{k i j}
        self.Ric_koszul = np.einsum('lklj->kj', R13)
        self.Ric = np.diag(milnor_ricci_closed_form(self.A))
        self.Rsc = float(np.einsum('ab,ab->', self.gi, self.Ric))
        # R13 is indexed (l, k, i, j) = R^l_{kij}, matching the torus (r,s,m,n)
        # ordering; lower the first slot for the (a,s,b,t) pair-order tensor.
        self.Riem = np.einsum('ar,rsbt->asbt', self.g, R13)
        self.sqrt_det = float(np.sqrt(np.prod(self.A)))
        self.volume = self.sqrt_det * VOL_UNIT_SPHERE

    @property
    def einstein(self) -> np.ndarray:
        return self.Ric - 0.5 * self.Rsc * self.g

    def riemann_from_ricci(self) -> np.ndarray:
        g, Ric, R = self.g, self.Ric, self.Rsc
        return (np.einsum('ab,st->asbt', Ric, g) + np.einsum('st,ab->asbt', Ric, g)
                - np.einsum('sb,at->asbt', Ric, g) - np.einsum('at,sb->asbt', Ric, g)
                + 0.5 * R * (np.einsum('at,sb->asbt', g, g) - np.einsum('ab,st->asbt', g, g)))

    # -- algebraic covariant calculus on left-invariant tensors ----------------
    def cov_covector(self, w: np.ndarray) -> np.ndarray:
        return -np.einsum('mca,m->ca', self.Gam, w)

    def cov2(self, h: np.ndarray) -> np.ndarray:
        return (-np.einsum('mca,mb->cab', self.Gam, h)
                - np.einsum('mcb,am->cab', self.Gam, h))

    def lap2(self, h: np.ndarray) -> np.ndarray:
        X = self.cov2(h)
        dX = (-np.einsum('mdc,mab->dcab', self.Gam, X)
              - np.einsum('mda,cmb->dcab', self.Gam, X)
              - np.einsum('mdb,cam->dcab', self.Gam, X))
        return np.einsum('dc,dcab->ab', self.gi, dX)

    def lap_covector(self, w: np.ndarray) -> np.ndarray:
        X = self.cov_covector(w)
        dX = (-np.einsum('mdc,ma->dca', self.Gam, X)
              - np.einsum('mda,cm->dca', self.Gam, X))
        return np.einsum('dc,dca->a', self.gi, dX)

    def raise2(self, h: np.ndarray) -> np.ndarray:
        return self.gi @ h @ self.gi

    def lower2(self, H: np.ndarray) -> np.ndarray:
        return self.g @ H @ self.g

    def trace2(self, h: np.ndarray) -> float:
        return float(np.einsum('ab,ab->', self.gi, h))

    def divergence(self, h: np.ndarray, contravariant: bool = False) -> np.ndarray:
        hcov = self.lower2(h) if contravariant else h
        return -np.einsum('ij,ijk->k', self.gi, self.cov2(hcov))

    def lie_metric(self, w: np.ndarray) -> np.ndarray:
        cw = self.cov_covector(w)
        return 0.5 * (cw + cw.T)

    def _curv_terms(self, h: np.ndarray, riem: np.ndarray) -> np.ndarray:
        Sup = self.gi @ h
        Huu = self.raise2(h)
        return (-self.Ric @ Sup - (self.Ric @ Sup).T
                + 2.0 * np.einsum('asbt,st->ab', riem, Huu))

    def lichnerowicz_cov(self, h: np.ndarray) -> np.ndarray:
        """Delta_L via the Koszul-route Riemann tensor."""
        return self.lap2(h) + self._curv_terms(h, self.Riem)

    def lichnerowicz_endo(self, h: np.ndarray) -> np.ndarray:
        """Delta_L via the n=3 endomorphism from the closed-form Ricci."""
        g, gi, Ric, R = self.g, self.gi, self.Ric, self.Rsc
        Rmix = Ric @ gi
        trh = self.trace2(h)
        RS = float(np.einsum('ab,ab->', self.raise2(h), Ric))
        endo = (-3.0 * Rmix @ h - 3.0 * (Rmix @ h).T
                + 2.0 * RS * g + 2.0 * (Ric - 0.5 * R * g) * trh + R * h)
        return self.lap2(h) + endo

    def lichnerowicz_contra(self, H: np.ndarray) -> np.ndarray:
        return self.raise2(self.lichnerowicz_cov(self.lower2(H)))

    def einstein_conjugate(self, h: np.ndarray) -> np.ndarray:
        return h - 0.5 * self.trace2(h) * self.g

    def hodge_1form_laplacian(self, v: np.ndarray) -> np.ndarray:
        return self.lap_covector(v) + (self.Ric @ self.gi) @ v

    # -- pairings --------------------------------------------------------------
    def pairing(self, A: np.ndarray, b: np.ndarray) -> float:
        return float(np.einsum('ab,ab->', A, b)) * self.volume

    def ip2(self, h: np.ndarray, k: np.ndarray) -> float:
        return self.pairing(self.raise2(h), k)

    def norm2(self, h: np.ndarray) -> float:
        return float(np.sqrt(max(self.ip2(h, h), 0.0)))
