"""Compressible Neo-Hookean continuum elements (bilinear quads, trilinear hexes).

Strain energy per reference volume::

    W = G/2 (tr C - 3) - G ln J + L/2 (ln J)^2

2D meshes are treated in plane strain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ElementInversionError

__all__ = [
    "Material",
    "BulkMesh",
    "neo_hookean_stress",
    "strain_energy",
    "bulk_element_forces",
    "assemble_bulk",
    "stress_invariant_field",
]


@dataclass(frozen=True)
class Material:
    E: float = 1.0
    nu: float = 0.3

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("E must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (-1, 0.5)")

    @property
    def lame(self):
        G = self.E / (2.0 * (1.0 + self.nu))
        lam = self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
        return G, lam


def _inv_det(F):
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise ElementInversionError("det F <= 0")
    return np.linalg.inv(F), J


def strain_energy(F, mat):
    """Energy density at deformation gradients ``F (..., d, d)``."""
    G, lam = mat.lame
    _, J = _inv_det(F)
    d = F.shape[-1]
    Ic = np.einsum("...ij,...ij->...", F, F) + (3 - d)
    lnJ = np.log(J)
    return 0.5 * G * (Ic - 3.0) - G * lnJ + 0.5 * lam * lnJ ** 2


def neo_hookean_stress(F, mat):
    """First Piola stress and material tangent ``A_iJkL = dP_iJ / dF_kL``."""
    F = np.asarray(F, dtype=float)
    G, lam = mat.lame
    Fi, J = _inv_det(F)
    lnJ = np.log(J)
    FiT = np.swapaxes(Fi, -1, -2)
    P = G * (F - FiT) + (lam * lnJ)[..., None, None] * FiT
    d = F.shape[-1]
    I = np.eye(d)
    A = (G * np.einsum("ik,JL->iJkL", I, I)
         + (G - lam * lnJ)[..., None, None, None, None] * np.einsum("...Li,...Jk->...iJkL", Fi, Fi)
         + lam * np.einsum("...Ji,...Lk->...iJkL", Fi, Fi))
    return P, A


# -----------------------------------------------------------------------------
# Elements
# -----------------------------------------------------------------------------
_Q4 = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_H8 = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)


def _ref_element(d):
    corners = _Q4 if d == 2 else _H8
    g = 1.0 / np.sqrt(3.0)
    pts = np.array(np.meshgrid(*[[-g, g]] * d, indexing="ij")).reshape(d, -1).T
    # dN/dxi at every Gauss point: (g, nen, d)
    terms = 1.0 + pts[:, None, :] * corners[None, :, :]
    dN = np.empty((len(pts),) + corners.shape)
    for k in range(d):
        other = np.prod(np.delete(terms, k, axis=2), axis=2)
        dN[:, :, k] = corners[None, :, k] * other / 2 ** d
    N = np.prod(terms, axis=2) / 2 ** d
    return N, dN, np.ones(len(pts))


class BulkMesh:
    """Linear elements of one body.

    ``elements`` index into the global node array; ``X`` is the global
    reference node array shared by all bodies.
    """

    def __init__(self, X, elements, material, name=""):
        self.elements = np.asarray(elements, dtype=int)
        self.material = material
        self.name = name
        d = X.shape[1]
        self.dim = d
        if self.elements.shape[1] != 2 ** d:
            raise ValueError("expected %d-node elements" % 2 ** d)
        self.N, dN, self.gw = _ref_element(d)
        Xe = X[self.elements]
        J0 = np.einsum("gak,ead->egdk", dN, Xe)
        det0 = np.linalg.det(J0)
        if np.any(det0 <= 0):
            raise ValueError("element with nonpositive reference Jacobian in body %r" % name)
        # reference gradients dN/dX: (e, g, a, d)
        self.dNdX = np.einsum("gak,egkd->egad", dN, np.linalg.inv(J0))
        self.dV = det0 * self.gw
        nen = self.elements.shape[1]
        dofs = (self.elements[:, :, None] * d + np.arange(d)).reshape(len(self.elements), nen * d)
        self.dofs = dofs
        self._rows = np.repeat(dofs, nen * d, axis=1).ravel()
        self._cols = np.tile(dofs, (1, nen * d)).ravel()

    @property
    def n_elements(self):
        return len(self.elements)

    def deformation_gradient(self, x):
        return np.einsum("ead,egaD->egdD", x[self.elements], self.dNdX)

    def energy(self, x):
        return float(np.sum(strain_energy(self.deformation_gradient(x), self.material) * self.dV))

    def forces(self, x, tangent=True):
        """Element internal forces ``(e, nen*d)`` and tangents ``(e, nen*d, nen*d)``."""
        F = self.deformation_gradient(x)
        P, A = neo_hookean_stress(F, self.material)
        ne, nen = self.elements.shape
        d = self.dim
        f = np.einsum("egiJ,egaJ,eg->eai", P, self.dNdX, self.dV).reshape(ne, nen * d)
        if not tangent:
            return f, None
        AV = A * self.dV[:, :, None, None, None, None]
        T = np.einsum("egiJkL,egbL->egiJkb", AV, self.dNdX, optimize=True)
        K = np.einsum("egaJ,egiJkb->eaibk", self.dNdX, T, optimize=True)
        return f, K.reshape(ne, nen * d, nen * d)

    def assemble(self, x, n_dof, tangent=True):
        f, K = self.forces(x, tangent)
        R = np.zeros(n_dof)
        np.add.at(R, self.dofs.ravel(), f.ravel())
        if not tangent:
            return R, None
        Ks = sp.csr_matrix((K.ravel(), (self._rows, self._cols)), shape=(n_dof, n_dof))
        return R, Ks

    def cauchy_trace(self, x):
        """Element-averaged ``tr sigma`` including the out-of-plane stress in 2D."""
        F = self.deformation_gradient(x)
        P, _ = neo_hookean_stress(F, self.material)
        J = np.linalg.det(F)
        tr = np.einsum("egiJ,egiJ->eg", P, F) / J
        if self.dim == 2:
            _, lam = self.material.lame
            tr = tr + lam * np.log(J) / J
        return np.sum(tr * self.dV, axis=1) / np.sum(self.dV, axis=1)


def bulk_element_forces(X_e, x_e, mat):
    """Internal force vector and tangent of single elements.

    ``X_e``, ``x_e`` are reference and current nodal coordinates ``(nen, d)``
    or batches ``(n, nen, d)``.
    """
    X_e = np.asarray(X_e, dtype=float)
    x_e = np.asarray(x_e, dtype=float)
    single = X_e.ndim == 2
    if single:
        X_e, x_e = X_e[None], x_e[None]
    n, nen, d = X_e.shape
    conn = np.arange(n * nen).reshape(n, nen)
    mesh = BulkMesh(X_e.reshape(-1, d), conn, mat)
    f, K = mesh.forces(x_e.reshape(-1, d))
    return (f[0], K[0]) if single else (f, K)


def assemble_bulk(meshes, x, tangent=True):
    n_dof = x.size
    R = np.zeros(n_dof)
    K = sp.csr_matrix((n_dof, n_dof)) if tangent else None
    for m in meshes:
        r, k = m.assemble(x, n_dof, tangent)
        R += r
        if tangent:
            K = K + k
    return R, K


def stress_invariant_field(meshes, x, n_nodes, E0=1.0):
    """Nodal ``I1 = tr sigma / E0`` by simple averaging of adjacent elements."""
    acc = np.zeros(n_nodes)
    cnt = np.zeros(n_nodes)
    for m in meshes:
        tr = m.cauchy_trace(x)
        nen = m.elements.shape[1]
        np.add.at(acc, m.elements.ravel(), np.repeat(tr, nen))
        np.add.at(cnt, m.elements.ravel(), 1.0)
    out = np.zeros(n_nodes)
    used = cnt > 0
    out[used] = acc[used] / cnt[used]
    return out / E0
