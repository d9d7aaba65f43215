"""Penalty contact forces and consistent tangents.

Slave quadrature points carry the history.  For every active point the
interacting gap ``g_hat`` gives the nominal traction ``T = eps g_hat`` and
the forces ``f_e = w N_e^T T`` on the slave and ``f_h = -w N_h(xi_hat)^T T``
on the master element containing the interacting point.

Tangent blocks are formed from three dof slots: ``e`` (slave element),
``h`` (master element at the interacting point) and ``b`` (master element at
the previous interacting point, which enters only through the sliding
direction while slipping).  For sticking points ``h`` and ``b`` coincide and
the ``b`` blocks vanish.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import SurfaceFrame
from .kinematics import ContactHistory, sliding_jacobian, update_interaction

__all__ = [
    "PenaltyLaw",
    "ContactPair",
    "ContactElementForces",
    "contact_traction",
    "true_traction",
    "element_contact_forces",
    "element_contact_tangent_stick",
    "element_contact_tangent_slip",
    "assemble_contact",
]


@dataclass(frozen=True)
class PenaltyLaw:
    """Penalty tensor ``eps_n P_n + eps_tau P_tau``.

    With unequal penalties the friction coefficient acting on the gap is
    rescaled by ``eps_n / eps_tau`` so that the tractions obey Coulomb's law
    with the nominal coefficient.
    """

    eps_n: float
    eps_tau: float | None = None

    def __post_init__(self):
        if self.eps_tau is None:
            object.__setattr__(self, "eps_tau", self.eps_n)
        if not self.eps_n > 0:
            raise ValueError("eps_n must be positive")
        if self.eps_tau < 0:
            raise ValueError("eps_tau must be nonnegative")

    @property
    def isotropic(self):
        return self.eps_n == self.eps_tau

    def gap_friction(self, mu):
        """Coefficient for the gap cone giving traction ratio ``mu``."""
        if self.eps_tau == 0:
            return 0.0 * np.asarray(mu)
        return np.asarray(mu) * (self.eps_n / self.eps_tau)

    def traction(self, g, n):
        gn = np.einsum("pd,pd->p", g, n)
        return self.eps_tau * g + (self.eps_n - self.eps_tau) * gn[:, None] * n


def contact_traction(g_hat, frame, law, phi=True):
    """Nominal traction ``phi (eps_n P_n + eps_tau P_tau) g_hat``."""
    g = np.atleast_2d(np.asarray(g_hat, dtype=float))
    T = law.traction(g, frame.n)
    return np.where(np.atleast_1d(phi)[:, None], T, 0.0)


def true_traction(T, J):
    """Traction per current area, ``T / J``."""
    J = np.asarray(J, dtype=float)
    if np.any(J <= 0):
        raise ValueError("surface stretch must be positive")
    return np.asarray(T, dtype=float) / J[..., None]


def _gauss(order):
    return np.polynomial.legendre.leggauss(order)


def _dofs(nodes, d):
    return (nodes[..., None] * d + np.arange(d)).reshape(nodes.shape[:-1] + (nodes.shape[-1] * d,))


def _nmat(N, d):
    Q, n = N.shape
    out = np.zeros((Q, d, n, d))
    for i in range(d):
        out[:, i, :, i] = N
    return out.reshape(Q, d, n * d)


def _nmat_d(dN, d):
    Q, n, s = dN.shape
    out = np.zeros((Q, s, d, n, d))
    for i in range(d):
        out[:, :, i, :, i] = np.moveaxis(dN, 2, 1)
    return out.reshape(Q, s, d, n * d)


@dataclass
class PointTerms:
    """Per-point forces and tangent blocks for the active points of a pair."""

    points: np.ndarray
    dofs: dict
    forces: dict
    blocks: dict
    omega: np.ndarray
    T: np.ndarray
    weights: np.ndarray


class ContactPair:
    """One slave surface probing one master surface.

    Both surfaces carry global node ids in ``patch.nodes`` (the master may be
    rigid).  ``history`` is the committed per-quadrature-point record.
    """

    def __init__(self, slave, master, law, mu=0.0, quad_order=None, name="", L_ref=1.0):
        if slave.is_rigid:
            raise ValueError("the slave surface must be deformable")
        self.slave, self.master, self.law = slave, master, law
        self.mu = float(mu)
        self.name = name
        self.L_ref = L_ref
        s = slave.param_dim
        if quad_order is None:
            quad_order = 10 if s == 1 else 5
        self.quad_order = quad_order
        t, wt = _gauss(quad_order)
        if s == 1:
            loc = t[:, None]
            wl = wt
        else:
            T1, T2 = np.meshgrid(t, t, indexing="ij")
            loc = np.column_stack([T1.ravel(), T2.ravel()])
            wl = np.outer(wt, wt).ravel()
        xi, el, w = [], [], []
        for e in range(slave.n_elements):
            box = slave.element_bounds(e)
            half = 0.5 * (box[:, 1] - box[:, 0])
            xi.append(box[:, 0] + half * (loc + 1.0))
            el.append(np.full(len(loc), e))
            w.append(wl * np.prod(half))
        self.xi_q = np.vstack(xi)
        self.elem_q = np.concatenate(el)
        idx, N, dN, _ = slave._basis_in(self.elem_q, self.xi_q)
        A = np.einsum("pna,pnd->pad", dN, slave.ref_points[idx])
        if s == 1:
            dA = np.linalg.norm(A[:, 0], axis=1)
        else:
            dA = np.linalg.norm(np.cross(A[:, 0], A[:, 1]), axis=1)
        self.weights = np.concatenate(w) * dA
        self.N_q = N
        self.nodes_q = np.asarray(slave.nodes)[idx]
        self.n_points = len(self.xi_q)
        self.history = ContactHistory.empty(self.n_points, master.param_dim, name)
        self.pending = None

    # -- configuration helpers -------------------------------------------------
    def slave_points(self, x, sel=None):
        sel = slice(None) if sel is None else sel
        return np.einsum("pn,pnd->pd", self.N_q[sel], x[self.nodes_q[sel]])

    def master_X(self, x):
        return None if self.master.is_rigid else x[np.asarray(self.master.nodes)]

    def elements_points(self, elem):
        return np.nonzero(self.elem_q == elem)[0]

    # -- kinematics ------------------------------------------------------------
    def interact(self, x, mu=None, sel=None, history=None):
        """Stick/slip update of the selected points against the committed history."""
        mu = self.mu if mu is None else mu
        hist = self.history if history is None else history
        sel = np.arange(self.n_points) if sel is None else np.asarray(sel)
        xk = self.slave_points(x, sel)
        return update_interaction(xk, self.master, self.master_X(x), hist.xi_hat[sel],
                                  self.law.gap_friction(mu), L_ref=self.L_ref)

    def point_terms(self, x, state, sel=None, master_terms=True, tangent=True):
        """Forces and tangent blocks of the active points among ``sel``."""
        sel = np.arange(self.n_points) if sel is None else np.asarray(sel)
        act = np.nonzero(state.phi)[0]
        pts = sel[act]
        d = x.shape[1]
        law = self.law
        fr = _subframe(state.frame, act)
        w = self.weights[pts]
        g = state.g_hat[act]
        n = fr.n
        T = law.traction(g, n)
        Ne = _nmat(self.N_q[pts], d)
        dof_e = _dofs(self.nodes_q[pts], d)
        f_e = w[:, None] * np.einsum("qdk,qd->qk", Ne, T)
        dofs = {"e": dof_e}
        forces = {"e": f_e}
        blocks = {}
        omega = state.omega[act]
        mst = self.master
        rigid = mst.is_rigid
        if rigid:
            Q = len(act)
            Nh = np.zeros((Q, d, 0))
            Nh_a = np.zeros((Q, mst.param_dim, d, 0))
            Nb = np.zeros((Q, d, 0))
            dof_h = dof_b = np.zeros((Q, 0), dtype=int)
        else:
            mnodes = np.asarray(mst.nodes)
            ih, Nh0, dNh0, _ = mst.basis(state.xi_hat[act])
            ib, Nb0, _, _ = mst.basis(state.xi_prev[act])
            Nh, Nh_a, Nb = _nmat(Nh0, d), _nmat_d(dNh0, d), _nmat(Nb0, d)
            dof_h, dof_b = _dofs(mnodes[ih], d), _dofs(mnodes[ib], d)
        if master_terms:
            dofs["h"] = dof_h
            forces["h"] = -w[:, None] * np.einsum("qdk,qd->qk", Nh, T)
        if tangent:
            dofs["b"] = dof_b
            if "h" not in dofs:
                dofs["h"] = dof_h
            s = mst.param_dim
            Q = len(act)
            M = {k: np.zeros((Q, s, m.shape[-1])) for k, m in (("e", Ne), ("h", Nh), ("b", Nb))}
            slip = np.nonzero(omega == 1)[0]
            if slip.size:
                xk = self.slave_points(x, pts[slip])
                jac = sliding_jacobian(_subframe(fr, slip), xk, state.g_prev[act][slip],
                                       state.mu_used[act][slip])
                cinv = np.linalg.inv(jac.K)
                gr = jac.g_e - jac.g_max
                M["e"][slip] = -cinv @ np.einsum("qbd,qdk->qbk", jac.c_vec - jac.m_vec, Ne[slip])
                inner = (np.einsum("qd,qbdk->qbk", gr, Nh_a[slip])
                         - np.einsum("qbd,qdk->qbk", jac.c_vec, Nh[slip])
                         - np.einsum("qbgd,qgdk->qbk", jac.d_vec, Nh_a[slip]))
                M["h"][slip] = -cinv @ inner
                M["b"][slip] = -cinv @ np.einsum("qbd,qdk->qbk", jac.m_vec, Nb[slip])
            a = fr.a
            D = {
                "e": Ne - np.einsum("qad,qak->qdk", a, M["e"]),
                "h": -Nh - np.einsum("qad,qak->qdk", a, M["h"]),
                "b": -np.einsum("qad,qak->qdk", a, M["b"]),
            }
            DT = {}
            for k in D:
                DT[k] = law.eps_tau * D[k]
                if not law.isotropic:
                    DA = np.einsum("qgbd,qbk->qgdk", fr.da, M[k])
                    if k == "h":
                        DA = DA + Nh_a
                    Dn = -np.einsum("qgi,qj,qgjk->qik", fr.a_dual, n, DA)
                    gn = np.einsum("qd,qd->q", g, n)
                    dgn = np.einsum("qd,qdk->qk", n, D[k]) + np.einsum("qd,qdk->qk", g, Dn)
                    DT[k] = DT[k] + (law.eps_n - law.eps_tau) * (
                        n[:, :, None] * dgn[:, None, :] + gn[:, None, None] * Dn)
            for c in ("e", "h", "b"):
                blocks[("e", c)] = w[:, None, None] * np.einsum("qdk,qdl->qkl", Ne, DT[c])
                if master_terms:
                    blocks[("h", c)] = -w[:, None, None] * (
                        np.einsum("qdk,qdl->qkl", Nh, DT[c])
                        + np.einsum("qadk,qd,qal->qkl", Nh_a, T, M[c]))
        return PointTerms(pts, dofs, forces, blocks, omega, T, w)

    # -- commit ----------------------------------------------------------------
    def dissipation(self, x, state):
        """Per-point dissipation of a converged update (zero for sticking points)."""
        D = np.zeros(self.n_points)
        slip = state.phi & (state.omega == 1) & state.had_history
        if slip.any():
            X = self.master_X(x)
            x_new = self.master.evaluate(state.xi_hat[slip], X)[0]
            x_old = self.master.evaluate(state.xi_prev[slip], X)[0]
            fr = _subframe(state.frame, np.nonzero(slip)[0])
            T = self.law.traction(state.g_hat[slip], fr.n)
            Tt = fr.tangential_part(T)
            D[slip] = self.weights[slip] * np.einsum("qd,qd->q", Tt, x_new - x_old)
        return D

    def commit(self, x, state):
        D = self.dissipation(x, state)
        hist = state.history(self.history)
        hist.accumulated_dissipation = self.history.accumulated_dissipation + D
        self.history = hist
        return D


def _subframe(frame, idx):
    return SurfaceFrame(*(getattr(frame, f)[idx] for f in
                          ("xi", "elem", "x", "a", "n", "a_cov", "a_con", "a_dual", "b", "J", "da")))


# -----------------------------------------------------------------------------
# Element-level views
# -----------------------------------------------------------------------------
@dataclass
class ContactElementForces:
    """Aggregated contributions of one slave element.

    ``k_blocks`` maps a label to ``(row_dofs, col_dofs, matrix)``.
    """

    slave_dofs: np.ndarray
    f_slave: np.ndarray
    master_dofs: np.ndarray | None = None
    f_master: np.ndarray | None = None
    k_blocks: dict = field(default_factory=dict)


def _gather(dofs, vals):
    """Sum per-point vectors onto the union of their dofs."""
    if dofs.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    u, inv = np.unique(dofs.ravel(), return_inverse=True)
    out = np.zeros(len(u))
    np.add.at(out, inv, vals.ravel())
    return u, out


def _gather_block(rows, cols, mats):
    ru, ri = np.unique(rows.ravel(), return_inverse=True) if rows.size else (np.zeros(0, int), None)
    cu, ci = np.unique(cols.ravel(), return_inverse=True) if cols.size else (np.zeros(0, int), None)
    out = np.zeros((len(ru), len(cu)))
    if ri is not None and ci is not None:
        Q, r = rows.shape
        c = cols.shape[1]
        RI = np.broadcast_to(ri.reshape(Q, r)[:, :, None], (Q, r, c))
        CI = np.broadcast_to(ci.reshape(Q, c)[:, None, :], (Q, r, c))
        np.add.at(out, (RI.ravel(), CI.ravel()), mats.ravel())
    return ru, cu, out


_STICK_LABELS = {("e", "e"): "kk", ("e", "h"): "k_lbar", ("h", "e"): "lbar_k", ("h", "h"): "lbar_lbar"}
_SLIP_LABELS = {("e", "e"): "kk", ("e", "h"): "k_lhat", ("e", "b"): "k_lbar",
                ("h", "e"): "lhat_k", ("h", "h"): "lhat_lhat", ("h", "b"): "lhat_lbar"}


def _element_terms(pair, elem, x, pass_mode, tangent):
    if pass_mode not in ("full", "twohalf"):
        raise ValueError("pass must be 'full' or 'twohalf'")
    sel = pair.elements_points(elem)
    state = pair.interact(x, sel=sel)
    return pair.point_terms(x, state, sel, master_terms=(pass_mode == "full"), tangent=tangent)


def element_contact_forces(pair, elem, x, pass_mode="full"):
    """Contact forces of slave element ``elem`` in configuration ``x (nodes, d)``."""
    pt = _element_terms(pair, elem, x, pass_mode, tangent=False)
    d = x.shape[1]
    sdofs = _dofs(np.unique(pair.nodes_q[pair.elements_points(elem)].ravel())[None], d)[0]
    f = np.zeros(len(sdofs))
    u, v = _gather(pt.dofs["e"], pt.forces["e"])
    f[np.searchsorted(sdofs, u)] = v
    out = ContactElementForces(sdofs, f)
    if "h" in pt.forces:
        out.master_dofs, out.f_master = _gather(pt.dofs["h"], pt.forces["h"])
    return out


def _tangent(pair, elem, x, pass_mode, want):
    pt = _element_terms(pair, elem, x, pass_mode, tangent=True)
    mask = pt.omega == want
    labels = _STICK_LABELS if want == 0 else _SLIP_LABELS
    out = {}
    for (r, c), lab in labels.items():
        if (r, c) not in pt.blocks:
            continue
        out[lab] = _gather_block(pt.dofs[r][mask], pt.dofs[c][mask], pt.blocks[(r, c)][mask])
    return out


def element_contact_tangent_stick(pair, elem, x, pass_mode="full"):
    """Tangent blocks of the sticking points of slave element ``elem``."""
    return _tangent(pair, elem, x, pass_mode, 0)


def element_contact_tangent_slip(pair, elem, x, pass_mode="full"):
    """Tangent blocks of the slipping points of slave element ``elem``."""
    return _tangent(pair, elem, x, pass_mode, 1)


# -----------------------------------------------------------------------------
# Global assembly
# -----------------------------------------------------------------------------
@dataclass
class ContactAssembly:
    residual: np.ndarray
    tangent: sp.csr_matrix | None
    states: list
    terms: list


def assemble_contact(pairs, x, pass_mode="full", tangent=True, mu=None):
    """Global contact residual and tangent for configuration ``x (nodes, d)``.

    In the full pass the master-side forces and blocks are included.  In the
    two-half pass the pairs are expected in both directions and only the
    slave rows are kept.
    """
    if pass_mode not in ("full", "twohalf"):
        raise ValueError("pass must be 'full' or 'twohalf'")
    n_dof = x.size
    R = np.zeros(n_dof)
    rows, cols, vals = [], [], []
    states, terms = [], []
    full = pass_mode == "full"
    for pair in pairs:
        st = pair.interact(x, mu=None if mu is None else mu)
        pt = pair.point_terms(x, st, master_terms=full, tangent=tangent)
        states.append(st)
        terms.append(pt)
        for k, f in pt.forces.items():
            np.add.at(R, pt.dofs[k].ravel(), f.ravel())
        if tangent:
            for (r, c), m in pt.blocks.items():
                if m.size == 0:
                    continue
                dr, dc = pt.dofs[r], pt.dofs[c]
                rows.append(np.broadcast_to(dr[:, :, None], m.shape).ravel())
                cols.append(np.broadcast_to(dc[:, None, :], m.shape).ravel())
                vals.append(m.ravel())
    K = None
    if tangent:
        if rows:
            K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n_dof, n_dof))
        else:
            K = sp.csr_matrix((n_dof, n_dof))
    return ContactAssembly(R, K, states, terms)
