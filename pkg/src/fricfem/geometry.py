"""Parametric contact surfaces and their differential geometry.

All surfaces are addressed with *patch-global* parameters: knot coordinates for
NURBS patches and ``[0, n_el]`` (per direction) for Hermite and Lagrange
chains, so a point that moves across an element boundary keeps a continuous
coordinate.  Evaluation routines are batched over a leading point axis ``P``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import GeometryError

__all__ = [
    "bernstein_eval",
    "bezier_extraction",
    "hermite_basis",
    "lagrange_basis",
    "Patch",
    "NurbsPatch",
    "HermitePatch",
    "LagrangePatch",
    "RigidPlane",
    "SurfaceFrame",
    "surface_frame",
    "nurbs_circle",
]


# ---------------------------------------------------------------------------
# 1D bases
# ---------------------------------------------------------------------------
def _bernstein_values(p, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (max(p, 0) + 1,))
    if p < 0:
        return out
    s = 1.0 - t
    for k in range(p + 1):
        out[..., k] = comb(p, k) * t**k * s ** (p - k)
    return out


def _bernstein_all(p, t):
    """Values, first and second derivatives of the degree-p Bernstein basis."""
    t = np.asarray(t, dtype=float)
    B = _bernstein_values(p, t)
    dB = np.zeros_like(B)
    d2B = np.zeros_like(B)
    if p >= 1:
        Bm1 = _bernstein_values(p - 1, t)
        dB[..., 1:] += p * Bm1
        dB[..., :-1] -= p * Bm1
    if p >= 2:
        Bm2 = _bernstein_values(p - 2, t)
        f = p * (p - 1)
        d2B[..., 2:] += f * Bm2
        d2B[..., 1:-1] -= 2.0 * f * Bm2
        d2B[..., :-2] += f * Bm2
    return B, dB, d2B


def bernstein_eval(degree, xi):
    """Bernstein polynomials of ``degree`` on [0, 1] with two derivatives.

    Returns ``(values, first_derivs, second_derivs)``, each with a trailing
    axis of length ``degree + 1``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0.0) or np.any(xi > 1.0):
        raise ValueError("xi must lie in [0, 1]")
    return _bernstein_all(degree, xi)


def _check_knots(knots, p):
    U = np.asarray(knots, dtype=float)
    if U.ndim != 1 or len(U) < 2 * (p + 1):
        raise ValueError("knot vector too short for degree %d" % p)
    if np.any(np.diff(U) < 0.0):
        raise ValueError("knot vector must be nondecreasing")
    if np.any(U[: p + 1] != U[0]) or np.any(U[-(p + 1):] != U[-1]):
        raise ValueError("knot vector must be open (clamped) at both ends")
    if U[-1] <= U[0]:
        raise ValueError("knot vector has no nonzero span")
    return U


def bezier_extraction(knots, degree):
    """Element extraction operators ``C^e`` of a clamped knot vector.

    ``C[e] @ B(t)`` reproduces the B-spline functions supported on element
    ``e``, where ``B`` is the Bernstein basis on the element mapped to [0, 1].
    Follows the knot-insertion algorithm of Borden et al. (2011).
    """
    p = int(degree)
    U = _check_knots(knots, p)
    m = len(U)

    def u(i):  # 1-based access, as in the published algorithm
        return U[i - 1]

    a, b, nb = p + 1, p + 2, 1
    C = [np.eye(p + 1)]
    alphas = np.zeros(p + 1)
    while b < m:
        C.append(np.eye(p + 1))
        i = b
        while b < m and u(b + 1) == u(b):
            b += 1
        mult = b - i + 1
        if mult < p:
            numer = u(b) - u(a)
            for j in range(p, mult, -1):
                alphas[j - mult] = numer / (u(a + j) - u(a))
            r = p - mult
            for j in range(1, r + 1):
                save = r - j + 1
                s = mult + j
                Ce = C[nb - 1]
                for k in range(p + 1, s, -1):
                    alpha = alphas[k - s]
                    Ce[:, k - 1] = alpha * Ce[:, k - 1] + (1.0 - alpha) * Ce[:, k - 2]
                if b < m:
                    C[nb][save - 1: j + save, save - 1] = Ce[p - j: p + 1, p]
        nb += 1
        if b < m:
            a = b
            b += 1
    return C[:_n_spans(U)]


def _n_spans(U):
    return int(np.count_nonzero(np.diff(U) > 0.0))


def _span_table(U, p):
    """Element breakpoints and first supported function index per element."""
    idx = np.nonzero(np.diff(U) > 0.0)[0]
    lo = U[idx]
    hi = U[idx + 1]
    first = idx - p
    return lo, hi, first


def hermite_basis(t):
    """Two-node cubic Hermite functions on t in [-1, 1].

    Returns arrays of shape (..., 4) ordered ``(N1, N2, H1, H2)`` with their
    first and second derivatives with respect to ``t``.
    """
    t = np.asarray(t, dtype=float)
    N = np.stack([
        (1 - t) ** 2 * (2 + t) / 4,
        (1 + t) ** 2 * (2 - t) / 4,
        (1 - t) ** 2 * (1 + t) / 4,
        -((1 + t) ** 2) * (1 - t) / 4,
    ], axis=-1)
    dN = np.stack([
        3 * (t**2 - 1) / 4,
        3 * (1 - t**2) / 4,
        (3 * t**2 - 2 * t - 1) / 4,
        (3 * t**2 + 2 * t - 1) / 4,
    ], axis=-1)
    d2N = np.stack([
        1.5 * t,
        -1.5 * t,
        (3 * t - 1) / 2,
        (3 * t + 1) / 2,
    ], axis=-1)
    return N, dN, d2N


def lagrange_basis(t):
    """Linear (1 coordinate) or bilinear (2 coordinates) Lagrange functions.

    ``t`` has a trailing axis of length 1 or 2 with local coordinates in
    [-1, 1].  Node order for the bilinear case is counterclockwise starting at
    (-1, -1).  Returns ``(N, dN, d2N)`` with derivative axes appended.
    """
    t = np.asarray(t, dtype=float)
    s = t.shape[-1]
    if s == 1:
        r = t[..., 0]
        N = np.stack([(1 - r) / 2, (1 + r) / 2], axis=-1)
        dN = np.stack([-0.5 * np.ones_like(r), 0.5 * np.ones_like(r)], axis=-1)[..., None]
        d2N = np.zeros(N.shape + (1, 1))
        return N, dN, d2N
    if s != 2:
        raise ValueError("lagrange_basis supports one or two coordinates")
    r, q = t[..., 0], t[..., 1]
    sr = np.array([-1.0, 1.0, 1.0, -1.0])
    sq = np.array([-1.0, -1.0, 1.0, 1.0])
    fr = 1 + r[..., None] * sr
    fq = 1 + q[..., None] * sq
    N = fr * fq / 4
    dN = np.stack([sr * fq / 4, fr * sq / 4], axis=-1)
    d2N = np.zeros(N.shape + (2, 2))
    d2N[..., 0, 1] = d2N[..., 1, 0] = sr * sq / 4
    return N, dN, d2N


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------
class Patch:
    """Base class for parametric surfaces.

    Subclasses provide :meth:`basis`, returning for every point the indices of
    the supporting control points (fixed count ``n_basis`` per element) and the
    corresponding shape functions with derivatives in patch-global parameters.
    """

    kind = "abstract"
    param_dim = 1
    dim = 2
    n_basis = 0
    orientation = 1
    ref_points = np.zeros((0, 2))
    bounds = np.array([[-np.inf, np.inf]])
    n_elements = 1
    # global node ids of the control points, assigned when a patch is attached
    # to a finite element mesh; None for rigid or free-standing patches
    nodes = None

    @property
    def is_rigid(self):
        return self.n_basis == 0

    def locate(self, xi):
        raise NotImplementedError

    def basis(self, xi):
        raise NotImplementedError

    def element_bounds(self, elem):
        """Parameter box ``(s, 2)`` of element ``elem``."""
        raise NotImplementedError

    def shape_functions(self, elem, xi):
        """Shape functions of one element at one point.

        Returns ``(indices, N, dN, d2N)`` for the supporting control points.
        """
        if not 0 <= elem < self.n_elements:
            raise IndexError("element id %r out of range" % (elem,))
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        box = self.element_bounds(elem)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(box))))
        if np.any(xi < box[:, 0] - tol) or np.any(xi > box[:, 1] + tol):
            raise ValueError("xi outside the element's parametric domain")
        idx, N, dN, d2N = self._basis_in(np.full(1, elem), xi[None, :])
        return idx[0], N[0], dN[0], d2N[0]

    def _basis_in(self, elem, xi):
        return self.basis(xi)

    def clip(self, xi):
        return np.clip(xi, self.bounds[:, 0], self.bounds[:, 1])

    def inside(self, xi, tol=0.0):
        return np.all((xi >= self.bounds[:, 0] - tol) & (xi <= self.bounds[:, 1] + tol), axis=-1)

    def sample_params(self):
        """Seed parameters for projection searches."""
        raise NotImplementedError

    def evaluate(self, xi, X=None):
        """Position, tangents and tangent derivatives at points ``xi (P, s)``.

        ``X`` holds current control point positions; defaults to the reference.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        X = self.ref_points if X is None else X
        idx, N, dN, d2N = self.basis(xi)
        Xe = X[idx]
        x = np.einsum("pn,pnd->pd", N, Xe)
        a = np.einsum("pna,pnd->pad", dN, Xe)
        da = np.einsum("pnab,pnd->pabd", d2N, Xe)
        return x, a, da


class NurbsPatch(Patch):
    """NURBS curve (one parameter) or surface (two parameters).

    Basis functions are evaluated element-wise through Bezier extraction and
    then rationalized with the control point weights.  Surface control points
    are given as an ``(n1, n2, dim)`` grid and flattened in C order.
    """

    kind = "nurbs"

    def __init__(self, degrees, knots, control_points, weights=None, orientation=1):
        degrees = tuple(int(p) for p in np.atleast_1d(degrees))
        if len(knots) != len(degrees):
            raise ValueError("need one knot vector per parametric direction")
        self.param_dim = len(degrees)
        if self.param_dim not in (1, 2):
            raise ValueError("NURBS patches are curves or surfaces")
        self.degrees = degrees
        self.knots = [_check_knots(k, p) for k, p in zip(knots, degrees)]
        cp = np.asarray(control_points, dtype=float)
        self.shape = tuple(len(U) - p - 1 for U, p in zip(self.knots, degrees))
        if cp.shape[:-1] != self.shape:
            raise ValueError("control net shape %s does not match knots %s" % (cp.shape[:-1], self.shape))
        self.dim = cp.shape[-1]
        self.ref_points = cp.reshape(-1, self.dim)
        w = np.ones(self.shape) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != self.shape:
            raise ValueError("weights shape mismatch")
        if np.any(w <= 0.0):
            raise ValueError("NURBS weights must be positive")
        self.weights = w.reshape(-1)
        self.orientation = 1 if orientation >= 0 else -1
        self.extraction = [np.array(bezier_extraction(U, p)) for U, p in zip(self.knots, degrees)]
        self.spans = [_span_table(U, p) for U, p in zip(self.knots, degrees)]
        self.n_el_dir = tuple(len(s[0]) for s in self.spans)
        self.n_elements = int(np.prod(self.n_el_dir))
        self.n_basis = int(np.prod([p + 1 for p in degrees]))
        self.bounds = np.array([[U[0], U[-1]] for U in self.knots])

    def _locate_dir(self, k, x):
        lo = self.spans[k][0]
        e = np.searchsorted(lo, x, side="right") - 1
        return np.clip(e, 0, len(lo) - 1)

    def locate(self, xi):
        xi = np.atleast_2d(xi)
        e = self._locate_dir(0, xi[:, 0])
        if self.param_dim == 2:
            e = e * self.n_el_dir[1] + self._locate_dir(1, xi[:, 1])
        return e

    def element_bounds(self, elem):
        if self.param_dim == 1:
            ids = (elem,)
        else:
            ids = divmod(elem, self.n_el_dir[1])
        return np.array([[self.spans[k][0][i], self.spans[k][1][i]] for k, i in enumerate(ids)])

    def _dir_basis(self, k, e, x):
        p = self.degrees[k]
        lo, hi, first = self.spans[k]
        h = hi[e] - lo[e]
        t = (x - lo[e]) / h
        B, dB, d2B = _bernstein_all(p, t)
        C = self.extraction[k][e]
        N = np.einsum("pij,pj->pi", C, B)
        dN = np.einsum("pij,pj->pi", C, dB) / h[:, None]
        d2N = np.einsum("pij,pj->pi", C, d2B) / (h**2)[:, None]
        ids = first[e][:, None] + np.arange(p + 1)
        return ids, N, dN, d2N

    def _basis_in(self, elem, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        P = xi.shape[0]
        if self.param_dim == 1:
            ids, N, dN, d2N = self._dir_basis(0, elem, xi[:, 0])
            Nh, dNh, d2Nh = N, dN[:, :, None], d2N[:, :, None, None]
        else:
            e1, e2 = np.divmod(elem, self.n_el_dir[1])
            i1, N1, dN1, d2N1 = self._dir_basis(0, e1, xi[:, 0])
            i2, N2, dN2, d2N2 = self._dir_basis(1, e2, xi[:, 1])
            n2 = self.shape[1]
            nb = i1.shape[1] * i2.shape[1]
            ids = (i1[:, :, None] * n2 + i2[:, None, :]).reshape(P, nb)

            def outer(f, g):
                return (f[:, :, None] * g[:, None, :]).reshape(P, nb)

            Nh = outer(N1, N2)
            dNh = np.stack([outer(dN1, N2), outer(N1, dN2)], axis=-1)
            mixed = outer(dN1, dN2)
            d2Nh = np.empty(Nh.shape + (2, 2))
            d2Nh[..., 0, 0] = outer(d2N1, N2)
            d2Nh[..., 1, 1] = outer(N1, d2N2)
            d2Nh[..., 0, 1] = d2Nh[..., 1, 0] = mixed
        # rational quotient
        w = self.weights[ids]
        wN = w * Nh
        W = wN.sum(axis=1)
        dW = np.einsum("pn,pna->pa", w, dNh)
        d2W = np.einsum("pn,pnab->pab", w, d2Nh)
        R = wN / W[:, None]
        dR = (w[:, :, None] * dNh - R[:, :, None] * dW[:, None, :]) / W[:, None, None]
        d2R = (
            w[:, :, None, None] * d2Nh
            - dR[:, :, :, None] * dW[:, None, None, :]
            - dR[:, :, None, :] * dW[:, None, :, None]
            - R[:, :, None, None] * d2W[:, None, :, :]
        ) / W[:, None, None, None]
        return ids, R, dR, d2R

    def basis(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return self._basis_in(self.locate(xi), xi)

    def bspline_basis(self, xi):
        """Non-rational basis (weights ignored), used for checks."""
        w, self.weights = self.weights, np.ones_like(self.weights)
        try:
            return self.basis(xi)
        finally:
            self.weights = w

    def sample_params(self):
        mids = []
        for lo, hi, _ in self.spans:
            pts = np.concatenate([lo, [hi[-1]], (lo + hi) / 2])
            mids.append(np.sort(pts))
        if self.param_dim == 1:
            return mids[0][:, None]
        g1, g2 = np.meshgrid(mids[0], mids[1], indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])


class HermitePatch(Patch):
    """C1 curve through a chain of nodes using two-node cubic Hermite elements.

    The nodal derivative of every node is not an independent unknown but a
    fixed linear combination of neighbouring node positions (central
    differences in the interior, one-sided second-order differences at the
    chain ends).  Every element therefore depends on a window of four
    consecutive nodes and the curve interpolates all nodes.
    """

    kind = "hermite2d"
    param_dim = 1

    def __init__(self, points, orientation=1):
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        if n < 3:
            raise ValueError("a Hermite chain needs at least 3 nodes")
        self.ref_points = pts
        self.dim = pts.shape[1]
        self.orientation = 1 if orientation >= 0 else -1
        self.n_elements = n - 1
        self.n_basis = min(4, n)
        self.bounds = np.array([[0.0, float(n - 1)]])
        # nodal derivative operator, per unit of the element-local coordinate
        D = np.zeros((n, n))
        D[0, :3] = [-3.0 / 4, 1.0, -1.0 / 4]
        D[-1, -3:] = [1.0 / 4, -1.0, 3.0 / 4]
        for A in range(1, n - 1):
            D[A, A - 1] = -0.25
            D[A, A + 1] = 0.25
        self.derivative_operator = D
        w = self.n_basis
        start = np.clip(np.arange(n - 1) - 1, 0, n - w)
        E = np.zeros((n - 1, 4, w))
        for e in range(n - 1):
            cols = start[e] + np.arange(w)
            E[e, 0, e - start[e]] = 1.0
            E[e, 1, e + 1 - start[e]] = 1.0
            E[e, 2] = D[e, cols]
            E[e, 3] = D[e + 1, cols]
        self._start = start
        self._coef = E

    def locate(self, xi):
        xi = np.atleast_2d(xi)
        return np.clip(np.floor(xi[:, 0]).astype(int), 0, self.n_elements - 1)

    def element_bounds(self, elem):
        return np.array([[float(elem), float(elem + 1)]])

    def _basis_in(self, elem, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        t = 2.0 * (xi[:, 0] - elem) - 1.0
        H, dH, d2H = hermite_basis(t)
        E = self._coef[elem]
        N = np.einsum("pk,pkn->pn", H, E)
        dN = 2.0 * np.einsum("pk,pkn->pn", dH, E)[:, :, None]
        d2N = 4.0 * np.einsum("pk,pkn->pn", d2H, E)[:, :, None, None]
        ids = self._start[elem][:, None] + np.arange(self.n_basis)
        return ids, N, dN, d2N

    def basis(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return self._basis_in(self.locate(xi), xi)

    def sample_params(self):
        return np.arange(0.0, self.n_elements + 0.5, 0.5)[:, None]


class LagrangePatch(Patch):
    """Piecewise linear chain (2D) or bilinear facet grid (3D).

    For a grid the nodes are an ``(n1 + 1, n2 + 1, dim)`` array flattened in C
    order.
    """

    kind = "lagrange"

    def __init__(self, points, orientation=1):
        pts = np.asarray(points, dtype=float)
        self.orientation = 1 if orientation >= 0 else -1
        if pts.ndim == 2:
            self.param_dim = 1
            self.grid = (len(pts),)
            self.n_el_dir = (len(pts) - 1,)
            self.n_basis = 2
        elif pts.ndim == 3:
            self.param_dim = 2
            self.grid = pts.shape[:2]
            self.n_el_dir = (pts.shape[0] - 1, pts.shape[1] - 1)
            self.n_basis = 4
        else:
            raise ValueError("points must be a chain or a grid")
        if min(self.n_el_dir) < 1:
            raise ValueError("need at least one element per direction")
        self.dim = pts.shape[-1]
        self.ref_points = pts.reshape(-1, self.dim)
        self.n_elements = int(np.prod(self.n_el_dir))
        self.bounds = np.array([[0.0, float(n)] for n in self.n_el_dir])

    def _elem_dir(self, xi):
        return np.stack([np.clip(np.floor(xi[:, k]).astype(int), 0, self.n_el_dir[k] - 1)
                         for k in range(self.param_dim)], axis=1)

    def locate(self, xi):
        ed = self._elem_dir(np.atleast_2d(xi))
        if self.param_dim == 1:
            return ed[:, 0]
        return ed[:, 0] * self.n_el_dir[1] + ed[:, 1]

    def element_bounds(self, elem):
        if self.param_dim == 1:
            ids = (elem,)
        else:
            ids = divmod(elem, self.n_el_dir[1])
        return np.array([[float(i), float(i + 1)] for i in ids])

    def _basis_in(self, elem, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.param_dim == 1:
            ed = elem[:, None]
            ids = ed + np.arange(2)
        else:
            e1, e2 = np.divmod(elem, self.n_el_dir[1])
            ed = np.column_stack([e1, e2])
            n2 = self.grid[1]
            ids = np.column_stack([e1 * n2 + e2, (e1 + 1) * n2 + e2,
                                   (e1 + 1) * n2 + e2 + 1, e1 * n2 + e2 + 1])
        t = 2.0 * (xi - ed) - 1.0
        N, dN, d2N = lagrange_basis(t)
        return ids, N, 2.0 * dN, 4.0 * d2N

    def basis(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return self._basis_in(self.locate(xi), xi)

    def sample_params(self):
        axes = [np.arange(0.0, n + 0.5, 0.5) for n in self.n_el_dir]
        if self.param_dim == 1:
            return axes[0][:, None]
        g1, g2 = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])


class RigidPlane(Patch):
    """Analytic rigid plane (3D) or line (2D): ``x = point + xi^a v_a``.

    ``normal`` selects the outward side; the frame normal is oriented to match.
    """

    kind = "rigid_plane"

    def __init__(self, point, tangents, normal=None):
        self.point = np.asarray(point, dtype=float)
        self.tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
        self.dim = len(self.point)
        self.param_dim = self.tangents.shape[0]
        if self.param_dim != self.dim - 1:
            raise ValueError("a plane in %dD needs %d spanning vectors" % (self.dim, self.dim - 1))
        self.ref_points = np.zeros((0, self.dim))
        self.bounds = np.array([[-np.inf, np.inf]] * self.param_dim)
        self.n_basis = 0
        self.n_elements = 1
        n = _raw_normal(self.tangents[None])[0]
        if np.linalg.norm(n) < 1e-14:
            raise GeometryError("degenerate plane tangents")
        self.orientation = 1
        if normal is not None and float(np.dot(n, normal)) < 0.0:
            self.orientation = -1

    def locate(self, xi):
        return np.zeros(len(np.atleast_2d(xi)), dtype=int)

    def element_bounds(self, elem):
        return self.bounds.copy()

    def basis(self, xi):
        P = len(np.atleast_2d(xi))
        s = self.param_dim
        return (np.zeros((P, 0), dtype=int), np.zeros((P, 0)), np.zeros((P, 0, s)),
                np.zeros((P, 0, s, s)))

    def evaluate(self, xi, X=None):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        P = len(xi)
        x = self.point + xi @ self.tangents
        a = np.broadcast_to(self.tangents, (P,) + self.tangents.shape).copy()
        da = np.zeros((P, self.param_dim, self.param_dim, self.dim))
        return x, a, da

    def project(self, x):
        """Exact foot-point parameters of points ``x (P, d)``."""
        V = self.tangents
        G = V @ V.T
        return np.linalg.solve(G, ((np.atleast_2d(x) - self.point) @ V.T).T).T

    def sample_params(self):
        return np.zeros((1, self.param_dim))


def nurbs_circle(radius=1.0, center=(0.0, 0.0), orientation=1):
    """Exact full circle as a closed quadratic NURBS curve (9 control points)."""
    c = np.asarray(center, dtype=float)
    r = float(radius)
    h = np.sqrt(0.5)
    pts = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1], [1, 0]],
                   dtype=float) * r + c
    w = np.array([1, h, 1, h, 1, h, 1, h, 1])
    U = [0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1]
    return NurbsPatch([2], [U], pts, w, orientation=orientation)


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------
def _raw_normal(a):
    """Unnormalized normal from tangents ``a (P, s, d)``."""
    if a.shape[-1] == 2:
        return np.stack([a[:, 0, 1], -a[:, 0, 0]], axis=-1)
    return np.cross(a[:, 0], a[:, 1])


@dataclass
class SurfaceFrame:
    """Local surface geometry at a batch of parametric points.

    Arrays carry a leading point axis.  ``a`` are the covariant tangents,
    ``a_dual`` the contravariant ones, ``da[:, a, b]`` the tangent derivatives
    ``a_{a,b}``, ``b`` the curvature components and ``J`` the surface stretch
    against the reference configuration.
    """

    xi: np.ndarray
    elem: np.ndarray
    x: np.ndarray
    a: np.ndarray
    n: np.ndarray
    a_cov: np.ndarray
    a_con: np.ndarray
    a_dual: np.ndarray
    b: np.ndarray
    J: np.ndarray
    da: np.ndarray

    @property
    def P_n(self):
        return np.einsum("pi,pj->pij", self.n, self.n)

    @property
    def P_tau(self):
        return np.einsum("pai,paj->pij", self.a, self.a_dual)

    def normal_part(self, v):
        return np.einsum("pd,pd->p", v, self.n)[:, None] * self.n

    def tangential_part(self, v):
        return v - self.normal_part(v)


def frame_from_tangents(xi, elem, x, a, da, orientation, A=None, scale=1.0):
    """Build a :class:`SurfaceFrame` from evaluated tangents.

    ``A`` are reference tangents for the stretch; omitted means J = 1.
    """
    nr = _raw_normal(a)
    area = np.linalg.norm(nr, axis=-1)
    if np.any(area <= 1e-14 * scale):
        raise GeometryError("degenerate surface tangents")
    n = orientation * nr / area[:, None]
    a_cov = np.einsum("pai,pbi->pab", a, a)
    a_con = np.linalg.inv(a_cov)
    a_dual = np.einsum("pab,pbi->pai", a_con, a)
    b = np.einsum("pi,pabi->pab", n, da)
    if A is None:
        J = np.ones(len(a))
    else:
        J = area / np.linalg.norm(_raw_normal(A), axis=-1)
    return SurfaceFrame(xi, elem, x, a, n, a_cov, a_con, a_dual, b, J, da)


def surface_frame(patch, xi, X=None):
    """Surface frame of ``patch`` at parameters ``xi (P, s)``.

    ``X`` are current control point positions (reference when omitted).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    x, a, da = patch.evaluate(xi, X)
    A = None if patch.is_rigid else patch.evaluate(xi)[1]
    scale = float(np.max(np.abs(a))) ** patch.param_dim if a.size else 1.0
    return frame_from_tangents(xi, patch.locate(xi), x, a, da, patch.orientation, A, scale)
