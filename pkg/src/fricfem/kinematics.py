"""Contact kinematics: gaps, projections, sliding points and the stick/slip update.

Everything is batched over a leading axis of slave points.  Master normals are
oriented outward, so a slave point penetrates when ``g_e . n < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ProjectionError
from .geometry import SurfaceFrame, surface_frame

__all__ = [
    "GapState",
    "ContactHistory",
    "InteractionState",
    "closest_point_projection",
    "elastic_gap",
    "sliding_direction",
    "gtau_max",
    "sliding_jacobian",
    "sliding_point",
    "sliding_point_flat_2d",
    "update_interaction",
    "DegenerateTangentError",
]


class DegenerateTangentError(GeometryError):
    """The tangential projection of the previous interacting gap vanishes."""


def _sign(x):
    # sign(0) = +1 keeps grazing contact deterministic
    return np.where(x >= 0.0, 1.0, -1.0)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


@dataclass
class GapState:
    """Elastic gap at master parameters ``xi`` and its normal/tangential split."""

    g_e: np.ndarray
    g_n: np.ndarray
    g_tau: np.ndarray
    xi: np.ndarray
    frame: SurfaceFrame
    g_tau_max: np.ndarray | None = None
    tau: np.ndarray | None = None


@dataclass
class ContactHistory:
    """Committed per-quadrature-point contact record.

    ``xi_hat`` is NaN where no interacting point is stored.
    """

    xi_hat: np.ndarray
    active: np.ndarray
    omega: np.ndarray
    accumulated_dissipation: np.ndarray
    master: str = ""

    @classmethod
    def empty(cls, n_points, param_dim, master=""):
        return cls(
            xi_hat=np.full((n_points, param_dim), np.nan),
            active=np.zeros(n_points, dtype=bool),
            omega=np.zeros(n_points, dtype=np.int8),
            accumulated_dissipation=np.zeros(n_points),
            master=master,
        )

    def copy(self):
        return ContactHistory(self.xi_hat.copy(), self.active.copy(), self.omega.copy(),
                              self.accumulated_dissipation.copy(), self.master)

    @property
    def available(self):
        return ~np.isnan(self.xi_hat[:, 0])


def elastic_gap(x_k, patch, xi, X=None):
    """``g_e = x_k - x(xi)`` split with the projectors of the frame at ``xi``."""
    x_k = np.atleast_2d(x_k)
    frame = surface_frame(patch, xi, X)
    g = x_k - frame.x
    gn = frame.normal_part(g)
    return GapState(g, gn, g - gn, frame.xi, frame)


def sliding_direction(g_hat_prev, frame, tol=1e-10):
    """Unit direction of ``P_tau g_hat_prev`` at the current frame.

    Returns ``(tau, degenerate)``; ``tau`` is zero where the projection has
    norm ``<= tol`` (``tol`` is an absolute length, 1e-10 L_ref by default).
    """
    v = frame.tangential_part(np.atleast_2d(g_hat_prev))
    nv = np.linalg.norm(v, axis=-1)
    degenerate = nv <= tol
    tau = np.zeros_like(v)
    ok = ~degenerate
    tau[ok] = v[ok] / nv[ok, None]
    return tau, degenerate


def gtau_max(g_n, mu, tau):
    """Coulomb bound ``mu |g_n| tau``."""
    g_n = np.asarray(g_n, dtype=float)
    return np.asarray(mu)[..., None] * np.linalg.norm(g_n, axis=-1)[..., None] * np.asarray(tau)


@dataclass
class SlidingJacobian:
    """Local quantities of the sliding-point equations at one set of points.

    ``K[:, a, b] = d f_a / d xi^b``; ``c_vec``, ``d_vec`` and ``m_vec`` are the
    vectors ``c_a``, ``d_a^b`` and ``m_a`` used for the linearization.
    """

    f: np.ndarray
    K: np.ndarray
    g_e: np.ndarray
    g_max: np.ndarray
    tau: np.ndarray
    c_vec: np.ndarray
    d_vec: np.ndarray
    m_vec: np.ndarray


def sliding_jacobian(frame, x_k, g_hat_prev, mu, tol=1e-300):
    """Residual ``f_a = (g_e - g_max) . a_a`` and its parametric Jacobian."""
    a, ad, n, da = frame.a, frame.a_dual, frame.n, frame.da
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (len(a),))
    g = x_k - frame.x
    g_en = _dot(g, n)
    sg = _sign(g_en)
    gn_abs = np.abs(g_en)
    v = g_hat_prev - _dot(g_hat_prev, n)[:, None] * n
    vn = np.linalg.norm(v, axis=-1)
    safe = vn > tol
    tau = np.zeros_like(v)
    tau[safe] = v[safe] / vn[safe, None]
    mu = np.where(safe, mu, 0.0)
    g_max = (mu * gn_abs)[:, None] * tau
    t_lo = np.einsum("pd,pad->pa", tau, a)      # tau_a
    t_up = np.einsum("pd,pad->pa", tau, ad)     # tau^a
    f = np.einsum("pd,pad->pa", g - g_max, a)
    c_vec = a - (mu * sg)[:, None, None] * t_lo[:, :, None] * n[:, None, :]
    g_up = np.einsum("pd,pad->pa", g, ad)       # g^a
    ratio = np.where(safe, mu * gn_abs / np.where(safe, vn, 1.0), 0.0)
    s = a.shape[1]
    proj = np.eye(s)[None] - t_lo[:, :, None] * t_up[:, None, :]
    ghn = _dot(g_hat_prev, n)[:, None] * n
    d_vec = (ratio[:, None, None, None] * proj[:, :, :, None] * ghn[:, None, None, :]
             - (mu * sg)[:, None, None, None] * t_lo[:, :, None, None] * n[:, None, None, :]
             * g_up[:, None, :, None])
    K = (-np.einsum("pad,pbd->pab", c_vec, a)
         + np.einsum("pd,pabd->pab", g - g_max, da)
         - np.einsum("pagd,pgbd->pab", d_vec, da))
    m_vec = ratio[:, None, None] * (a - np.einsum("pa,pb,pbd->pad", t_lo, t_lo, ad))
    return SlidingJacobian(f, K, g, g_max, tau, c_vec, d_vec, m_vec)


@dataclass
class LocalSolve:
    """Outcome of a batched local Newton solve."""

    xi: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    on_boundary: np.ndarray
    degenerate: np.ndarray | None = None
    log: list = field(default_factory=list)


def _newton_step(K, f):
    try:
        return -np.linalg.solve(K, f[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return -np.array([np.linalg.lstsq(k, ff, rcond=None)[0] for k, ff in zip(K, f)])


def _local_newton(patch, X, x_k, xi0, g_hat_prev, mu, max_iter, L_ref, log=False):
    """Newton iteration on ``f_a = (g_e - g_max) . a_a = 0`` for all points.

    With ``mu = 0`` this is the closest-point projection.  Steps leaving the
    parameter domain are halved (at most five times) and then clipped.
    Components sitting on a bound whose Newton step points outward are frozen
    and the rest of the system is solved on that edge; such points, and points
    clipped without moving, are flagged ``on_boundary``.
    """
    P, s = xi0.shape
    xi = patch.clip(xi0.astype(float).copy())
    conv = np.zeros(P, dtype=bool)
    bnd = np.zeros(P, dtype=bool)
    its = np.zeros(P, dtype=int)
    res = np.full(P, np.inf)
    history = []
    tol_f = 1e-13 * L_ref
    act = np.arange(P)
    for it in range(max_iter + 1):
        if act.size == 0:
            break
        fr = surface_frame(patch, xi[act], X)
        jac = sliding_jacobian(fr, x_k[act], g_hat_prev[act], mu[act])
        f = jac.f
        na = np.linalg.norm(fr.a, axis=-1)
        r = np.max(np.abs(f), axis=1)
        res[act] = r
        if log:
            history.append(r.copy())
        K = jac.K
        dxi = _newton_step(K, f)
        # components pinned on the domain boundary with an outward step are frozen
        cur = xi[act]
        bnd[act] = False
        lo, hi = patch.bounds[:, 0], patch.bounds[:, 1]
        eps = 1e-12 * (1.0 + np.abs(cur))
        fixed = ((cur <= lo + eps) & (dxi < 0)) | ((cur >= hi - eps) & (dxi > 0))
        if fixed.any():
            rows = np.nonzero(fixed.any(axis=1))[0]
            Kr, fr_ = K[rows].copy(), f[rows].copy()
            fx = fixed[rows]
            for j in range(s):
                m = fx[:, j]
                Kr[m, j, :] = 0.0
                Kr[m, :, j] = 0.0
                Kr[m, j, j] = 1.0
                fr_[m, j] = 0.0
            dxi[rows] = _newton_step(Kr, fr_)
            f = np.where(fixed, 0.0, f)
            bnd[act[rows]] = True
        done = np.all(np.abs(f) <= tol_f * na, axis=1)
        if it == max_iter:
            break
        tiny = np.linalg.norm(dxi * na, axis=1) <= 1e-15 * L_ref
        done |= tiny
        conv[act[done]] = True
        keep = ~done
        act, dxi, cur = act[keep], dxi[keep], xi[act[keep]]
        if act.size == 0:
            break
        its[act] += 1
        trial = cur + dxi
        lam = np.ones(len(act))
        for _ in range(5):
            out = ~patch.inside(trial)
            if not out.any():
                break
            lam[out] *= 0.5
            trial = cur + lam[:, None] * dxi
        clipped = patch.clip(trial)
        was_clipped = np.any(clipped != trial, axis=1)
        stuck = was_clipped & np.all(np.abs(clipped - cur) <= 1e-14 * (1.0 + np.abs(cur)), axis=1)
        conv[act[stuck]] = True
        bnd[act[stuck]] = True
        xi[act] = clipped
        act = act[~stuck]
    return LocalSolve(xi, conv, its, res, bnd, None, history)


def closest_point_projection(x_k, patch, X=None, guess=None, max_iter=30, L_ref=1.0):
    """Foot points ``xi_p`` of slave points ``x_k (P, d)`` on ``patch``.

    Newton iteration on ``g_e . a_a = 0`` from ``guess`` (or the nearest
    patch sample).  Points that fail are retried from a deterministic grid of
    5 seeds per direction; the converged candidate with the shortest gap wins.
    Raises :class:`ProjectionError` if a point still fails.
    """
    x_k = np.atleast_2d(np.asarray(x_k, dtype=float))
    P = len(x_k)
    s = patch.param_dim
    if patch.kind == "rigid_plane":
        xi = patch.project(x_k)
        return LocalSolve(xi, np.ones(P, bool), np.zeros(P, int), np.zeros(P), np.zeros(P, bool))
    if guess is None:
        seeds = patch.sample_params()
        xs = patch.evaluate(seeds, X)[0]
        d2 = ((x_k[:, None, :] - xs[None]) ** 2).sum(-1)
        guess = seeds[np.argmin(d2, axis=1)]
    guess = np.atleast_2d(np.asarray(guess, dtype=float))
    zeros = np.zeros(P)
    dummy = np.zeros_like(x_k)
    out = _local_newton(patch, X, x_k, guess, dummy, zeros, max_iter, L_ref)
    bad = np.nonzero(~out.converged)[0]
    for p in bad:
        axes = [np.linspace(lo, hi, 5) for lo, hi in patch.bounds]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, s)
        n = len(grid)
        trial = _local_newton(patch, X, np.repeat(x_k[p:p + 1], n, 0), grid,
                              np.zeros((n, x_k.shape[1])), np.zeros(n), max_iter, L_ref)
        ok = np.nonzero(trial.converged)[0]
        if ok.size == 0:
            raise ProjectionError("closest-point projection failed for point %d" % p)
        xs = patch.evaluate(trial.xi[ok], X)[0]
        best = ok[np.argmin(np.linalg.norm(xs - x_k[p], axis=1))]
        out.xi[p] = trial.xi[best]
        out.converged[p] = True
        out.on_boundary[p] = trial.on_boundary[best]
        out.iterations[p] += trial.iterations[best]
        out.residual[p] = trial.residual[best]
    return out


def sliding_point(x_k, patch, X, g_hat_prev, mu, guess, max_iter=20, L_ref=1.0, log=False):
    """Solve ``(g_e - mu |g_n| tau) . a_a = 0`` for the sliding point ``xi_m``.

    Warm-started from ``guess`` (normally the previous interacting point).
    Points whose tangential trial direction is degenerate are solved with
    ``mu = 0``.  Unconverged points are restarted once from the closest-point
    projection; the result still carries ``converged = False`` if that fails.
    """
    x_k = np.atleast_2d(np.asarray(x_k, dtype=float))
    g_hat_prev = np.atleast_2d(np.asarray(g_hat_prev, dtype=float))
    P = len(x_k)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (P,)).copy()
    guess = np.atleast_2d(np.asarray(guess, dtype=float))
    fr0 = surface_frame(patch, patch.clip(guess), X)
    _, degenerate = sliding_direction(g_hat_prev, fr0, tol=1e-10 * L_ref)
    mu[degenerate] = 0.0
    out = _local_newton(patch, X, x_k, guess, g_hat_prev, mu, max_iter, L_ref, log=log)
    out.degenerate = degenerate
    bad = np.nonzero(~out.converged)[0]
    if bad.size:
        proj = closest_point_projection(x_k[bad], patch, X, L_ref=L_ref)
        retry = _local_newton(patch, X, x_k[bad], proj.xi, g_hat_prev[bad], mu[bad], max_iter, L_ref)
        out.xi[bad] = retry.xi
        out.converged[bad] = retry.converged
        out.on_boundary[bad] = retry.on_boundary
        out.iterations[bad] += retry.iterations
        out.residual[bad] = retry.residual
    return out


def sliding_point_flat_2d(x_k, plane, g_hat_prev, mu):
    """Closed-form sliding point on a rigid line in 2D.

    With the plane coordinate ``s`` along the unit tangent, ``g_n = g_e . n``
    and the previous gap components ``g_hat_n``, ``g_hat_tau``::

        s_m = s_k - mu * sign(g_hat_n) / sign(g_hat_tau) * g_n

    Returns the position ``x_m``.  Assumes ``g_n`` and ``g_hat_n`` share their
    sign (both penetrating or both separated).
    """
    x_k = np.atleast_2d(np.asarray(x_k, dtype=float))
    g_hat_prev = np.atleast_2d(np.asarray(g_hat_prev, dtype=float))
    t = plane.tangents[0] / np.linalg.norm(plane.tangents[0])
    n = surface_frame(plane, np.zeros((1, 1))).n[0]
    gh_t = g_hat_prev @ t
    if np.any(gh_t == 0.0):
        raise DegenerateTangentError("previous gap has no tangential component")
    gh_n = g_hat_prev @ n
    rel = x_k - plane.point
    s_k = rel @ t
    g_n = rel @ n
    s_m = s_k - np.asarray(mu) * _sign(gh_n) / np.sign(gh_t) * g_n
    return plane.point + s_m[:, None] * t


@dataclass
class InteractionState:
    """Result of the stick/slip update for a batch of slave points."""

    phi: np.ndarray
    omega: np.ndarray
    xi_hat: np.ndarray
    xi_prev: np.ndarray
    g_hat: np.ndarray
    g_prev: np.ndarray
    mu_used: np.ndarray
    frame: SurfaceFrame
    leaving: np.ndarray
    local_iterations: np.ndarray
    local_residual: np.ndarray
    had_history: np.ndarray
    candidate: np.ndarray

    def history(self, previous=None):
        """New committed record: interacting points where active, else cleared."""
        P, s = self.xi_hat.shape
        xi = np.where(self.phi[:, None], self.xi_hat, np.nan)
        acc = np.zeros(P) if previous is None else previous.accumulated_dissipation.copy()
        master = "" if previous is None else previous.master
        return ContactHistory(xi, self.phi.copy(), self.omega.copy(), acc, master)


def update_interaction(x_k, patch, X, xi_hist, mu, L_ref=1.0):
    """Stick/slip decision and interacting point for every slave point.

    ``xi_hist`` holds the committed interacting points (NaN where absent).
    Follows the per-quadrature-point logic of the global loop: a missing
    history point is initialized with the closest projection and treated
    frictionlessly; a trial below the Coulomb bound sticks to the previous
    point; otherwise the sliding point is solved and the bound re-tested
    there.  Frictionless candidates (``mu = 0``) always take the sliding
    branch, whose sliding point is the closest projection.
    """
    x_k = np.atleast_2d(np.asarray(x_k, dtype=float))
    P = len(x_k)
    s = patch.param_dim
    xi_hist = np.atleast_2d(np.asarray(xi_hist, dtype=float)).reshape(P, s)
    has = ~np.isnan(xi_hist[:, 0])
    mu_p = np.where(has, np.broadcast_to(np.asarray(mu, dtype=float), (P,)), 0.0)
    xi_n = xi_hist.copy()
    leaving = np.zeros(P, dtype=bool)
    iters = np.zeros(P, dtype=int)
    resid = np.zeros(P)
    if (~has).any():
        proj = closest_point_projection(x_k[~has], patch, X, L_ref=L_ref)
        xi_n[~has] = proj.xi
        leaving[~has] = proj.on_boundary & (proj.residual > 1e-10 * L_ref)
        iters[~has] = proj.iterations
        resid[~has] = proj.residual

    fr_n = surface_frame(patch, xi_n, X)
    g_prev = x_k - fr_n.x
    gn_prev = _dot(g_prev, fr_n.n)
    gt_prev = np.linalg.norm(g_prev - gn_prev[:, None] * fr_n.n, axis=1)
    stick = gt_prev < mu_p * np.abs(gn_prev)

    phi = np.zeros(P, dtype=bool)
    omega = np.zeros(P, dtype=np.int8)
    xi_hat = xi_n.copy()
    mu_used = mu_p.copy()
    phi[stick] = gn_prev[stick] < 0.0

    cand = np.nonzero(~stick)[0]
    if cand.size:
        sl = sliding_point(x_k[cand], patch, X, g_prev[cand], mu_p[cand], xi_n[cand], L_ref=L_ref)
        if not sl.converged.all():
            raise ProjectionError("sliding-point solve did not converge")
        mu_c = np.where(sl.degenerate, 0.0, mu_p[cand])
        mu_used[cand] = mu_c
        fr_m = surface_frame(patch, sl.xi, X)
        gm_n = _dot(x_k[cand] - fr_m.x, fr_m.n)
        off = sl.on_boundary & (sl.residual > 1e-10 * L_ref)
        leaving[cand] |= off
        phi[cand] = (gm_n < 0.0) & ~off
        slip = (mu_c == 0.0) | ~(gt_prev[cand] <= mu_c * np.abs(gm_n))
        omega[cand] = slip.astype(np.int8)
        xi_hat[cand] = np.where(slip[:, None], sl.xi, xi_n[cand])
        iters[cand] += sl.iterations
        resid[cand] = sl.residual
    phi &= ~leaving
    frame = surface_frame(patch, xi_hat, X)
    g_hat = x_k - frame.x
    candidate = np.zeros(P, dtype=bool)
    candidate[cand] = True
    return InteractionState(phi, omega, xi_hat, xi_n, g_hat, g_prev, mu_used, frame, leaving,
                            iters, resid, has, candidate)
