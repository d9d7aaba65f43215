import numpy as np
import pytest

from fricfem.geometry import HermitePatch, NurbsPatch, RigidPlane, nurbs_circle, surface_frame
from fricfem.kinematics import (DegenerateTangentError, closest_point_projection, elastic_gap,
                                gtau_max, sliding_direction, sliding_point, sliding_point_flat_2d,
                                update_interaction)


def wavy_surface(rng, n=5, p=3):
    U = np.concatenate([[0.0] * p, np.linspace(0, 1, n - p + 1), [1.0] * p])
    u = np.linspace(0, 1, n)
    G = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1)
    z = 0.15 * rng.standard_normal((n, n))
    cp = np.concatenate([G, z[..., None]], axis=-1)
    w = rng.uniform(0.8, 1.2, (n, n))
    return NurbsPatch([p, p], [U, U], cp, w)


PLANE3 = RigidPlane([0, 0, 0], [[1, 0, 0], [0, 1, 0]], normal=[0, 0, 1])
LINE = RigidPlane([0.0, 0.0], [[1.0, 0.0]], normal=[0.0, 1.0])


def test_projection_on_plane():
    r = closest_point_projection([[0.3, 0.7, 1.0]], PLANE3)
    assert np.allclose(PLANE3.evaluate(r.xi)[0], [[0.3, 0.7, 0.0]])


def test_projection_outside_circle():
    c = nurbs_circle(1.0)
    r = closest_point_projection([[2.0, 0.0]], c)
    assert np.allclose(c.evaluate(r.xi)[0], [[1.0, 0.0]], atol=1e-12)


def test_projection_on_random_nurbs_beats_sampling(rng):
    pat = wavy_surface(rng)
    xi0 = rng.uniform(0.2, 0.8, (20, 2))
    fr = surface_frame(pat, xi0)
    xk = fr.x + rng.uniform(-0.05, 0.05, (20, 1)) * fr.n
    r = closest_point_projection(xk, pat)
    assert r.converged.all()
    g = elastic_gap(xk, pat, r.xi)
    assert np.abs(np.einsum("pd,pad->pa", g.g_e, g.frame.a)).max() < 1e-10
    s = np.linspace(0, 1, 100)
    S = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
    xs = pat.evaluate(S)[0]
    brute = np.min(np.linalg.norm(xk[:, None] - xs[None], axis=-1), axis=1)
    assert np.all(np.linalg.norm(g.g_e, axis=1) <= brute + 1e-12)


def test_projection_beyond_edge_lands_on_edge():
    U = [0, 0, 1, 1]
    g = np.array([[[0, 0, 0], [0, 1, 0]], [[1, 0, 0], [1, 1, 0]]], dtype=float)
    pat = NurbsPatch([1, 1], [U, U], g)
    r = closest_point_projection([[1.5, 0.4, 0.2]], pat)
    assert r.converged.all() and r.on_boundary.all()
    assert np.allclose(r.xi, [[1.0, 0.4]])


def test_elastic_gap_split():
    g = elastic_gap([[0.2, 0.0, -0.05]], PLANE3, [[0.0, 0.0]])
    assert np.allclose(g.g_n, [[0, 0, -0.05]])
    assert np.allclose(g.g_tau, [[0.2, 0, 0]])
    g0 = elastic_gap([[0.2, 0.1, 0.0]], PLANE3, [[0.2, 0.1]])
    assert np.allclose(g0.g_e, 0.0)
    c = nurbs_circle(1.0)
    gc = elastic_gap([[0.3, 1.4]], c, [[0.3]])
    assert np.allclose(gc.g_n + gc.g_tau, gc.g_e, atol=1e-14)


def test_sliding_direction():
    fr = surface_frame(PLANE3, [[0.0, 0.0]])
    tau, deg = sliding_direction([[1.0, 0.0, 1.0]], fr)
    assert np.allclose(tau, [[1, 0, 0]]) and not deg.any()
    tau, deg = sliding_direction([[0.0, 3.0, 0.0]], fr)
    assert np.allclose(tau, [[0, 1, 0]])
    _, deg = sliding_direction([[0.0, 0.0, -1.0]], fr)
    assert deg.all()


def test_gtau_max():
    tau = np.array([[1.0, 0, 0]])
    gn = np.array([[0, 0, -0.1]])
    assert np.allclose(gtau_max(gn, 0.0, tau), 0.0)
    assert np.allclose(gtau_max(gn, 0.5, tau), [[0.05, 0, 0]])
    assert np.allclose(gtau_max(2 * gn, 0.5, tau), 2 * gtau_max(gn, 0.5, tau))


def test_flat_closed_form():
    xm = sliding_point_flat_2d([[1.0, -0.1]], LINE, [[0.3, -0.02]], 0.5)
    assert np.allclose(xm, [[0.95, 0.0]])
    xm0 = sliding_point_flat_2d([[1.0, -0.1]], LINE, [[0.3, -0.02]], 0.0)
    assert np.allclose(xm0, [[1.0, 0.0]])
    with pytest.raises(DegenerateTangentError):
        sliding_point_flat_2d([[1.0, -0.1]], LINE, [[0.0, -0.02]], 0.5)


def test_sliding_point_general_on_line():
    s = sliding_point([[1.0, -0.1]], LINE, None, [[0.3, -0.02]], 0.5, [[0.0]])
    assert np.allclose(LINE.evaluate(s.xi)[0], [[0.95, 0.0]], atol=1e-12)


def test_sliding_point_quadratic_convergence():
    c = nurbs_circle(1.0)
    s = sliding_point([[0.3, 0.9]], c, None, [[0.2, -0.1]], 0.4, [[0.3]], log=True)
    assert s.converged.all()
    r = np.array([float(v[0]) for v in s.log])
    assert r[-1] < 1e-10
    big = r[r > 1e-13]
    assert len(big) >= 3
    # error ratio behaves quadratically: log r_{k+1} / log r_k ~ 2
    e = np.log(big[-3:])
    assert (e[2] - e[1]) / (e[1] - e[0]) > 1.6


def test_mu_zero_sliding_point_is_projection():
    c = nurbs_circle(1.0)
    xk = np.array([[0.4, 1.1], [-0.9, 0.2]])
    s = sliding_point(xk, c, None, [[0.3, 0.1], [0.1, 0.2]], 0.0, [[0.2], [0.45]])
    p = closest_point_projection(xk, c, guess=[[0.2], [0.45]])
    assert np.allclose(s.xi, p.xi, atol=1e-10)


def _line_master():
    # chain runs right to left so the outward normal points to +y
    pts = np.column_stack([np.linspace(2, -2, 9), np.zeros(9)])
    return HermitePatch(pts)


def test_separated_points_are_inactive():
    m = _line_master()
    st = update_interaction([[0.1, 0.2]], m, None, [[np.nan]], 0.3)
    assert not st.phi.any()
    assert st.history().available.sum() == 0


def test_first_touch_is_frictionless_projection():
    m = _line_master()
    xk = np.array([[0.13, -0.01]])
    st = update_interaction(xk, m, None, [[np.nan]], 0.3)
    assert st.phi.all() and st.mu_used[0] == 0.0
    assert np.allclose(m.evaluate(st.xi_hat)[0], [[0.13, 0.0]], atol=1e-12)


def test_stick_keeps_anchor():
    m = _line_master()
    hist = np.array([[3.48]])  # x = 0.26
    st = update_interaction([[0.261, -0.01]], m, None, hist, 0.3)
    assert st.phi.all() and st.omega[0] == 0
    assert np.allclose(st.xi_hat, hist)


def test_slip_moves_to_coulomb_bound():
    m = _line_master()
    hist = np.array([[3.48]])
    st = update_interaction([[0.4, -0.01]], m, None, hist, 0.3)
    assert st.phi.all() and st.omega[0] == 1
    g = st.g_hat[0]
    assert abs(g[0]) == pytest.approx(0.3 * abs(g[1]), rel=1e-10)
    assert g[0] > 0
