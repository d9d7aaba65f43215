"""Acceptance criteria 1-10.

Every test prints one PASS/FAIL line (also collected in the terminal
summary).  Benchmark runs are shared between criteria through a module
cache so each scene is solved once per configuration.
"""
import numpy as np
import pytest
from scipy.interpolate import BSpline

from conftest import record_criterion, scene_path
from fricfem.contact import assemble_contact
from fricfem.geometry import (HermitePatch, LagrangePatch, NurbsPatch, RigidPlane, bernstein_eval,
                              bezier_extraction, surface_frame)
from fricfem.kinematics import closest_point_projection, sliding_point, sliding_point_flat_2d
from fricfem.rheology1d import Slider1D, step_1d
from fricfem.scene import load_scene
from fricfem.solver import Solver

BLOCK_MESHES = {"coarse": (8, 10), "medium": (16, 19), "fine": (32, 38)}
IRON_NU = (25, 50, 100)

_RUNS = {}


def _run(key, scene, overrides=(), pass_mode=None, steps=None):
    if key not in _RUNS:
        m = load_scene(scene_path(scene), list(overrides), pass_mode, steps)
        rep = Solver(m).run()
        _RUNS[key] = (m, rep)
    return _RUNS[key]


def block_run(mu=0.2, mesh="medium"):
    nx, ny = BLOCK_MESHES[mesh]
    ov = ["contact.mu=%r" % mu, "bodies.0.generator.nx=%d" % nx, "bodies.0.generator.ny=%d" % ny]
    return _run(("block", mu, mesh), "block2d.json", ov)


def halfcyl_run(pass_mode, n_u):
    return _run(("halfcyl", pass_mode, n_u), "halfcyl.json", pass_mode=pass_mode, steps=n_u)


def ironing_run(n_u=100):
    return _run(("ironing", n_u), "ironing2d.json", ["schedule.1.steps=%d" % n_u])


def twist_run():
    return _run(("twist",), "twist3d_coarse.json")


# -- 1 -------------------------------------------------------------------------
@pytest.mark.parametrize("mu", [0.2, 0.45])
def test_c01_coulomb_ratio(mu):
    m, rep = block_run(mu)
    assert sum(len(x.elements) for x in m.meshes) == 304
    rows = [s for s in rep.steps if s.phase == "slide" and s.n_active > 0 and s.n_slip == s.n_active]
    err = max(abs(abs(s.P[0] / s.P[1]) - mu) for s in rows) if rows else np.inf
    ok = rep.converged and len(rows) > 0 and err <= 1e-3
    record_criterion(1, ok, "block mu=%g: max |P_x/P_y - mu| = %.2e over %d fully sliding steps"
                     % (mu, err, len(rows)))
    assert ok


# -- 2 -------------------------------------------------------------------------
def _random_nurbs(rng, surface):
    p = int(rng.integers(2, 4))
    n = p + int(rng.integers(2, 5))
    U = np.concatenate([[0.0] * p, np.linspace(0, 1, n - p + 1), [1.0] * p])
    if surface:
        u = np.linspace(0, 1, n)
        G = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1)
        cp = np.concatenate([G, 0.12 * rng.standard_normal((n, n, 1))], axis=-1)
        return NurbsPatch([p, p], [U, U], cp, rng.uniform(0.7, 1.3, (n, n)))
    u = np.linspace(0, 1, n)
    cp = np.column_stack([u, 0.12 * rng.standard_normal(n)])
    return NurbsPatch([p], [U], cp, rng.uniform(0.7, 1.3, n))


def test_c02_frictionless_equivalence():
    rng = np.random.default_rng(2)
    worst, count = 0.0, 0
    for k in range(10):
        pat = _random_nurbs(rng, surface=bool(k % 2))
        s = pat.param_dim
        xi0 = rng.uniform(0.15, 0.85, (20, s))
        fr = surface_frame(pat, xi0)
        xk = fr.x + rng.uniform(-0.05, 0.05, (20, 1)) * fr.n
        g_prev = rng.standard_normal(xk.shape)
        guess = np.clip(xi0 + rng.uniform(-0.03, 0.03, xi0.shape), 0, 1)
        slide = sliding_point(xk, pat, None, g_prev, 0.0, guess)
        proj = closest_point_projection(xk, pat)
        assert slide.converged.all() and proj.converged.all()
        worst = max(worst, float(np.linalg.norm(slide.xi - proj.xi, axis=1).max()))
        count += len(xk)
    ok = count == 200 and worst <= 1e-10
    record_criterion(2, ok, "%d points on 10 random NURBS masters: max |xi_m - xi_p| = %.2e" % (count, worst))
    assert ok


# -- 3 -------------------------------------------------------------------------
def test_c03_flat_closed_form():
    rng = np.random.default_rng(3)
    line = RigidPlane([0.2, -0.1], [[0.8, 0.6]], normal=[-0.6, 0.8])
    t = np.array([0.8, 0.6])
    n = np.array([-0.6, 0.8])
    worst = 0.0
    for _ in range(100):
        xk = line.point + rng.uniform(-2, 2) * t - rng.uniform(0.001, 0.3) * n
        gh = rng.uniform(-1, 1) * t - rng.uniform(0.001, 0.3) * n
        mu = rng.uniform(0.0, 1.0)
        ref = sliding_point_flat_2d(xk[None], line, gh[None], mu)
        sol = sliding_point(xk[None], line, None, gh[None], mu, np.zeros((1, 1)))
        worst = max(worst, float(np.abs(line.evaluate(sol.xi)[0] - ref).max()))
    ok = worst <= 1e-12
    record_criterion(3, ok, "100 random samples on a rigid line: max deviation %.2e" % worst)
    assert ok


# -- 4 -------------------------------------------------------------------------
def _manufactured(pass_mode, shift):
    m = load_scene(scene_path("halfcyl.json"), pass_mode=pass_mode)
    upper = m.node_sets["upper"]
    x0 = m.X.copy()
    x0[upper] += [0.0, -0.03]
    A = assemble_contact(m.pairs, x0, pass_mode)
    for p, st in zip(m.pairs, A.states):
        p.commit(x0, st)
    x = x0.copy()
    x[upper] += [shift, -0.002]
    x += 1e-5 * np.random.default_rng(3).standard_normal(x.shape)
    return m, x


@pytest.mark.parametrize("pass_mode", ["full", "twohalf"])
@pytest.mark.parametrize("state,shift", [("stick", 1e-4), ("slip", 0.02)])
def test_c04_tangent_finite_differences(pass_mode, state, shift):
    m, x = _manufactured(pass_mode, shift)
    A = assemble_contact(m.pairs, x, pass_mode)
    omega = np.concatenate([st.omega[st.phi] for st in A.states])
    want = 0 if state == "stick" else 1
    assert omega.size > 0 and (omega == want).all()
    rng = np.random.default_rng(0)
    h = 1e-7
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal(x.shape)
        rp = assemble_contact(m.pairs, x + h * v, pass_mode, tangent=False).residual
        rm = assemble_contact(m.pairs, x - h * v, pass_mode, tangent=False).residual
        fd = (rp - rm) / (2 * h)
        worst = max(worst, float(np.linalg.norm(fd - A.tangent @ v.ravel()) / np.linalg.norm(fd)))
    ok = worst < 1e-5
    record_criterion(4, ok, "half cylinders, %s pass, %s (%d points): max FD error %.2e"
                     % (pass_mode, state, omega.size, worst))
    assert ok


# -- 5 -------------------------------------------------------------------------
def test_c05_dissipation():
    s, d = step_1d(Slider1D(100.0, 0.5, 1.0), (0.001, 0.0), 1.0)
    stick_ok = s.omega == 0 and d == 0.0
    s, d = step_1d(Slider1D(100.0, 0.5, 1.0), (0.1, 0.0), 1.0)
    slip_ok = s.omega == 1 and abs(np.linalg.norm(s.force) - 0.5) <= 1e-14 and abs(d - 0.0475) <= 1e-14
    runs = [block_run(0.2), block_run(0.45), halfcyl_run("full", 20), halfcyl_run("twohalf", 20),
            ironing_run(100), twist_run()]
    worst = np.inf
    for m, rep in runs:
        assert rep.converged
        floor = -1e-8 * m.E0 * m.L0 ** (m.dim - 1)
        low = min(r.min_point_dissipation for r in rep.steps)
        worst = min(worst, low - floor)
    ok = stick_ok and slip_ok and worst >= 0.0
    record_criterion(5, ok, "oracle stick/slip %s/%s; min per-point cumulative dissipation margin %.2e "
                     "over %d runs" % (stick_ok, slip_ok, worst, len(runs)))
    assert ok


# -- 6 -------------------------------------------------------------------------
def _pass_difference(n_u):
    mf, rf = halfcyl_run("full", n_u)
    mt, rt = halfcyl_run("twohalf", n_u)
    assert rf.converged and rt.converged
    name = mf.pairs[0].name
    Ff = rf.steps[-1].tangential_force[name]
    Ft = rt.steps[-1].tangential_force[name]
    return float(np.linalg.norm(Ft - Ff) / np.linalg.norm(Ff))


def test_c06_pass_agreement():
    d20 = _pass_difference(20)
    d200 = _pass_difference(200)
    ok = d200 <= 0.02 and d200 < d20
    record_criterion(6, ok, "net tangential force, two-half vs full: %.2f%% (n_u=20), %.2f%% (n_u=200)"
                     % (100 * d20, 100 * d200))
    assert ok


# -- 7 -------------------------------------------------------------------------
def test_c07_action_reaction():
    runs = {"block 0.2": block_run(0.2), "block 0.45": block_run(0.45),
            "half cylinders": halfcyl_run("full", 20), "ironing": ironing_run(100), "twist": twist_run()}
    worst = 0.0
    for m, rep in runs.values():
        assert rep.converged and m.pass_mode == "full"
        worst = max(worst, max(r.imbalance for r in rep.steps))
    ok = worst <= 1e-10
    record_criterion(7, ok, "max relative contact imbalance %.2e over %d full-pass runs" % (worst, len(runs)))
    assert ok


# -- 8 -------------------------------------------------------------------------
def _geometry_patches(rng):
    u = np.linspace(0, 1, 6)
    G = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1)
    grid = np.concatenate([G, 0.1 * rng.standard_normal((6, 6, 1))], axis=-1)
    chain = np.column_stack([np.linspace(0, 2, 7), 0.2 * np.sin(np.linspace(0, 3, 7))])
    U = [0, 0, 0, 0, 1, 2, 3, 3, 3, 3]
    return {
        "nurbs curve": NurbsPatch([3], [U], np.column_stack([np.arange(6.0), rng.standard_normal(6)]),
                                  rng.uniform(0.5, 1.5, 6)),
        "nurbs surface": NurbsPatch([2, 3], [[0, 0, 0, 1, 2, 3, 4, 4, 4], U], grid,
                                    rng.uniform(0.5, 1.5, (6, 6))),
        "hermite": HermitePatch(chain),
        "lagrange chain": LagrangePatch(chain),
        "lagrange grid": LagrangePatch(grid),
        "rigid plane": RigidPlane([0, 0, 0], [[1.0, 0.2, 0.0], [0.0, 1.0, 0.3]]),
    }


def test_c08_geometry_suite():
    rng = np.random.default_rng(8)
    worst = 0.0
    for name, pat in _geometry_patches(rng).items():
        lo, hi = pat.bounds[:, 0], pat.bounds[:, 1]
        lo = np.where(np.isfinite(lo), lo, -1.0)
        hi = np.where(np.isfinite(hi), hi, 1.0)
        xi = lo + (hi - lo) * rng.uniform(0, 1, (100, pat.param_dim))
        if not pat.is_rigid:
            _, N, dN, d2N = pat.basis(xi)
            worst = max(worst, np.abs(N.sum(1) - 1).max(), np.abs(dN.sum(1)).max(),
                        np.abs(d2N.sum(1)).max())
        fr = surface_frame(pat, xi)
        dual = np.einsum("pai,pbi->pab", fr.a_dual, fr.a)
        worst = max(worst, np.abs(dual - np.eye(pat.param_dim)).max(),
                    np.abs(np.einsum("pai,pi->pa", fr.a, fr.n)).max())
    # Bezier extraction against direct B-spline evaluation, uniform cubic knots
    U = np.concatenate([[0.0] * 3, np.arange(9.0), [8.0] * 3])
    C = bezier_extraction(U, 3)
    nb = len(U) - 4
    ext = 0.0
    for e in range(len(C)):
        t = rng.uniform(0, 1, 10)
        vals = bernstein_eval(3, t)[0] @ np.asarray(C[e]).T
        ref = BSpline(U, np.eye(nb), 3)(e + t)[:, e:e + 4]
        ext = max(ext, float(np.abs(vals - ref).max()))
    ok = worst <= 1e-12 and ext <= 1e-13
    record_criterion(8, ok, "partition of unity / dual basis max error %.2e; extraction vs B-spline %.2e"
                     % (worst, ext))
    assert ok


# -- 9 -------------------------------------------------------------------------
def test_c09_local_newton_robustness():
    m, rep = ironing_run(100)
    assert [len(x.elements) for x in m.meshes] == [168, 1280]
    slide = [s for s in rep.steps if s.phase == "slide"]
    its = max(s.max_local_iterations for s in slide)
    res = max(s.max_local_residual for s in slide)
    bis = sum(s.bisections for s in rep.steps)
    ok = rep.converged and len(slide) == 100 and its <= 20 and res <= 1e-10 and bis == 0
    record_criterion(9, ok, "ironing n_u=100: max local iterations %d, max |f| %.1e, bisections %d"
                     % (its, res, bis))
    assert ok


# -- 10 ------------------------------------------------------------------------
def _curve(rep, phase=None):
    rows = [s for s in rep.steps if phase is None or s.phase == phase]
    return np.array([s.time for s in rows]), np.array([s.P[:2] for s in rows])


def _l2_distance(a, b, n=2000):
    """L2 distance in pseudo time between the piecewise-linear interpolants of two curves."""
    (ta, Pa), (tb, Pb) = a, b
    t = np.linspace(max(ta[0], tb[0]), min(ta[-1], tb[-1]), n)
    diff = np.column_stack([np.interp(t, ta, Pa[:, k]) - np.interp(t, tb, Pb[:, k]) for k in (0, 1)])
    return float(np.sqrt(np.trapezoid(np.sum(diff ** 2, axis=1), t) / (t[-1] - t[0])))


def test_c10_convergence_trend():
    curves = [_curve(block_run(0.2, k)[1]) for k in BLOCK_MESHES]
    db = [_l2_distance(curves[0], curves[1]), _l2_distance(curves[1], curves[2])]
    ic = []
    for n in IRON_NU:
        rep = ironing_run(n)[1]
        assert rep.converged
        ic.append(_curve(rep, "slide"))
    di = [_l2_distance(ic[0], ic[1]), _l2_distance(ic[1], ic[2])]
    ok = db[1] < db[0] and di[1] < di[0]
    record_criterion(10, ok, "block mesh distances %.2e > %.2e; ironing n_u distances %.2e > %.2e"
                     % (db[0], db[1], di[0], di[1]))
    assert ok
