"""Quasi-static load stepping with a global Newton-Raphson loop.

Each load step prescribes boundary displacements, iterates bulk and contact
assembly to equilibrium and commits the contact histories once converged.
Failed steps are bisected.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bulk import assemble_bulk
from .contact import assemble_contact
from .errors import ConvergenceError, ElementInversionError, GeometryError, ProjectionError

log = logging.getLogger(__name__)

__all__ = ["Phase", "LoadSchedule", "Model", "StepRecord", "SolveReport", "Solver", "run",
           "reaction_forces"]

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class Phase:
    """Linear ramp of prescribed displacements over ``steps`` increments.

    ``targets`` maps a node set to ``{component: end value}``; components of
    constrained sets not listed keep their previous value.
    """

    steps: int
    targets: dict = field(default_factory=dict)
    friction: bool = True
    name: str = ""

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError("a phase needs at least one step")
        self.steps = int(self.steps)


@dataclass
class LoadSchedule:
    phases: list

    @property
    def total_steps(self):
        return sum(p.steps for p in self.phases)


class Model:
    """Everything the solver needs about one scene.

    Parameters
    ----------
    X : (n_nodes, d) reference coordinates of all bodies.
    meshes : list of BulkMesh.
    node_sets : dict name -> node ids.
    constraints : list of (set name, components) pairs; every listed
        component is a Dirichlet dof whose value follows the schedule.
    pairs : list of ContactPair (both directions for the two-half pass).
    """

    def __init__(self, X, meshes, node_sets, constraints, schedule, pairs=(), pass_mode="full",
                 E0=1.0, L0=1.0, reaction_sets=None, torque_point=None, surfaces=None, meta=None):
        self.X = np.asarray(X, dtype=float)
        self.dim = self.X.shape[1]
        self.meshes = list(meshes)
        self.node_sets = {k: np.asarray(v, dtype=int) for k, v in node_sets.items()}
        self.constraints = [(s, tuple(_AXES.get(c, c) for c in comps)) for s, comps in constraints]
        self.schedule = schedule
        self.pairs = list(pairs)
        if pass_mode not in ("full", "twohalf"):
            raise ValueError("pass must be 'full' or 'twohalf'")
        self.pass_mode = pass_mode
        self.E0, self.L0 = float(E0), float(L0)
        self.reaction_sets = list(reaction_sets or [s for s, _ in self.constraints])
        self.torque_point = np.zeros(3) if torque_point is None else np.resize(np.asarray(torque_point, float), 3)
        self.surfaces = surfaces or {}
        self.meta = meta or {}
        self.rotation_centers = {}
        for s, _ in self.constraints:
            if s not in self.node_sets:
                raise KeyError("unknown node set %r" % s)
        self.u = np.zeros(self.X.size)
        d = self.dim
        cdofs = []
        for s, comps in self.constraints:
            for c in comps:
                cdofs.append(self.node_sets[s] * d + c)
        self.cdofs = np.unique(np.concatenate(cdofs)) if cdofs else np.zeros(0, dtype=int)
        mask = np.ones(self.X.size, dtype=bool)
        mask[self.cdofs] = False
        self.fdofs = np.nonzero(mask)[0]

    @property
    def n_nodes(self):
        return len(self.X)

    def x(self, u=None):
        u = self.u if u is None else u
        return self.X + u.reshape(self.X.shape)

    def prescribed(self, targets):
        """Values of the constrained dofs for ``targets``.

        ``targets[set]`` holds translations ``x``, ``y``, ``z`` and optionally
        a rotation ``rz`` in degrees about the set's rotation centre.
        """
        v = np.zeros(self.X.size)
        d = self.dim
        for s, comps in targets.items():
            ids = self.node_sets[s]
            u = np.zeros((len(ids), d))
            if comps.get("rz", 0.0):
                th = np.radians(comps["rz"])
                c = self.rotation_centers.get(s)
                c = self.X[ids].mean(0) if c is None else np.asarray(c, dtype=float)[:d]
                rel = self.X[ids, :2] - c[:2]
                rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
                u[:, :2] = rel @ rot.T - rel
            for c, val in comps.items():
                if c != "rz":
                    u[:, _AXES.get(c, c)] += val
            v.reshape(-1, d)[ids] = u
        return v[self.cdofs]


def reaction_forces(model, residual, set_name, point=None, x=None):
    """Net force and torque (about ``point``) of the residual at the nodes of a set.

    Returns ``(force (3,), torque (3,))``.
    """
    if set_name not in model.node_sets:
        raise KeyError("unknown boundary set %r" % set_name)
    d = model.dim
    ids = model.node_sets[set_name]
    f = residual.reshape(-1, d)[ids]
    xs = (model.x() if x is None else x)[ids]
    F = np.zeros(3)
    F[:d] = f.sum(0)
    c = model.torque_point if point is None else np.resize(np.asarray(point, float), 3)
    r3 = np.zeros((len(ids), 3))
    f3 = np.zeros((len(ids), 3))
    r3[:, :d] = xs
    f3[:, :d] = f
    M = np.cross(r3 - c, f3).sum(0)
    return F, M


@dataclass
class StepRecord:
    step: int
    time: float
    phase: str
    iterations: int
    residual: float
    reactions: dict
    torque: dict
    dissipation: float
    min_point_dissipation: float
    n_active: int
    n_slip: int
    max_local_iterations: int
    max_local_residual: float
    imbalance: float
    bisections: int
    wall: float
    contact_force: dict = field(default_factory=dict)
    tangential_force: dict = field(default_factory=dict)
    residual_history: list = field(default_factory=list)

    @property
    def P(self):
        first = next(iter(self.reactions.values())) if self.reactions else np.zeros(3)
        return first

    @property
    def M_z(self):
        first = next(iter(self.torque.values())) if self.torque else np.zeros(3)
        return float(first[2])


@dataclass
class SolveReport:
    steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    converged: bool = True
    message: str = ""

    def column(self, name):
        return np.array([getattr(r, name) for r in self.steps])

    @property
    def total_dissipation(self):
        return float(sum(r.dissipation for r in self.steps))


class _StepFailed(Exception):
    pass


class Solver:
    """Global Newton driver for a :class:`Model`."""

    def __init__(self, model, rtol=1e-8, atol=None, max_iter=25, max_bisections=4, dtol=None,
                 on_step=None, snapshot_every=0):
        self.model = model
        self.rtol = rtol
        d = model.dim
        self.atol = 1e-10 * model.E0 * model.L0 ** (d - 1) if atol is None else atol
        # optional cap on the last increment, off by default
        self.dtol = None if dtol is None else dtol * model.L0
        self.max_iter = max_iter
        self.max_bisections = max_bisections
        self.on_step = on_step
        self.snapshot_every = snapshot_every
        self.mu_scale = 1.0
        self._iter_log = []

    # -- assembly --------------------------------------------------------------
    def assemble(self, u, tangent=True):
        """Residual (internal + contact) and tangent at displacement ``u``."""
        m = self.model
        x = m.x(u)
        R, K = assemble_bulk(m.meshes, x, tangent)
        ca = None
        if m.pairs:
            mu = None if self.mu_scale else 0.0
            ca = assemble_contact(m.pairs, x, m.pass_mode, tangent=tangent, mu=mu)
            R = R + ca.residual
            if tangent:
                K = K + ca.tangent
        return R, K, ca

    def _contact_imbalance(self, ca):
        """Relative action-reaction defect of the full-pass contact residual."""
        if ca is None or self.model.pass_mode != "full":
            return 0.0
        d = self.model.dim
        tot = ca.residual.reshape(-1, d).sum(0)
        # a rigid master carries the reaction of its slave
        for pair, pt in zip(self.model.pairs, ca.terms):
            if pair.master.is_rigid:
                tot -= np.einsum("q,qd->d", pt.weights, pt.T)
        scale = max(np.linalg.norm(ca.residual), 1e-300)
        return float(np.abs(tot).max() / scale) if np.linalg.norm(ca.residual) > 0 else 0.0

    def newton_iterate(self, u, K, R):
        """One linear solve on the free dofs; returns the new ``u`` and the increment."""
        f = self.model.fdofs
        Kff = K[f][:, f].tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                du = spla.spsolve(Kff, -R[f])
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise _StepFailed("singular tangent: %s" % exc)
        if not np.all(np.isfinite(du)):
            raise _StepFailed("non-finite increment")
        u = u.copy()
        u[f] += du
        return u, du

    def _solve_increment(self, uc_target):
        """Newton loop from the current state to new prescribed values."""
        m = self.model
        c, f = m.cdofs, m.fdofs
        u = m.u.copy()
        R, K, ca = self.assemble(u)
        duc = uc_target - u[c]
        rhs = -(R[f] + K[f][:, c] @ duc)
        ref = np.linalg.norm(rhs)
        u[c] = uc_target
        Kff = K[f][:, f].tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                du = spla.spsolve(Kff, rhs)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise _StepFailed("singular tangent: %s" % exc)
        u[f] += du
        hist = []
        imbalance = 0.0
        local_it, local_res = 0, 0.0
        for it in range(1, self.max_iter + 1):
            R, K, ca = self.assemble(u)
            r = float(np.linalg.norm(R[f]))
            hist.append(r)
            imbalance = max(imbalance, self._contact_imbalance(ca))
            if ca is not None:
                for st in ca.states:
                    sl = st.candidate & st.had_history
                    if sl.any():
                        local_it = max(local_it, int(st.local_iterations[sl].max()))
                        local_res = max(local_res, float(st.local_residual[sl].max()))
            if not np.isfinite(r):
                raise _StepFailed("non-finite residual")
            dnorm = float(np.abs(du).max()) if du.size else 0.0
            if r <= self.rtol * ref + self.atol and (self.dtol is None or dnorm <= self.dtol):
                return u, R, ca, it, r, hist, imbalance, local_it, local_res
            if r > 1e12 * max(ref, self.atol):
                raise _StepFailed("residual diverged")
            u, du = self.newton_iterate(u, K, R)
        raise _StepFailed("no convergence in %d iterations" % self.max_iter)

    # -- stepping --------------------------------------------------------------
    def _advance(self, uc_from, uc_to, depth, stats):
        m = self.model
        try:
            out = self._solve_increment(uc_to)
        except (_StepFailed, ElementInversionError, ProjectionError, GeometryError,
                np.linalg.LinAlgError) as exc:
            if depth >= self.max_bisections:
                raise ConvergenceError("step failed after %d bisections: %s" % (depth, exc))
            log.info("bisecting step (depth %d): %s", depth + 1, exc)
            stats["bisections"] += 1
            mid = 0.5 * (uc_from + uc_to)
            self._advance(uc_from, mid, depth + 1, stats)
            self._advance(mid, uc_to, depth + 1, stats)
            return
        u, R, ca, it, r, hist, imb, lit, lres = out
        m.u = u
        x = m.x()
        diss = 0.0
        if ca is not None:
            for pair, st in zip(m.pairs, ca.states):
                diss += float(pair.commit(x, st).sum())
        stats["iterations"] += it
        stats["residual"] = r
        stats["dissipation"] += diss
        stats["imbalance"] = max(stats["imbalance"], imb)
        stats["local_it"] = max(stats["local_it"], lit)
        stats["local_res"] = max(stats["local_res"], lres)
        stats["history"].extend(hist)
        stats["R"] = R
        stats["ca"] = ca

    def run(self):
        m = self.model
        report = SolveReport()
        uc = m.u[m.cdofs].copy()
        current = {}
        step = 0
        n_ph = len(m.schedule.phases)
        for ip, ph in enumerate(m.schedule.phases):
            start = {s: dict(v) for s, v in current.items()}
            for s, comps in ph.targets.items():
                current.setdefault(s, {})
                for cname, val in comps.items():
                    current[s][cname] = float(val)
            end = {s: dict(v) for s, v in current.items()}
            self.mu_scale = 1.0 if ph.friction else 0.0
            for k in range(1, ph.steps + 1):
                t0 = time.perf_counter()
                lam = k / ph.steps
                target = m.prescribed({
                    s: {c: (1 - lam) * start.get(s, {}).get(c, 0.0) + lam * v for c, v in comps.items()}
                    for s, comps in end.items()})
                stats = dict(iterations=0, residual=0.0, dissipation=0.0, imbalance=0.0,
                             local_it=0, local_res=0.0, history=[], bisections=0, R=None, ca=None)
                try:
                    self._advance(uc, target, 0, stats)
                except ConvergenceError as exc:
                    report.converged = False
                    report.message = str(exc)
                    return report
                uc = target
                step += 1
                report.steps.append(self._record(step, ip + k / ph.steps, ph.name, stats, t0))
                if self.snapshot_every and step % self.snapshot_every == 0:
                    report.snapshots.append((step, m.u.copy()))
                if self.on_step:
                    self.on_step(report.steps[-1])
        if n_ph == 0:
            report.message = "empty schedule"
        return report

    def _record(self, step, t, phase, stats, t0):
        m = self.model
        R = stats["R"]
        x = m.x()
        reac, torq = {}, {}
        for s in m.reaction_sets:
            reac[s], torq[s] = reaction_forces(m, R, s, x=x)
        n_act = n_slip = 0
        min_d = 0.0
        cforce, tforce = {}, {}
        if stats["ca"] is not None:
            for pair, st, pt in zip(m.pairs, stats["ca"].states, stats["ca"].terms):
                n_act += int(st.phi.sum())
                n_slip += int((st.phi & (st.omega == 1)).sum())
                min_d = min(min_d, float(pair.history.accumulated_dissipation.min()))
                cforce[pair.name] = np.einsum("q,qd->d", pt.weights, pt.T)
                act = np.nonzero(st.phi)[0]
                n = st.frame.n[act]
                Tt = pt.T - np.einsum("qd,qd->q", pt.T, n)[:, None] * n
                tforce[pair.name] = np.einsum("q,qd->d", pt.weights, Tt)
        return StepRecord(step, t, phase, stats["iterations"], stats["residual"], reac, torq,
                          stats["dissipation"], min_d, n_act, n_slip, stats["local_it"],
                          stats["local_res"], stats["imbalance"], stats["bisections"],
                          time.perf_counter() - t0, cforce, tforce, stats["history"])


def run(model, **kwargs):
    """Run the full load schedule of ``model``; see :class:`Solver` for options."""
    return Solver(model, **kwargs).run()
