"""Result files: step table (CSV), VTK snapshots and run metadata (JSON).

CSV columns, in order::

    step, time, P_x, P_y, P_z, M_z, iterations, dissipation

``P`` is the reaction force on the first reaction set of the scene and
``M_z`` its moment about the scene's torque point.  ``time`` is the pseudo
time: phase index plus the fraction of the phase completed.  Rows use
RFC-4180 quoting with CRLF line ends and '.' as decimal separator.
"""
from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from .bulk import stress_invariant_field

CSV_COLUMNS = ["step", "time", "P_x", "P_y", "P_z", "M_z", "iterations", "dissipation"]

_VTK_CELL = {4: 9, 8: 12}   # bilinear quad, trilinear hex


def package_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


def _num(v):
    return repr(float(v))


def csv_row(rec):
    P = np.asarray(rec.P, dtype=float)
    P = np.concatenate([P, np.zeros(3 - len(P))]) if len(P) < 3 else P
    return [str(rec.step), _num(rec.time), _num(P[0]), _num(P[1]), _num(P[2]),
            _num(rec.M_z), str(rec.iterations), _num(rec.dissipation)]


def write_vtk(path, model, u=None, title="fricfem snapshot"):
    """Legacy ASCII VTK 3.0 unstructured grid of all bulk meshes."""
    d = model.dim
    u = model.u if u is None else u
    x = model.x(u)
    disp = (x - model.X)
    pts = np.zeros((model.n_nodes, 3))
    pts[:, :d] = model.X
    U = np.zeros((model.n_nodes, 3))
    U[:, :d] = disp
    I1 = stress_invariant_field(model.meshes, x, model.n_nodes, model.E0)
    cells = np.vstack([m.elements for m in model.meshes])
    nen = cells.shape[1]
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             "POINTS %d double" % len(pts)]
    lines += ["%.17g %.17g %.17g" % tuple(p) for p in pts]
    lines.append("CELLS %d %d" % (len(cells), len(cells) * (nen + 1)))
    lines += ["%d " % nen + " ".join(map(str, c)) for c in cells]
    lines.append("CELL_TYPES %d" % len(cells))
    lines += [str(_VTK_CELL[nen])] * len(cells)
    lines.append("POINT_DATA %d" % len(pts))
    lines.append("VECTORS displacement double")
    lines += ["%.17g %.17g %.17g" % tuple(v) for v in U]
    lines.append("SCALARS I1_over_E0 double 1")
    lines.append("LOOKUP_TABLE default")
    lines += ["%.17g" % v for v in I1]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


class ResultWriter:
    """Streams step rows to ``results.csv`` and snapshots to ``snapshot_XXXX.vtk``."""

    def __init__(self, out_dir, model, snapshot_every=0):
        self.out = Path(out_dir)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.out / "results.csv", "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise OSError("cannot write results to %s: %s" % (out_dir, exc))
        self.model = model
        self.snapshot_every = int(snapshot_every or 0)
        self._csv = csv.writer(self._fh)
        self._csv.writerow(CSV_COLUMNS)
        self._fh.flush()
        self.snapshots = []

    def __call__(self, rec):
        self._csv.writerow(csv_row(rec))
        self._fh.flush()
        if self.snapshot_every and rec.step % self.snapshot_every == 0:
            p = self.out / ("snapshot_%04d.vtk" % rec.step)
            write_vtk(p, self.model, title="step %d" % rec.step)
            self.snapshots.append(p)

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metadata(path, model, solver, report, extra=None):
    meta = {
        "scene": getattr(model, "scene", {}).get("name", ""),
        "scene_hash": getattr(model, "scene_hash", ""),
        "pass": model.pass_mode,
        "tolerances": {"rtol": solver.rtol, "atol": solver.atol, "max_iter": solver.max_iter,
                       "max_bisections": solver.max_bisections},
        "steps": len(report.steps),
        "converged": report.converged,
        "message": report.message,
        "total_dissipation": report.total_dissipation,
        "versions": {"fricfem": package_version(), "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "argv": sys.argv,
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")
    return meta


def write_results(report, model, out_dir, solver=None, snapshot_every=0):
    """Write CSV, optional snapshots and metadata for a finished run."""
    with ResultWriter(out_dir, model, 0) as w:
        for rec in report.steps:
            w(rec)
    out = Path(out_dir)
    for step, u in report.snapshots:
        write_vtk(out / ("snapshot_%04d.vtk" % step), model, u, title="step %d" % step)
    if solver is not None:
        write_metadata(out / "metadata.json", model, solver, report)
    return out
