"""Quasi-static finite element solver for frictional contact between
deformable bodies, with a penalty law and a sliding-point friction update.

Submodules: ``geometry`` (surface patches), ``kinematics`` (projections and
sliding points), ``rheology1d``, ``contact``, ``bulk``, ``solver``,
``scene``, ``output`` and ``cli``.
"""
import os as _os

_n = _os.environ.get("FRICFEM_THREADS")
if _n:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _n)

__version__ = "0.1.0"
