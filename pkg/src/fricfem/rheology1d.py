"""Spring-slider friction element in the plane.

A block at ``x_k`` is tied by a linear spring of stiffness ``eps`` to a slider
resting on a rough floor.  The slider sits at ``x_o + g_s`` and the spring
stretch is the elastic gap ``g_e = x_k - x_o - g_s``.  Used as an oracle for
the stick/slip logic of the surface formulation.
"""
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Slider1D:
    eps: float
    mu: float
    p: float
    g_e: tuple = (0.0, 0.0)
    g_s: tuple = (0.0, 0.0)
    x_o: tuple = (0.0, 0.0)
    omega: int = 0

    @property
    def x_k(self):
        return np.add(np.add(self.x_o, self.g_s), self.g_e)

    @property
    def force(self):
        """Spring force ``t = eps g_e``."""
        return self.eps * np.asarray(self.g_e, dtype=float)


def free_energy_1d(s):
    """Stored energy per area, ``eps/2 |g_e|^2``."""
    if s.eps < 0:
        raise ValueError("eps must be nonnegative")
    g = np.asarray(s.g_e, dtype=float)
    return 0.5 * s.eps * float(g @ g)


def step_1d(s, x_k_new, p_new):
    """Move the block to ``x_k_new`` under pressure ``p_new``.

    Returns the updated slider and the dissipation of the step.  The slip
    test uses the end-of-step pressure.
    """
    if p_new < 0:
        raise ValueError("pressure must be nonnegative")
    anchor = np.add(s.x_o, s.g_s)
    trial = np.asarray(x_k_new, dtype=float) - anchor
    bound = s.mu * p_new
    if s.mu > 0 and s.eps * np.linalg.norm(trial) <= bound:
        new = replace(s, p=p_new, g_e=tuple(trial), omega=0)
        return new, 0.0
    nt = np.linalg.norm(trial)
    if s.mu == 0 or s.eps == 0 or nt == 0:
        g_e = np.zeros_like(trial)
    else:
        g_e = trial / nt * (bound / s.eps)
    g_s = np.asarray(x_k_new, dtype=float) - np.asarray(s.x_o, dtype=float) - g_e
    dg_s = g_s - np.asarray(s.g_s, dtype=float)
    # friction acts against the slider with the spring force t
    diss = float(s.eps * g_e @ dg_s)
    new = replace(s, p=p_new, g_e=tuple(g_e), g_s=tuple(g_s), omega=1)
    return new, diss
