"""Structured meshes for the benchmark bodies.

Every generator returns a :class:`MeshData` with nodes, linear elements with
positive orientation, named node sets and named contact surfaces.  A 2D
surface is a node chain ordered so that the body lies on its left (outward
normal on the right); a 3D surface is an ``(n1 + 1, n2 + 1)`` node grid whose
first-cross-second tangent points outward.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MeshData:
    nodes: np.ndarray
    elements: np.ndarray
    sets: dict = field(default_factory=dict)
    surfaces: dict = field(default_factory=dict)


def _grid_quads(nx, ny, offset=0):
    """CCW quads of an (nx+1) x (ny+1) node grid numbered i + j (nx+1)."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.T.ravel(), j.T.ravel()
    n0 = i + j * (nx + 1)
    return np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]) + offset


def _merge(points):
    """Unique points (first occurrence order) and the inverse map."""
    scale = max(1.0, float(np.abs(points).max()))
    q = np.round(points / (1e-9 * scale)).astype(np.int64)
    _, first, inv = np.unique(q, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return points[first[order]], rank[inv.ravel()]


def _orient2d(nodes, elems):
    """Reorder quads with negative signed area to counter-clockwise."""
    X = nodes[elems]
    d1, d2 = X[:, 2] - X[:, 0], X[:, 3] - X[:, 1]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    elems = elems.copy()
    elems[neg] = elems[neg][:, ::-1]
    return elems


def _resample(poly, n):
    """``n + 1`` points spaced uniformly in arc length along a dense polyline."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], n + 1)
    return np.column_stack([np.interp(t, s, poly[:, k]) for k in range(poly.shape[1])])


def fillet_block(nx=16, ny=19, width=1.0, height=1.0, fillet=0.1, origin=(0.0, 0.0)):
    """Rectangular block whose two lower corners are rounded.

    Transfinite (Coons) map of an ``nx`` by ``ny`` grid.  The bottom boundary
    runs over both fillets and is sampled uniformly in arc length.
    Surfaces: ``bottom``.  Sets: ``top``, ``bottom``.
    """
    W, H, r = float(width), float(height), float(fillet)
    ox, oy = origin
    k = 200
    a1 = np.linspace(np.pi, 1.5 * np.pi, k)
    a2 = np.linspace(1.5 * np.pi, 2.0 * np.pi, k)
    arc1 = np.column_stack([r + r * np.cos(a1), r + r * np.sin(a1)])
    arc2 = np.column_stack([W - r + r * np.cos(a2), r + r * np.sin(a2)])
    poly = np.vstack([arc1, arc2]) if r > 0 else np.array([[0.0, 0.0], [W, 0.0]])
    bottom = _resample(poly, nx)
    s = np.linspace(0.0, 1.0, nx + 1)
    top = np.column_stack([W * s, np.full(nx + 1, H)])
    t = np.linspace(0.0, 1.0, ny + 1)
    left = np.column_stack([np.zeros(ny + 1), r + (H - r) * t])
    right = np.column_stack([np.full(ny + 1, W), r + (H - r) * t])
    S, T = np.meshgrid(s, t)
    P = ((1 - T)[..., None] * bottom[None, :, :] + T[..., None] * top[None, :, :]
         + (1 - S)[..., None] * left[:, None, :] + S[..., None] * right[:, None, :]
         - ((1 - S) * (1 - T))[..., None] * bottom[0] - (S * (1 - T))[..., None] * bottom[-1]
         - ((1 - S) * T)[..., None] * top[0] - (S * T)[..., None] * top[-1])
    nodes = P.reshape(-1, 2) + [ox, oy]
    elems = _grid_quads(nx, ny)
    ids = np.arange(len(nodes)).reshape(ny + 1, nx + 1)
    return MeshData(nodes, elems, {"top": ids[-1], "bottom": ids[0]}, {"bottom": ids[0]})


def half_cylinder(m=16, radius=1.0, center=(0.0, 0.0), up=True, core=0.55):
    """O-grid half disc, ``21 m^2 / 32`` quads (``m`` divisible by 8).

    A ``2n x n`` core rectangle (``n = 3m/8``) is wrapped by ``m/4`` layers
    mapping its three free sides onto the arc.  With ``up=True`` the flat side
    lies at ``y = center_y`` and the arc bulges upward.
    Surfaces: ``arc``.  Sets: ``flat``, ``arc``.
    """
    if m % 8:
        raise ValueError("m must be divisible by 8")
    n, nr = 3 * m // 8, m // 4
    R = float(radius)
    c = core * R
    xs = np.linspace(-c, c, 2 * n + 1)
    ys = np.linspace(0.0, c, n + 1)
    CX, CY = np.meshgrid(xs, ys)
    pts = [np.column_stack([CX.ravel(), CY.ravel()])]
    conn = [_grid_quads(2 * n, n)]
    # core boundary, right-bottom -> right-top -> left-top -> left-bottom
    right = np.column_stack([np.full(n + 1, c), ys])
    topb = np.column_stack([xs[::-1], np.full(2 * n + 1, c)])
    left = np.column_stack([np.full(n + 1, -c), ys[::-1]])
    inner = np.vstack([right, topb[1:], left[1:]])
    ang = np.linspace(0.0, np.pi, 4 * n + 1)
    outer = R * np.column_stack([np.cos(ang), np.sin(ang)])
    lam = np.linspace(0.0, 1.0, nr + 1)
    ring = (1 - lam)[:, None, None] * inner[None] + lam[:, None, None] * outer[None]
    off = len(pts[0])
    pts.append(ring.reshape(-1, 2))
    # ring grid: circumferential index i (4n), radial index j (nr)
    conn.append(_grid_quads(4 * n, nr, offset=off))
    nodes, inv = _merge(np.vstack(pts))
    elems = _orient2d(nodes, inv[np.vstack(conn)])
    arc = inv[off + nr * (4 * n + 1) + np.arange(4 * n + 1)]
    flat = np.nonzero(np.abs(nodes[:, 1]) < 1e-12 * R)[0]
    flat = flat[np.argsort(nodes[flat, 0])]
    if not up:
        nodes = nodes * [1.0, -1.0]
        elems = _orient2d(nodes, elems)
        arc = arc[::-1]
    nodes = nodes + np.asarray(center, dtype=float)
    return MeshData(nodes, elems, {"flat": flat, "arc": arc}, {"arc": arc})


def slab(m=12, width=10.0, height=2.0, origin=(-5.0, -2.0), nx=None, ny=None):
    """Rectangle meshed by ``5m x m`` quads (``nx``, ``ny`` override).

    Surfaces: ``top`` (ordered right to left), ``bottom``.  Sets: ``top``, ``bottom``.
    """
    nx = 5 * m if nx is None else nx
    ny = m if ny is None else ny
    X, Y = np.meshgrid(np.linspace(0, width, nx + 1), np.linspace(0, height, ny + 1))
    nodes = np.column_stack([X.ravel(), Y.ravel()]) + np.asarray(origin, dtype=float)
    ids = np.arange(len(nodes)).reshape(ny + 1, nx + 1)
    return MeshData(nodes, _grid_quads(nx, ny), {"top": ids[-1], "bottom": ids[0]},
                    {"top": ids[-1][::-1], "bottom": ids[0]})


def _hexes(n1, n2, n3):
    i, j, k = [a.ravel() for a in np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij")]

    def nid(a, b, c):
        return (a * (n2 + 1) + b) * (n3 + 1) + c

    return np.column_stack([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                            nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1),
                            nid(i, j + 1, k + 1)])


def box(n=4, nz=None, size=(1.0, 1.0, 1.0), origin=(-0.5, -0.5, -1.0)):
    """Hexahedral block.  Surfaces: ``top``.  Sets: ``top``, ``bottom``."""
    nz = n if nz is None else nz
    L = np.asarray(size, dtype=float)
    g = [np.linspace(0, L[0], n + 1), np.linspace(0, L[1], n + 1), np.linspace(0, L[2], nz + 1)]
    P = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1)
    nodes = P.reshape(-1, 3) + np.asarray(origin, dtype=float)
    ids = np.arange(len(nodes)).reshape(n + 1, n + 1, nz + 1)
    return MeshData(nodes, _hexes(n, n, nz), {"top": ids[:, :, -1].ravel(), "bottom": ids[:, :, 0].ravel()},
                    {"top": ids[:, :, -1]})


def cap_shell(n=4, layers=1, radius=1.0, thickness=1.0 / 3.0, half_angle=50.0, center=(0.0, 0.0, 1.0)):
    """Spherical cap shell opening upward, lowest point at ``center - radius``.

    An ``n x n`` grid of the square ``[-a, a]^2`` is pushed onto the sphere by
    normalizing ``(u, v, -1)``; ``layers`` elements span the thickness.
    Surfaces: ``outer``.  Sets: ``rim`` (all nodes on the lateral boundary).
    """
    a = np.tan(np.radians(half_angle))
    u = np.linspace(-a, a, n + 1)
    U, V = np.meshgrid(u, u, indexing="ij")
    dirs = np.stack([U, V, -np.ones_like(U)], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    rho = np.linspace(radius, radius - thickness, layers + 1)
    P = dirs[:, :, None, :] * rho[None, None, :, None] + np.asarray(center, dtype=float)
    nodes = P.reshape(-1, 3)
    ids = np.arange(len(nodes)).reshape(n + 1, n + 1, layers + 1)
    elems = _hexes(n, n, layers)
    # fix orientation: third index runs inward (upward at the pole)
    X = nodes[elems]
    J = np.einsum("ed,ed->e", np.cross(X[:, 1] - X[:, 0], X[:, 3] - X[:, 0]), X[:, 4] - X[:, 0])
    if np.all(J < 0):
        elems = elems[:, [0, 3, 2, 1, 4, 7, 6, 5]]
    rim_mask = np.zeros((n + 1, n + 1), dtype=bool)
    rim_mask[0, :] = rim_mask[-1, :] = rim_mask[:, 0] = rim_mask[:, -1] = True
    rim = ids[rim_mask].ravel()
    outer = ids[:, :, 0]
    # outward (downward at the pole) normal needs a1 x a2 pointing away from the centre
    x = nodes[outer]
    nrm = np.cross(x[1, 0] - x[0, 0], x[0, 1] - x[0, 0])
    if nrm @ (x[0, 0] - np.asarray(center)) < 0:
        outer = outer.T
    return MeshData(nodes, elems, {"rim": rim, "outer": outer.ravel()}, {"outer": outer})


GENERATORS = {
    "fillet_block": fillet_block,
    "half_cylinder": half_cylinder,
    "slab": slab,
    "box": box,
    "cap_shell": cap_shell,
}
