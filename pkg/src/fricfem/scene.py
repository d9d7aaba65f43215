"""Scene files: JSON description -> :class:`~fricfem.solver.Model`."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .bulk import BulkMesh, Material
from .contact import ContactPair, PenaltyLaw
from .errors import SceneError
from .generators import GENERATORS
from .geometry import HermitePatch, LagrangePatch, NurbsPatch, RigidPlane
from .solver import LoadSchedule, Model, Phase

__all__ = ["load_scene", "build_model", "apply_overrides", "scene_schema", "SCENE_DIR"]

SCENE_DIR = Path(__file__).resolve().parents[2] / "scenes"


def scene_schema():
    text = resources.files("fricfem").joinpath("scene.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(scene, overrides):
    """Apply ``dotted.key=value`` strings; list entries are addressed by index."""
    scene = copy.deepcopy(scene)
    for item in overrides or ():
        if "=" not in item:
            raise SceneError("override %r is not of the form key=value" % item)
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = scene
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _parse_value(val)
        else:
            node[last] = _parse_value(val)
    return scene


def _validate(scene):
    validator = jsonschema.Draft202012Validator(scene_schema())
    errors = sorted(validator.iter_errors(scene), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = "".join("[%d]" % p if isinstance(p, int) else ".%s" % p for p in e.absolute_path)
            msgs.append("%s: %s" % (where.lstrip(".") or "<root>", e.message))
        raise SceneError("invalid scene:\n  " + "\n  ".join(msgs))


def _open_knots(n_cp, p):
    inner = np.arange(1, n_cp - p)
    return np.concatenate([np.zeros(p + 1), inner, np.full(p + 1, n_cp - p)]).astype(float)


def _make_patch(cfg, ids, X, dim):
    kind = cfg.get("kind")
    if kind == "rigid_plane":
        return RigidPlane(cfg["point"], cfg["tangents"], cfg.get("normal"))
    ids = np.asarray(ids)
    pts = X[ids]
    if kind == "hermite":
        if ids.ndim != 1:
            raise SceneError("Hermite surfaces need a node chain")
        patch = HermitePatch(pts)
    elif kind == "lagrange":
        patch = LagrangePatch(pts)
    elif kind == "nurbs":
        p = int(cfg.get("degree", 2))
        shape = ids.shape
        knots = [_open_knots(n, p) for n in shape]
        patch = NurbsPatch([p] * len(shape), knots, pts)
    else:
        raise SceneError("unknown surface kind %r" % kind)
    patch.nodes = ids.reshape(-1)
    return patch


def build_model(scene, pass_mode=None, steps=None):
    """Expand generators and assemble a :class:`Model` from a scene dict."""
    scene = copy.deepcopy(scene)
    if pass_mode is not None:
        scene.setdefault("contact", {})["pass"] = pass_mode
    if steps is not None:
        for ph in scene["schedule"]:
            ph["steps"] = int(steps)
    _validate(scene)
    dim = scene["dim"]
    units = scene.get("units", {})
    E0, L0 = units.get("E0", 1.0), units.get("L0", 1.0)
    X_parts, meshes, sets, surf_nodes = [], [], {}, {}
    offset = 0
    body_mats = []
    for b in scene["bodies"]:
        gen = dict(b["generator"])
        kind = gen.pop("type")
        try:
            md = GENERATORS[kind](**gen)
        except TypeError as exc:
            raise SceneError("bad parameters for generator %r of body %r: %s" % (kind, b["name"], exc))
        if md.nodes.shape[1] != dim:
            raise SceneError("body %r is %dD in a %dD scene" % (b["name"], md.nodes.shape[1], dim))
        mat = Material(**b.get("material", {}))
        X_parts.append(md.nodes)
        body_mats.append((b["name"], md.elements + offset, mat))
        for k, v in md.sets.items():
            sets["%s.%s" % (b["name"], k)] = np.asarray(v) + offset
        for k, v in md.surfaces.items():
            surf_nodes["%s.%s" % (b["name"], k)] = np.asarray(v) + offset
        sets[b["name"]] = np.arange(offset, offset + len(md.nodes))
        offset += len(md.nodes)
    X = np.vstack(X_parts)
    meshes = [BulkMesh(X, el, mat, name) for name, el, mat in body_mats]

    surf_specs = scene.get("surfaces", {})
    default_kind = "hermite" if dim == 2 else "nurbs"
    patches = {}

    def patch(name):
        if name in patches:
            return patches[name]
        cfg = surf_specs.get(name, {"kind": default_kind})
        if cfg["kind"] != "rigid_plane" and name not in surf_nodes:
            raise SceneError("unknown surface %r" % name)
        patches[name] = _make_patch(cfg, surf_nodes.get(name), X, dim)
        return patches[name]

    ct = scene.get("contact", {})
    pmode = ct.get("pass", "full")
    pairs = []
    if ct.get("pairs"):
        law = PenaltyLaw(ct.get("eps_n", 100.0), ct.get("eps_tau"))
        mu = ct.get("mu", 0.0)
        q = ct.get("quadrature")
        for pr in ct["pairs"]:
            s, m = patch(pr["slave"]), patch(pr["master"])
            pairs.append(ContactPair(s, m, law, mu, q, "%s>%s" % (pr["slave"], pr["master"]), L0))
            if pmode == "twohalf" and not m.is_rigid:
                pairs.append(ContactPair(m, s, law, mu, q, "%s>%s" % (pr["master"], pr["slave"]), L0))

    constraints = []
    centers = {}
    for bc in scene.get("boundary", []):
        if bc["set"] not in sets:
            raise SceneError("unknown boundary set %r" % bc["set"])
        constraints.append((bc["set"], bc["components"]))
        if "center" in bc:
            centers[bc["set"]] = bc["center"]
    phases = []
    for i, ph in enumerate(scene["schedule"]):
        for sname in ph.get("targets", {}):
            if sname not in [c[0] for c in constraints]:
                raise SceneError("schedule[%d] targets unconstrained set %r" % (i, sname))
        phases.append(Phase(ph["steps"], ph.get("targets", {}), ph.get("friction", True),
                            ph.get("name", "phase%d" % (i + 1))))
    out = scene.get("output", {})
    for s in out.get("reaction_sets", []):
        if s not in sets:
            raise SceneError("unknown reaction set %r" % s)
    model = Model(X, meshes, sets, constraints, LoadSchedule(phases), pairs, pmode, E0, L0,
                  out.get("reaction_sets"), out.get("torque_point"), patches)
    model.rotation_centers = centers
    model.scene = scene
    model.scene_hash = hashlib.sha256(json.dumps(scene, sort_keys=True).encode()).hexdigest()
    model.solver_options = dict(scene.get("solver", {}))
    model.output_options = dict(out)
    return model


def load_scene(path, overrides=None, pass_mode=None, steps=None):
    """Read, validate and expand a scene file.

    Relative paths that do not exist are also looked up in the shipped
    ``scenes`` directory.
    """
    p = Path(path)
    if not p.exists() and (SCENE_DIR / p).exists():
        p = SCENE_DIR / p
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError("cannot read scene %s: %s" % (path, exc))
    try:
        scene = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError("%s: line %d column %d: %s" % (path, exc.lineno, exc.colno, exc.msg))
    scene = apply_overrides(scene, overrides)
    return build_model(scene, pass_mode, steps)
