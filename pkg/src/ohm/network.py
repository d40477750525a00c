"""Finite resistor networks on the stripe around the observation box.

Coordinates inside a network are *rotated* coordinates ``q = O^T p`` where
``O`` is the frame rotation taking e_1 to the physical probing direction.
The box is described by a face normal ``w`` and lateral unit vectors; the
progress coordinate ``t(q) = (w . q) / (w . e_1)`` runs from the left
reservoir (``t <= -c*ell``) to the right one (``t >= c*ell``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .env import Box, Environment, LATTICE_MODELS, MillerAbrahams, ma_expected_tail
from .errors import GeometryError, ParameterError
from .unionfind import component_labels


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    ISOLATED = 1
    LEFT = 2
    RIGHT = 3


CLASS_NAMES = {
    NodeClass.INTERIOR: "Interior",
    NodeClass.ISOLATED: "InteriorIsolated",
    NodeClass.LEFT: "LeftReservoir",
    NodeClass.RIGHT: "RightReservoir",
}
CLASS_BY_NAME = {v: k for k, v in CLASS_NAMES.items()}


def householder(e: np.ndarray) -> np.ndarray:
    """Orthogonal matrix mapping e_1 to the unit vector ``e``."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    dim = len(e)
    e1 = np.zeros(dim)
    e1[0] = 1.0
    v = e1 - e
    nv = v @ v
    if nv < 1e-30:
        return np.eye(dim)
    return np.eye(dim) - 2.0 * np.outer(v, v) / nv


@dataclass(frozen=True, eq=False)
class DirectionFrame:
    dim: int
    rotation: np.ndarray
    w: np.ndarray
    lateral: np.ndarray
    c: float = 0.5
    kind: str = "box"

    def __post_init__(self):
        O = np.asarray(self.rotation, dtype=float).reshape(self.dim, self.dim)
        w = np.asarray(self.w, dtype=float).reshape(self.dim)
        lat = np.asarray(self.lateral, dtype=float).reshape(self.dim - 1, self.dim)
        object.__setattr__(self, "rotation", O)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "lateral", lat)
        if np.max(np.abs(O.T @ O - np.eye(self.dim))) > 1e-12:
            raise ParameterError("frame rotation is not orthogonal")
        if not w[0] > 0:
            raise ParameterError("the face normal must satisfy w . e_1 > 0")
        if self.c <= 0:
            raise ParameterError("c must be positive")
        if abs(self.unit_volume() - 1.0) > 1e-10:
            raise ParameterError(f"unit box has volume {self.unit_volume()}, not 1")

    def face_matrix(self) -> np.ndarray:
        """Rows map q to (t, u_2, ..., u_d)."""
        return np.vstack([self.w / self.w[0], self.lateral]) if self.dim > 1 else (self.w / self.w[0])[None, :]

    def unit_volume(self) -> float:
        # image of the unit box under face_matrix is [-c, c] x [-1/2, 1/2]^{d-1}
        return 2.0 * self.c / abs(np.linalg.det(self.face_matrix()))

    def progress(self, q: np.ndarray) -> np.ndarray:
        return np.atleast_2d(q) @ self.w / self.w[0]

    def lateral_coords(self, q: np.ndarray) -> np.ndarray:
        return np.atleast_2d(q) @ self.lateral.T

    def to_rotated(self, p: np.ndarray) -> np.ndarray:
        return np.atleast_2d(p) @ self.rotation

    def to_physical(self, q: np.ndarray) -> np.ndarray:
        return np.atleast_2d(q) @ self.rotation.T

    def psi(self, q: np.ndarray, ell: float) -> np.ndarray:
        """Affine profile ``a . (q/ell + c e_1)`` clipped to [0, 1]."""
        t = self.progress(q)
        return np.clip(t / (2.0 * self.c * ell) + 0.5, 0.0, 1.0)

    def covering_window(self, ell: float, margin: float) -> Box:
        """Physical bounding box of the stripe truncated at ``|t| <= c*ell + margin``."""
        tmax = self.c * ell + margin
        corners = []
        for signs in np.ndindex(*(2,) * self.dim):
            s = np.asarray(signs) * 2 - 1
            tu = np.concatenate(([s[0] * tmax], s[1:] * ell / 2.0))
            corners.append(np.linalg.solve(self.face_matrix(), tu))
        phys = self.to_physical(np.asarray(corners))
        return Box(tuple(phys.min(axis=0)), tuple(phys.max(axis=0)))


def box_frame(dim: int, direction=None) -> DirectionFrame:
    """Standard box frame: the cube whose first axis is the probing direction."""
    if direction is None:
        direction = np.eye(dim)[0]
    O = householder(np.asarray(direction, dtype=float))
    eye = np.eye(dim)
    return DirectionFrame(dim=dim, rotation=O, w=eye[0], lateral=eye[1:], c=0.5, kind="box")


@dataclass(frozen=True, eq=False)
class ResistorNetwork:
    ell: float
    frame: DirectionFrame
    coords: np.ndarray
    classes: np.ndarray
    ei: np.ndarray
    ej: np.ndarray
    ec: np.ndarray
    aggregated: bool = False
    classified: bool = False
    truncation_bound: float = 0.0
    env_index: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.frame.dim

    @property
    def n_nodes(self) -> int:
        return len(self.classes)

    @property
    def n_edges(self) -> int:
        return len(self.ec)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.ei.tolist(), self.ej.tolist(), self.ec.tolist()))

    def count(self, cls: NodeClass) -> int:
        return int(np.count_nonzero(self.classes == cls))

    def progress(self) -> np.ndarray:
        return self.frame.progress(self.coords) if self.n_nodes else np.zeros(0)

    def in_box(self) -> np.ndarray:
        return (self.classes == NodeClass.INTERIOR) | (self.classes == NodeClass.ISOLATED)


def _make_network(ell, frame, coords, classes, ei, ej, ec, **kw) -> ResistorNetwork:
    ei = np.asarray(ei, dtype=np.int64)
    ej = np.asarray(ej, dtype=np.int64)
    lo = np.minimum(ei, ej)
    hi = np.maximum(ei, ej)
    order = np.lexsort((hi, lo))
    return ResistorNetwork(ell=float(ell), frame=frame, coords=np.asarray(coords, dtype=float).reshape(-1, frame.dim),
                           classes=np.asarray(classes, dtype=np.int8), ei=lo[order], ej=hi[order],
                           ec=np.asarray(ec, dtype=float)[order], **kw)


def build_network(env: Environment, frame: DirectionFrame, ell: float, margin: float | None = None,
                  classify: bool = True) -> ResistorNetwork:
    """The resistor network on the stripe of side ``ell`` probed along ``frame``.

    Nodes are cloud points in the stripe truncated at ``|t| <= c*ell + margin``;
    an edge is kept when its conductance is positive and one endpoint lies in
    the open box.  ``margin`` defaults to the model's interaction range.
    """
    if not ell > 0:
        raise ParameterError("ell must be positive")
    if frame.dim != env.dim:
        raise ParameterError("frame and environment dimensions differ")
    if margin is None:
        margin = env.model.interaction_range
    if margin < 0:
        raise ParameterError("margin must be nonnegative")
    if math.isfinite(margin):
        need = frame.covering_window(ell, margin)
        if not env.cloud.window.covers(need):
            raise GeometryError(f"environment window {env.cloud.window} does not cover the stripe {need}")

    pts = env.cloud.points
    q = frame.to_rotated(pts) if len(pts) else np.zeros((0, env.dim))
    t = frame.progress(q) if len(pts) else np.zeros(0)
    u = frame.lateral_coords(q) if len(pts) else np.zeros((0, env.dim - 1))
    half = frame.c * ell
    in_stripe = np.all(np.abs(u) < ell / 2.0, axis=1) & (np.abs(t) <= half + margin)
    sel = np.nonzero(in_stripe)[0]
    qs = q[sel]
    order = np.lexsort(qs.T[::-1]) if len(sel) else np.zeros(0, np.int64)
    sel = sel[order]
    qs = q[sel]
    ts = t[sel]
    classes = np.full(len(sel), NodeClass.INTERIOR, dtype=np.int8)
    classes[ts <= -half] = NodeClass.LEFT
    classes[ts >= half] = NodeClass.RIGHT

    node_of = np.full(len(pts), -1, dtype=np.int64)
    node_of[sel] = np.arange(len(sel))
    ci, cj, disp = env.candidate_pairs(subset=sel)
    cond = env.pair_conductances(ci, cj, disp)
    ni, nj = node_of[ci], node_of[cj]
    interior = classes == NodeClass.INTERIOR
    keep = (cond > 0) & (interior[ni] | interior[nj])

    bound = 0.0
    if isinstance(env.model, MillerAbrahams) and len(pts):
        m = len(pts) / env.cloud.window.volume
        bound = float(np.count_nonzero(interior)) * ma_expected_tail(env.model, m, env.dim, 0, max(margin, env.model.interaction_range))
    net = _make_network(ell, frame, qs, classes, ni[keep], nj[keep], cond[keep],
                        truncation_bound=bound, env_index=sel)
    return classify_and_prune(net) if classify else net


def classify_and_prune(net: ResistorNetwork) -> ResistorNetwork:
    """Mark interior components not reaching a reservoir and drop dangling reservoir nodes."""
    n = net.n_nodes
    labels = component_labels(n, net.ei, net.ej)
    classes = net.classes.copy()
    res = (classes == NodeClass.LEFT) | (classes == NodeClass.RIGHT)
    reaches = np.zeros(n, dtype=bool)
    if n:
        reaches[np.unique(labels[res])] = True
    inside = (classes == NodeClass.INTERIOR) | (classes == NodeClass.ISOLATED)
    classes[inside & reaches[labels]] = NodeClass.INTERIOR
    classes[inside & ~reaches[labels]] = NodeClass.ISOLATED

    deg = np.bincount(net.ei, minlength=n) + np.bincount(net.ej, minlength=n)
    keep = inside | (deg > 0)
    new_index = np.cumsum(keep) - 1
    env_index = net.env_index[keep] if net.env_index is not None else None
    return replace(net, coords=net.coords[keep], classes=classes[keep], ei=new_index[net.ei], ej=new_index[net.ej],
                   classified=True, env_index=env_index)


def aggregate_reservoirs(net: ResistorNetwork) -> ResistorNetwork:
    """Collapse each reservoir into one super-node, summing parallel conductances."""
    if not net.classified:
        net = classify_and_prune(net)
    cls = net.classes
    inner = np.nonzero((cls == NodeClass.INTERIOR) | (cls == NodeClass.ISOLATED))[0]
    n_in = len(inner)
    new_id = np.full(net.n_nodes, -1, dtype=np.int64)
    new_id[inner] = np.arange(n_in)
    coords = [net.coords[inner]]
    classes = [cls[inner]]
    nxt = n_in
    for side in (NodeClass.LEFT, NodeClass.RIGHT):
        members = np.nonzero(cls == side)[0]
        if len(members):
            new_id[members] = nxt
            coords.append(net.coords[members].mean(axis=0, keepdims=True))
            classes.append(np.array([side], dtype=np.int8))
            nxt += 1
    a, b = new_id[net.ei], new_id[net.ej]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = lo * nxt + hi
    uniq, inv = np.unique(key, return_inverse=True)
    c = np.bincount(inv, weights=net.ec, minlength=len(uniq))
    return _make_network(net.ell, net.frame, np.vstack(coords), np.concatenate(classes), uniq // nxt, uniq % nxt, c,
                         aggregated=True, classified=True, truncation_bound=net.truncation_bound)


# ------------------------------------------------------------------ text dump


def dump_network(net: ResistorNetwork) -> str:
    lines = [f"{net.dim} {net.ell!r} {net.n_nodes} {net.n_edges}"]
    for k in range(net.n_nodes):
        xs = " ".join(repr(float(v)) for v in net.coords[k])
        lines.append(f"{k} {xs} {CLASS_NAMES[NodeClass(int(net.classes[k]))]}")
    for i, j, c in zip(net.ei.tolist(), net.ej.tolist(), net.ec.tolist()):
        lines.append(f"{i} {j} {c:.17e}")
    return "\n".join(lines) + "\n"


def parse_network(text: str, frame: DirectionFrame | None = None) -> ResistorNetwork:
    rows = text.splitlines()
    d, ell, n, m = rows[0].split()
    d, n, m = int(d), int(n), int(m)
    if frame is None:
        frame = box_frame(d)
    coords = np.zeros((n, d))
    classes = np.zeros(n, dtype=np.int8)
    for k in range(n):
        parts = rows[1 + k].split()
        if int(parts[0]) != k:
            raise ValueError(f"node line {k} out of order")
        coords[k] = [float(v) for v in parts[1:1 + d]]
        classes[k] = CLASS_BY_NAME[parts[1 + d]]
    ei = np.zeros(m, dtype=np.int64)
    ej = np.zeros(m, dtype=np.int64)
    ec = np.zeros(m)
    for k in range(m):
        a, b, c = rows[1 + n + k].split()
        ei[k], ej[k], ec[k] = int(a), int(b), float(c)
    aggregated = (np.count_nonzero(classes == NodeClass.LEFT) <= 1
                  and np.count_nonzero(classes == NodeClass.RIGHT) <= 1)
    return ResistorNetwork(ell=float(ell), frame=frame, coords=coords, classes=classes, ei=ei, ej=ej, ec=ec,
                           aggregated=aggregated, classified=True)
