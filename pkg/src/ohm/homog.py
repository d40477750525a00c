"""Effective homogenized matrix from periodic corrector problems.

On a torus sample of side N the corrector f minimizes

    F(f) = (1 / N^d) * sum_{edges} c_e * (a . z_e - (f(y) - f(x)))^2

(each undirected edge ``e = {x, y}`` with displacement ``z_e = y - x``),
which is the finite-volume version of the variational formula for a . D a
with the Palm average replaced by a volume average.  ``F`` therefore
estimates ``m * a . D a``; dividing by the intensity ``m`` gives ``D``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .env import Box, BondPercolation, ConductanceModel, Environment, periodic_environment
from .errors import ContractError, HypothesisError, ParameterError
from .maxflow import FlowGraph
from .network import DirectionFrame, NodeClass, ResistorNetwork, householder
from .solver import DEFAULT_TOL, conjugate_gradient, direct_solve
from .unionfind import component_labels

KERNEL_RTOL = 1e-8


# ------------------------------------------------------------------ intensity


def estimate_intensity(env: Environment, window: Box) -> float:
    """Points per unit volume inside ``window``.

    For bond percolation the relevant point set is the infinite cluster,
    represented here by the largest cluster of the sample.
    """
    if window.volume <= 0:
        raise ParameterError("empty window")
    pts = env.cloud.points
    inside = window.contains(pts) if len(pts) else np.zeros(0, bool)
    if isinstance(env.model, BondPercolation) and len(pts):
        i, j, disp = env.candidate_pairs()
        c = env.pair_conductances(i, j, disp)
        labels = component_labels(len(pts), i[c > 0], j[c > 0])
        giant = np.bincount(labels).argmax()
        inside &= labels == giant
    return float(np.count_nonzero(inside)) / window.volume


# ------------------------------------------------------------------ corrector


@dataclass(frozen=True, eq=False)
class TorusGraph:
    n_nodes: int
    volume: float
    i: np.ndarray
    j: np.ndarray
    z: np.ndarray
    c: np.ndarray
    labels: np.ndarray

    @property
    def n_components(self) -> int:
        return len(np.unique(self.labels)) if self.n_nodes else 0

    def laplacian(self) -> sp.csr_matrix:
        n = self.n_nodes
        i, j, c = self.i, self.j, self.c
        diag = np.bincount(i, weights=c, minlength=n) + np.bincount(j, weights=c, minlength=n)
        off = i != j
        rows = np.concatenate([np.arange(n), i[off], j[off]])
        cols = np.concatenate([np.arange(n), j[off], i[off]])
        # self-image edges have zero gradient of f and drop out of the Laplacian
        diag -= 2.0 * np.bincount(i[~off], weights=c[~off], minlength=n)
        vals = np.concatenate([diag, -c[off], -c[off]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def torus_graph(env: Environment) -> TorusGraph:
    """Edges of a periodized environment, one per periodic image pair."""
    if env.period is None:
        raise ParameterError("environment is not periodized")
    i, j, z = env.candidate_pairs()
    c = env.pair_conductances(i, j, z)
    keep = c > 0
    n = len(env.cloud)
    labels = component_labels(n, i[keep], j[keep])
    return TorusGraph(n_nodes=n, volume=env.period ** env.dim, i=i[keep], j=j[keep], z=z[keep], c=c[keep],
                      labels=labels)


@dataclass(frozen=True, eq=False)
class CorrectorSolution:
    torus_size: float
    direction: np.ndarray
    corrector: np.ndarray
    energy: float
    zero_energy: float
    flux: np.ndarray
    residual: float
    iterations: int
    disconnected: bool
    n_components: int

    @property
    def flux_energy(self) -> float:
        """``a . (flux vector)``; equals ``energy`` at the exact optimum."""
        return float(self.direction @ self.flux)


def corrector_energy(graph: TorusGraph, a: np.ndarray, f: np.ndarray) -> float:
    """Functional F(f) (volume normalized)."""
    g = graph.z @ a - (f[graph.j] - f[graph.i])
    return float(np.sum(graph.c * g * g) / graph.volume)


def solve_corrector(env_periodic: Environment | TorusGraph, a: Sequence[float], tol: float = DEFAULT_TOL,
                    max_iter: int | None = None, method: str = "auto") -> CorrectorSolution:
    """Minimize the corrector functional on the torus for direction ``a``.

    Disconnected tori are solved component by component; each component is
    gauged to mean zero and ``disconnected`` is flagged.
    """
    graph = env_periodic if isinstance(env_periodic, TorusGraph) else torus_graph(env_periodic)
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ParameterError("direction a must be nonzero")
    n = graph.n_nodes
    dim = graph.z.shape[1] if graph.z.ndim == 2 else len(a)
    if method not in ("cg", "direct", "auto"):
        raise ParameterError(f"unknown solver method {method!r}")
    if method == "auto":
        method = "direct" if dim == 1 else "cg"
    az = graph.z @ a
    w = graph.c * az
    b = np.bincount(graph.j, weights=w, minlength=n) - np.bincount(graph.i, weights=w, minlength=n)
    L = graph.laplacian()
    labels = graph.labels
    it = 0
    if method == "direct":
        f = np.zeros(n)
        # ground one node per component
        _, first = np.unique(labels, return_index=True)
        grounded = np.zeros(n, dtype=bool)
        grounded[first] = True
        keep = np.nonzero(~grounded)[0]
        if len(keep):
            f[keep] = direct_solve(L[keep][:, keep], b[keep])
        it = 1
        res = _rel_residual(L, b, f)
    else:
        f, res, it, _ = conjugate_gradient(L, b, np.zeros(n), tol, max_iter)
    # gauge: mean zero on every component
    counts = np.bincount(labels, minlength=n)
    sums = np.bincount(labels, weights=f, minlength=n)
    f = f - (sums / np.maximum(counts, 1))[labels]
    g = az - (f[graph.j] - f[graph.i])
    energy = float(np.sum(graph.c * g * g) / graph.volume)
    flux = (graph.c * g) @ graph.z / graph.volume
    zero = float(np.sum(graph.c * az * az) / graph.volume)
    ncomp = graph.n_components
    return CorrectorSolution(torus_size=graph.volume ** (1.0 / dim), direction=a, corrector=f, energy=energy,
                             zero_energy=zero, flux=np.asarray(flux, dtype=float), residual=res, iterations=it,
                             disconnected=ncomp > 1, n_components=ncomp)


def _rel_residual(L, b, f) -> float:
    d = L.diagonal().copy()
    d[d == 0] = 1.0
    r = b - L @ f
    bn = math.sqrt(float(b @ (b / d)))
    return math.sqrt(float(r @ (r / d))) / bn if bn else 0.0


# ---------------------------------------------------------- effective matrix


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue iteration for a small symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` sorted nonincreasingly, with each
    eigenvector's first nonnegligible component positive.
    """
    A = np.array(A, dtype=float)
    A = 0.5 * (A + A.T)
    n = len(A)
    V = np.eye(n)
    scale = max(np.max(np.abs(A)), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(A, 1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                J = np.eye(n)
                J[p, p] = J[q, q] = cs
                J[p, q] = sn
                J[q, p] = -sn
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    V = V[:, order]
    for k in range(n):
        col = V[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if len(nz) and col[nz[0]] < 0:
            V[:, k] = -col
    return vals, V


@dataclass(frozen=True, eq=False)
class EffectiveMatrix:
    dim: int
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    intensity: float
    kernel_dim: int
    per_seed: list = field(default_factory=list)
    flux_discrepancy: float = 0.0
    optimality_gap: float = 0.0

    @classmethod
    def from_matrix(cls, D, intensity: float = 1.0, **kw) -> "EffectiveMatrix":
        D = np.array(D, dtype=float)
        D = 0.5 * (D + D.T)
        vals, vecs = principal_directions(D)
        return cls(dim=len(D), matrix=D, eigenvalues=vals, eigenvectors=vecs, intensity=float(intensity),
                   kernel_dim=_kernel_dim(vals), **kw)

    def to_record(self) -> dict:
        return {
            "dim": self.dim,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "eigenvectors": [[float(v) for v in self.eigenvectors[:, k]] for k in range(self.dim)],
            "intensity": float(self.intensity),
            "kernel_dim": int(self.kernel_dim),
            "flux_discrepancy": float(self.flux_discrepancy),
            "optimality_gap": float(self.optimality_gap),
            "per_seed": self.per_seed,
        }


def _kernel_dim(vals: np.ndarray) -> int:
    top = max(float(np.max(vals)), 0.0) if len(vals) else 0.0
    if top == 0.0:
        return len(vals)
    return int(np.count_nonzero(vals < KERNEL_RTOL * top))


def principal_directions(D) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, nonincreasing, deterministic signs."""
    D = np.asarray(D.matrix if isinstance(D, EffectiveMatrix) else D, dtype=float)
    return jacobi_eigh(D)


def cloud_intensity(env: Environment, graph: TorusGraph | None = None) -> float:
    """Intensity of the torus sample (giant-cluster fraction for percolation)."""
    vol = env.period ** env.dim
    if isinstance(env.model, BondPercolation):
        graph = graph or torus_graph(env)
        if graph.n_nodes == 0:
            return 0.0
        return float(np.bincount(graph.labels).max()) / vol
    return len(env.cloud) / vol


def assemble_effective_matrix(model: ConductanceModel, dim: int, N: int, seeds: Sequence[int],
                              intensity: float | None = None, tol: float = DEFAULT_TOL,
                              method: str = "auto") -> EffectiveMatrix:
    """Estimate D by polarization of periodic corrector energies, averaged over seeds."""
    if N < 2:
        raise ParameterError("torus size must be at least 2")
    if not len(seeds):
        raise ParameterError("at least one seed is required")
    eye = np.eye(dim)
    mD_sum = np.zeros((dim, dim))
    flux_sum = np.zeros((dim, dim))
    m_sum = 0.0
    gaps = []
    records = []
    for seed in seeds:
        env = periodic_environment(model, dim, N, seed, intensity=intensity)
        graph = torus_graph(env)
        q = {}
        Q = np.zeros((dim, dim))
        F = np.zeros((dim, dim))
        for k in range(dim):
            sol = solve_corrector(graph, eye[k], tol=tol, method=method)
            q[(k, k)] = sol.energy
            F[:, k] = sol.flux
            gaps.append(abs(sol.energy - sol.flux_energy) / max(abs(sol.energy), 1e-300))
        for k, l in itertools.combinations(range(dim), 2):
            sol = solve_corrector(graph, eye[k] + eye[l], tol=tol, method=method)
            q[(k, l)] = sol.energy
            gaps.append(abs(sol.energy - sol.flux_energy) / max(abs(sol.energy), 1e-300))
        for k in range(dim):
            Q[k, k] = q[(k, k)]
        for k, l in itertools.combinations(range(dim), 2):
            Q[k, l] = Q[l, k] = 0.5 * (q[(k, l)] - q[(k, k)] - q[(l, l)])
        m = cloud_intensity(env, graph)
        mD_sum += Q
        flux_sum += F
        m_sum += m
        records.append({"seed": int(seed), "intensity": m, "energies": [[float(v) for v in row] for row in Q],
                        "flux": [[float(v) for v in row] for row in F], "components": graph.n_components})
    S = len(seeds)
    m = m_sum / S
    mD = mD_sum / S
    D = mD / m if m > 0 else np.zeros_like(mD)
    Fm = 0.5 * (flux_sum + flux_sum.T) / S
    disc = float(np.max(np.abs(Fm - mD))) / max(float(np.max(np.abs(mD))), 1e-300)
    return EffectiveMatrix.from_matrix(D, intensity=m, per_seed=records, flux_discrepancy=disc,
                                       optimality_gap=float(max(gaps) if gaps else 0.0))


# ------------------------------------------------------------ tilted geometry


@dataclass(frozen=True, eq=False)
class DirectionGeometry:
    frame: DirectionFrame
    w: np.ndarray
    a: np.ndarray
    basis: np.ndarray
    d_star: int
    rotated_matrix: np.ndarray
    predicted_limit: float


def direction_geometry(D, e: Sequence[float], intensity: float | None = None) -> DirectionGeometry:
    """Observation parallelepiped for probing direction ``e`` in Ker(D)^perp.

    In coordinates rotated so that ``e`` becomes e_1: the faces are orthogonal
    to the unit vector ``w`` in Ker(D)^perp with ``w`` orthogonal to
    ``D f_k`` for the remaining Ker(D)^perp basis vectors ``f_k``; the
    predicted limit is ``m * a . D a`` with ``a = w / (2 c w . e_1)``.
    """
    if isinstance(D, EffectiveMatrix):
        m = D.intensity if intensity is None else intensity
        D = D.matrix
    else:
        m = 1.0 if intensity is None else intensity
    D = np.asarray(D, dtype=float)
    dim = len(D)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    O = householder(e)
    Dr = O.T @ D @ O
    Dr = 0.5 * (Dr + Dr.T)
    vals, vecs = jacobi_eigh(Dr)
    kdim = _kernel_dim(vals)
    dstar = dim - kdim
    if dstar == 0:
        raise HypothesisError("D vanishes: no direction satisfies the hypothesis")
    rng_basis = vecs[:, :dstar]
    ker_basis = vecs[:, dstar:]
    e1 = np.eye(dim)[0]
    if np.linalg.norm(ker_basis.T @ e1) > 1e-8:
        raise HypothesisError(f"direction {e} has a component in Ker(D)")
    # orthonormal basis of Ker(D)^perp starting with e_1
    proj = rng_basis - np.outer(e1, e1 @ rng_basis)
    if dstar > 1:
        u, s, _ = np.linalg.svd(proj, full_matrices=False)
        rest = u[:, : dstar - 1]
        if np.min(s[: dstar - 1]) < 1e-10:
            raise np.linalg.LinAlgError("degenerate Ker(D)^perp frame")
    else:
        rest = np.zeros((dim, 0))
    frame_vecs = np.column_stack([e1, rest, ker_basis])
    if dstar > 1:
        constraints = (Dr @ rest).T @ rng_basis
        _, s, vt = np.linalg.svd(constraints)
        if len(s) and np.min(s) < 1e-12:
            raise np.linalg.LinAlgError("degenerate orthogonality constraints for w")
        y = vt[-1]
        w = rng_basis @ y
    else:
        w = rng_basis[:, 0].copy()
    w /= np.linalg.norm(w)
    if w[0] < 0:
        w = -w
    if not w[0] > 1e-14:
        raise np.linalg.LinAlgError("w is orthogonal to e_1")
    lateral = frame_vecs[:, 1:].T
    c = 0.5
    kind = "box" if np.allclose(w, e1, atol=1e-12) else "tilted"
    frame = DirectionFrame(dim=dim, rotation=O, w=w, lateral=lateral, c=c, kind=kind)
    # normalize c so the unit parallelepiped has volume one
    vol = frame.unit_volume()
    if abs(vol - 1.0) > 1e-10:
        frame = DirectionFrame(dim=dim, rotation=O, w=w, lateral=lateral, c=c / vol, kind=kind)
    a = w / (2.0 * frame.c * w[0])
    return DirectionGeometry(frame=frame, w=w, a=a, basis=frame_vecs, d_star=dstar, rotated_matrix=Dr,
                             predicted_limit=float(m * a @ Dr @ a))


# ------------------------------------------------------------------ crossings


@dataclass(frozen=True)
class CrossingBound:
    n_crossings: int
    path_lengths: tuple[int, ...]
    path_resistances: tuple[float, ...]
    lower_bound: float
    jensen_bound: float


def crossings_lower_bound(net: ResistorNetwork) -> CrossingBound:
    """Lower bound on the conductivity from vertex-disjoint left-right crossings.

    Paths are found by unit vertex-capacity max-flow on the network with
    merged reservoirs.  Each crossing is a series chain, and disjoint chains
    joined only at the reservoirs form a sub-network, so
    ``sigma >= sum_j 1/R_j >= N^2 / sum_j R_j`` with ``R_j`` the series
    resistance of crossing ``j`` (its bond count ``s_j`` for unit weights).
    """
    if not net.classified:
        raise ContractError("network must be classified before counting crossings")
    cls = net.classes
    n = net.n_nodes
    # node u splits into 2u (in) and 2u+1 (out); reservoirs are merged into S and T
    S, T = 2 * n, 2 * n + 1
    g = FlowGraph(2 * n + 2)

    def vin(u):
        return S if cls[u] == NodeClass.LEFT else T if cls[u] == NodeClass.RIGHT else 2 * u

    def vout(u):
        return S if cls[u] == NodeClass.LEFT else T if cls[u] == NodeClass.RIGHT else 2 * u + 1

    for u in np.nonzero(cls == NodeClass.INTERIOR)[0].tolist():
        g.add_arc(2 * u, 2 * u + 1, 1)
    pair_cond: dict[tuple[int, int], float] = {}
    for a, b, c in zip(net.ei.tolist(), net.ej.tolist(), net.ec.tolist()):
        if cls[a] == NodeClass.ISOLATED or cls[b] == NodeClass.ISOLATED:
            continue
        for x, y in ((a, b), (b, a)):
            if vout(x) == T or vin(y) == S or vout(x) == vin(y):
                continue
            g.add_arc(vout(x), vin(y), 1)
        k = _merge_key(vin(a), vin(b))
        pair_cond[k] = pair_cond.get(k, 0.0) + c
    count = g.max_flow(S, T)
    lengths, resistances = [], []
    for path in g.decompose(S, T):
        # path alternates in/out copies; collapse it to network-level hops
        hops = [v for v in path if v in (S, T) or v % 2 == 0]
        R = 0.0
        for p, q in zip(hops[:-1], hops[1:]):
            R += 1.0 / pair_cond[_merge_key(p, q)]
        lengths.append(len(hops) - 1)
        resistances.append(R)
    lower = float(sum(1.0 / r for r in resistances))
    jensen = float(count**2 / sum(resistances)) if resistances else 0.0
    return CrossingBound(n_crossings=count, path_lengths=tuple(lengths), path_resistances=tuple(resistances),
                         lower_bound=lower, jensen_bound=jensen)


def _merge_key(p: int, q: int) -> tuple[int, int]:
    return (p, q) if p <= q else (q, p)
