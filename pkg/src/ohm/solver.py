"""Kirchhoff problem on a resistor network and its conductivity functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractError, ParameterError
from .network import NodeClass, ResistorNetwork
from .unionfind import component_labels

DEFAULT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PotentialSolution:
    values: np.ndarray
    residual: float
    iterations: int
    energy: float
    converged: bool = True
    method: str = "cg"


@dataclass(frozen=True)
class ConductivityReport:
    ell: float
    dim: int
    sigma_flux: float
    sigma_energy: float
    flux_profile: tuple[tuple[float, float], ...]
    rescaled: float

    @property
    def flux_spread(self) -> float:
        """Largest relative deviation of the hyperplane fluxes from ``sigma_flux``."""
        fl = np.array([f for _, f in self.flux_profile])
        scale = max(abs(self.sigma_flux), np.finfo(float).eps)
        return float(np.max(np.abs(fl - self.sigma_flux)) / scale) if len(fl) else 0.0


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray


def assemble_reduced_system(net: ResistorNetwork) -> ReducedSystem:
    """Graph Laplacian restricted to the free (connected interior) nodes."""
    if not net.classified:
        raise ContractError("network must be classified and pruned before assembly")
    cls = net.classes
    free = np.nonzero(cls == NodeClass.INTERIOR)[0]
    n = len(free)
    pos = np.full(net.n_nodes, -1, dtype=np.int64)
    pos[free] = np.arange(n)
    i, j, c = net.ei, net.ej, net.ec
    pi, pj = pos[i], pos[j]
    diag = np.zeros(n)
    np.add.at(diag, pi[pi >= 0], c[pi >= 0])
    np.add.at(diag, pj[pj >= 0], c[pj >= 0])
    both = (pi >= 0) & (pj >= 0)
    rows = np.concatenate([np.arange(n), pi[both], pj[both]])
    cols = np.concatenate([np.arange(n), pj[both], pi[both]])
    vals = np.concatenate([diag, -c[both], -c[both]])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    b = np.zeros(n)
    to_right_j = (pi >= 0) & (cls[j] == NodeClass.RIGHT)
    to_right_i = (pj >= 0) & (cls[i] == NodeClass.RIGHT)
    np.add.at(b, pi[to_right_j], c[to_right_j])
    np.add.at(b, pj[to_right_i], c[to_right_i])
    return ReducedSystem(matrix=A, rhs=b, free=free)


def conjugate_gradient(A, b, x0=None, tol=DEFAULT_TOL, max_iter=None, accept=None):
    """Jacobi-preconditioned conjugate gradient.

    Stops when the preconditioned residual norm, relative to that of ``b``,
    drops below ``tol`` and, if given, ``accept(x, r)`` holds for the iterate
    and its residual.  Returns ``(x, relative_residual, iterations, converged)``.
    Works for consistent semidefinite systems as long as ``b`` is in the range.
    """
    n = len(b)
    if max_iter is None:
        max_iter = max(10 * n, 100)
    d = A.diagonal().copy()
    d[d == 0] = 1.0
    minv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = math.sqrt(float(b @ (minv * b)))
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0, True
    r = b - A @ x
    z = minv * r
    rz = float(r @ z)
    p = z.copy()
    it = 0
    rel = math.sqrt(max(rz, 0.0)) / bnorm

    reached = None  # iteration at which the residual criterion first held

    def done():
        nonlocal reached
        if rel > tol:
            return False
        if reached is None:
            reached = it
        # the extra criterion may sit below the round-off floor: bounded extra work
        return accept is None or accept(x, r) or it >= 2 * reached + 20

    while not done() and it < max_iter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if it % 50 == 0:
            r = b - A @ x  # refresh against drift of the recursive residual
        z = minv * r
        rz_new = float(r @ z)
        rel = math.sqrt(max(rz_new, 0.0)) / bnorm
        p = z + (rz_new / rz) * p
        rz = rz_new
    r = b - A @ x
    rel = math.sqrt(max(float(r @ (minv * r)), 0.0)) / bnorm
    return x, rel, it, rel <= tol


def direct_solve(A, b):
    """Sparse LU solve; used for chain-like graphs where CG needs O(n) iterations."""
    if len(b) == 0:
        return np.zeros(0)
    return spla.splu(sp.csc_matrix(A)).solve(b)


def _preconditioned_residual(A, b, x) -> float:
    d = A.diagonal().copy()
    d[d == 0] = 1.0
    r = b - A @ x
    bn = math.sqrt(float(b @ (b / d)))
    return math.sqrt(float(r @ (r / d))) / bn if bn else 0.0


def boundary_values(net: ResistorNetwork) -> np.ndarray:
    v = np.zeros(net.n_nodes)
    v[net.classes == NodeClass.RIGHT] = 1.0
    return v


def psi_epsilon(net: ResistorNetwork) -> np.ndarray:
    """Affine competitor: linear in the progress coordinate on connected interior nodes."""
    v = boundary_values(net)
    free = net.classes == NodeClass.INTERIOR
    if np.any(free):
        v[free] = net.frame.psi(net.coords[free], net.ell)
    return v


def solve_potential(net: ResistorNetwork, tol: float = DEFAULT_TOL, max_iter: int | None = None,
                    method: str = "cg", x0: np.ndarray | None = None) -> PotentialSolution:
    """Electric potential with value 0 on the left reservoir and 1 on the right one.

    ``method`` is ``"cg"`` (default), ``"direct"`` or ``"auto"`` (direct for
    one-dimensional networks, CG otherwise).  ``x0`` overrides the affine
    initial guess on the free nodes.
    """
    if method not in ("cg", "direct", "auto"):
        raise ParameterError(f"unknown solver method {method!r}")
    if method == "auto":
        method = "direct" if net.dim == 1 else "cg"
    system = assemble_reduced_system(net)
    values = boundary_values(net)
    free = system.free
    if len(free) == 0 or not np.any(system.rhs):
        return PotentialSolution(values=values, residual=0.0, iterations=0, energy=0.0, method=method)
    # components touching a single reservoir are equipotential with it: pin them exactly
    side = _reservoir_contacts(net, free)
    values[free[side == 2]] = 1.0
    crossing = side == 3
    A = system.matrix[crossing][:, crossing]
    b = system.rhs[crossing]
    free = free[crossing]
    if len(free) == 0:
        return PotentialSolution(values=values, residual=0.0, iterations=0, energy=dissipated_energy(net, values),
                                 method=method)
    if method == "direct":
        x = direct_solve(A, b)
        res, it, ok = _preconditioned_residual(A, b, x), 1, True
    else:
        guess = psi_epsilon(net)[free] if x0 is None else np.asarray(x0, dtype=float)[crossing]

        # total Kirchhoff defect bounds the spread of hyperplane fluxes
        def accept(x, r):
            return float(np.abs(r).sum()) <= tol * abs(float(b @ (1.0 - x)))

        x, res, it, ok = conjugate_gradient(A, b, guess, tol, max_iter, accept=accept)
    values[free] = x
    return PotentialSolution(values=values, residual=res, iterations=it, energy=dissipated_energy(net, values),
                             converged=ok, method=method)


def _reservoir_contacts(net: ResistorNetwork, free: np.ndarray) -> np.ndarray:
    """Bit mask per free node: 1 if its interior component touches S^-, 2 if it touches S^+."""
    cls = net.classes
    pos = np.full(net.n_nodes, -1, dtype=np.int64)
    pos[free] = np.arange(len(free))
    pi, pj = pos[net.ei], pos[net.ej]
    both = (pi >= 0) & (pj >= 0)
    labels = component_labels(len(free), pi[both], pj[both])
    mask = np.zeros(len(free), dtype=np.int64)
    for bit, side in ((1, NodeClass.LEFT), (2, NodeClass.RIGHT)):
        hit = np.zeros(len(free), dtype=bool)
        hit[labels[pi[(pi >= 0) & (cls[net.ej] == side)]]] = True
        hit[labels[pj[(pj >= 0) & (cls[net.ei] == side)]]] = True
        mask |= np.where(hit[labels], bit, 0)
    return mask


def _vals(sol) -> np.ndarray:
    return sol.values if isinstance(sol, PotentialSolution) else np.asarray(sol, dtype=float)


def flux_through_hyperplane(net: ResistorNetwork, sol, gamma: float) -> float:
    """Current crossing the hyperplane ``t = gamma`` from the low side to the high side."""
    half = net.frame.c * net.ell
    if not (-half <= gamma < half):
        raise ParameterError(f"gamma={gamma} outside [-{half}, {half})")
    v = _vals(sol)
    t = net.progress()
    cls = net.classes
    low = (cls == NodeClass.LEFT) | ((cls != NodeClass.RIGHT) & (t <= gamma))
    i, j, c = net.ei, net.ej, net.ec
    li, lj = low[i], low[j]
    cross = li != lj
    sign = np.where(li[cross], 1.0, -1.0)
    return float(np.sum(c[cross] * sign * (v[j[cross]] - v[i[cross]])))


def dissipated_energy(net: ResistorNetwork, sol) -> float:
    v = _vals(sol)
    return float(np.sum(net.ec * (v[net.ei] - v[net.ej]) ** 2))


def conductivity_report(net: ResistorNetwork, sol: PotentialSolution, n_gamma: int = 11) -> ConductivityReport:
    half = net.frame.c * net.ell
    gammas = -half + 2.0 * half * np.arange(n_gamma) / n_gamma
    profile = tuple((float(g), flux_through_hyperplane(net, sol, float(g))) for g in gammas)
    sigma_flux = flux_through_hyperplane(net, sol, -half)
    sigma_energy = dissipated_energy(net, sol)
    return ConductivityReport(ell=net.ell, dim=net.dim, sigma_flux=sigma_flux, sigma_energy=sigma_energy,
                              flux_profile=profile, rescaled=net.ell ** (2 - net.dim) * sigma_energy)


def competitor_energy(net: ResistorNetwork, competitor, atol: float = 0.0) -> float:
    """Dissipated energy of a feasible potential (0 on S^- and isolated parts, 1 on S^+)."""
    v = np.asarray(competitor, dtype=float)
    if v.shape != (net.n_nodes,):
        raise ContractError("competitor must assign one value per node")
    cls = net.classes
    zero = (cls == NodeClass.LEFT) | (cls == NodeClass.ISOLATED)
    if np.any(np.abs(v[zero]) > atol) or np.any(np.abs(v[cls == NodeClass.RIGHT] - 1.0) > atol):
        raise ContractError("competitor violates the boundary constraints")
    return dissipated_energy(net, v)


def kirchhoff_residual(net: ResistorNetwork, sol) -> np.ndarray:
    """Net current out of every node, scaled by its total conductance (free nodes only)."""
    v = _vals(sol)
    n = net.n_nodes
    flow = np.zeros(n)
    scale = np.zeros(n)
    dv = net.ec * (v[net.ej] - v[net.ei])
    np.add.at(flow, net.ei, dv)
    np.add.at(flow, net.ej, -dv)
    np.add.at(scale, net.ei, net.ec)
    np.add.at(scale, net.ej, net.ec)
    free = net.classes == NodeClass.INTERIOR
    return np.abs(flow[free]) / np.where(scale[free] > 0, scale[free], 1.0)


def dump_solution(sol) -> str:
    return "".join(f"{k} {float(v)!r}\n" for k, v in enumerate(_vals(sol)))


def parse_solution(text: str) -> np.ndarray:
    rows = [r.split() for r in text.splitlines() if r.strip()]
    return np.array([float(v) for _, v in rows])
