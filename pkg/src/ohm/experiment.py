"""Multi-size, multi-seed sweeps of the rescaled conductivity and related probes."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .env import ConductanceModel, MillerAbrahams, make_environment
from .errors import HypothesisError, OhmError, ParameterError
from .homog import EffectiveMatrix, assemble_effective_matrix, crossings_lower_bound, direction_geometry
from .network import DirectionFrame, aggregate_reservoirs, box_frame, build_network
from .solver import DEFAULT_TOL, ConductivityReport, conductivity_report, solve_potential


def worker_count(requested: int | None = None) -> int:
    """Pool size: ``requested`` (default: CPU count) capped by ``OHM_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("OHM_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"OHM_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _pool_map(fn: Callable, items: Sequence, threads: int | None):
    n = worker_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def model_name(model: ConductanceModel) -> str:
    return model.name


@dataclass(frozen=True)
class SweepConfig:
    model: ConductanceModel
    dim: int
    ells: tuple[float, ...]
    seeds: tuple[int, ...]
    direction: tuple[float, ...] | None = None
    geometry: str = "auto"  # "box", or "auto": tilted frame from the estimated D when needed
    margin: float | None = None
    intensity: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int | None = None
    n_gamma: int = 11
    method: str = "auto"
    crossings: bool = False
    torus_size: int | None = None
    torus_seeds: tuple[int, ...] = (0,)
    threads: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dimension must be at least 1")
        if not self.ells:
            raise ParameterError("the ell list is empty")
        if any(not b > a for a, b in zip(self.ells, self.ells[1:])):
            raise ParameterError("the ell list must be increasing")
        if any(not e > 0 for e in self.ells):
            raise ParameterError("ell values must be positive")
        if not self.seeds:
            raise ParameterError("the seed list is empty")
        if self.geometry not in ("auto", "box"):
            raise ParameterError(f"unknown geometry {self.geometry!r}")
        d = self.unit_direction()
        if len(d) != self.dim:
            raise ParameterError("direction has the wrong dimension")
        if self.torus_size is not None and self.torus_size < 2:
            raise ParameterError("torus size must be at least 2")

    def unit_direction(self) -> np.ndarray:
        e = np.eye(self.dim)[0] if self.direction is None else np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(e)
        if not norm > 0:
            raise ParameterError("direction must be nonzero")
        return e / norm


@dataclass(frozen=True)
class SweepRecord:
    ell: float
    seed: int
    report: ConductivityReport | None
    iterations: int = 0
    residual: float = float("nan")
    converged: bool = False
    crossing_bound: float = float("nan")
    n_crossings: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None and self.converged


@dataclass(frozen=True)
class LevelStats:
    ell: float
    mean: float
    std_error: float
    n_ok: int
    n_failed: int


@dataclass(frozen=True, eq=False)
class SweepResult:
    model: str
    dim: int
    direction: np.ndarray
    records: list[SweepRecord]
    predicted_limit: float | None
    effective: EffectiveMatrix | None
    frame_kind: str
    stats: list[LevelStats] = field(default_factory=list)

    @property
    def last_gap(self) -> float | None:
        """Relative gap of the last two per-size means to the predicted limit."""
        if self.predicted_limit is None or not self.stats:
            return None
        tail = [s.mean for s in self.stats[-2:] if s.n_ok]
        if not tail:
            return None
        scale = abs(self.predicted_limit) if self.predicted_limit else 1.0
        return float(max(abs(v - self.predicted_limit) for v in tail) / scale)


def level_stats(records: Sequence[SweepRecord], ells: Sequence[float]) -> list[LevelStats]:
    out = []
    for ell in ells:
        cell = [r for r in records if r.ell == ell]
        vals = np.array([r.report.rescaled for r in cell if r.ok])
        n = len(vals)
        mean = float(vals.mean()) if n else float("nan")
        se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append(LevelStats(ell=float(ell), mean=mean, std_error=se, n_ok=n, n_failed=len(cell) - n))
    return out


def _environment_for(cfg: SweepConfig, frame: DirectionFrame, ell: float, seed: int):
    margin = cfg.model.interaction_range if cfg.margin is None else cfg.margin
    window = frame.covering_window(ell, margin).grow(1.0)
    env = make_environment(cfg.model, window, seed, intensity=cfg.intensity)
    return env, margin


def solve_cell(cfg: SweepConfig, frame: DirectionFrame, ell: float, seed: int, keep_net: bool = False):
    """Build, prune, aggregate, solve and report one (ell, seed) instance."""
    env, margin = _environment_for(cfg, frame, ell, seed)
    net = aggregate_reservoirs(build_network(env, frame, ell, margin))
    sol = solve_potential(net, tol=cfg.tol, max_iter=cfg.max_iter, method=cfg.method)
    report = conductivity_report(net, sol, cfg.n_gamma)
    cross = None
    if cfg.crossings:
        cross = crossings_lower_bound(net)
    return (net, sol, report, cross) if keep_net else (sol, report, cross)


def predicted_limit(cfg: SweepConfig):
    """Predicted limit and frame, using a torus estimate of D when configured."""
    e = cfg.unit_direction()
    if cfg.torus_size is None:
        return None, None, box_frame(cfg.dim, e)
    em = assemble_effective_matrix(cfg.model, cfg.dim, cfg.torus_size, cfg.torus_seeds, intensity=cfg.intensity,
                                   tol=cfg.tol)
    try:
        geo = direction_geometry(em, e)
    except HypothesisError:
        # degenerate direction: the boxed conductivity tends to m e.De = 0
        return float(em.intensity * e @ em.matrix @ e), em, box_frame(cfg.dim, e)
    frame = geo.frame if cfg.geometry == "auto" else box_frame(cfg.dim, e)
    limit = geo.predicted_limit if cfg.geometry == "auto" else float(em.intensity * e @ em.matrix @ e)
    return limit, em, frame


def scaling_sweep(cfg: SweepConfig) -> SweepResult:
    limit, em, frame = predicted_limit(cfg)
    cells = [(ell, seed) for ell in cfg.ells for seed in cfg.seeds]

    def run(cell):
        ell, seed = cell
        try:
            sol, rep, cross = solve_cell(cfg, frame, ell, seed)
        except (OhmError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return SweepRecord(ell=float(ell), seed=int(seed), report=None, error=f"{type(exc).__name__}: {exc}")
        return SweepRecord(ell=float(ell), seed=int(seed), report=rep, iterations=sol.iterations,
                           residual=sol.residual, converged=sol.converged,
                           crossing_bound=cross.lower_bound if cross else float("nan"),
                           n_crossings=cross.n_crossings if cross else None,
                           error=None if sol.converged else "solver did not converge")

    records = _pool_map(run, cells, cfg.threads)
    return SweepResult(model=model_name(cfg.model), dim=cfg.dim, direction=cfg.unit_direction(), records=records,
                       predicted_limit=limit, effective=em, frame_kind=frame.kind,
                       stats=level_stats(records, cfg.ells))


# -------------------------------------------------------------- weak probe


def probe_functions(dim: int) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Smooth functions supported in the unit box: a bump and its modulations."""

    def bump(y):
        return np.prod((1.0 - 4.0 * y**2) ** 2 * (np.abs(y) < 0.5), axis=1)

    family = [bump, lambda y: bump(y) * np.sin(np.pi * y[:, 0])]
    if dim >= 2:
        family.append(lambda y: bump(y) * np.sin(np.pi * y[:, 1]))
    return family


@dataclass(frozen=True)
class WeakConvergenceProbe:
    ells: tuple[float, ...]
    n_functions: int
    values: dict  # (ell, phi_index) -> pairing averaged over seeds

    def series(self, k: int) -> list[float]:
        return [self.values[(ell, k)] for ell in self.ells]


def pairing(net, sol, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """``eps^d * sum over nodes in the box of (V - psi)(x) phi(eps x)`` with ``eps = 1/ell``."""
    inside = net.in_box()
    q = net.coords[inside]
    eps = 1.0 / net.ell
    y = q * eps
    v = sol.values[inside]
    psi = net.frame.psi(q, net.ell)
    return float(eps**net.dim * np.sum((v - psi) * phi(y)))


def weak_convergence_probe(cfg: SweepConfig, functions=None) -> WeakConvergenceProbe:
    frame = box_frame(cfg.dim, cfg.unit_direction())
    family = probe_functions(cfg.dim) if functions is None else list(functions)
    cells = [(ell, seed) for ell in cfg.ells for seed in cfg.seeds]

    def run(cell):
        ell, seed = cell
        net, sol, _, _ = solve_cell(replace(cfg, crossings=False), frame, ell, seed, keep_net=True)
        return [pairing(net, sol, phi) for phi in family]

    rows = _pool_map(run, cells, cfg.threads)
    values = {}
    for ell in cfg.ells:
        got = [r for (e, _), r in zip(cells, rows) if e == ell]
        for k in range(len(family)):
            values[(float(ell), k)] = float(np.mean([g[k] for g in got]))
    return WeakConvergenceProbe(ells=tuple(float(e) for e in cfg.ells), n_functions=len(family), values=values)


# -------------------------------------------------------------------- Mott


@dataclass(frozen=True)
class MottRow:
    beta: float
    d11: float
    log_d11: float
    mott_abscissa: float


def mott_sweep(betas: Sequence[float], model: MillerAbrahams, dim: int, N: int, seed: int, intensity: float,
               tol: float = DEFAULT_TOL, threads: int | None = None) -> list[MottRow]:
    """Corrector estimate of D_11 as beta varies on one fixed marked sample.

    Points and marks depend on the seed only, so every beta sees the same
    sample.  The abscissa ``beta^((alpha+1)/(alpha+1+d))`` is reported for
    plotting against ``log D_11``.
    """
    if not isinstance(model, MillerAbrahams):
        raise ParameterError("the Mott sweep needs the Miller-Abrahams model")
    betas = [float(b) for b in betas]
    if not betas:
        raise ParameterError("the beta list is empty")
    if any(b < 0 for b in betas) or any(not b > a for a, b in zip(betas, betas[1:])):
        raise ParameterError("betas must be nonnegative and increasing")

    def run(beta):
        em = assemble_effective_matrix(replace(model, beta=beta), dim, N, [seed], intensity=intensity, tol=tol)
        d11 = float(em.matrix[0, 0])
        expo = (model.alpha + 1.0) / (model.alpha + 1.0 + dim)
        return MottRow(beta=beta, d11=d11, log_d11=math.log(d11) if d11 > 0 else float("-inf"),
                       mott_abscissa=beta**expo)

    return _pool_map(run, betas, threads)


__all__ = ["SweepConfig", "SweepRecord", "SweepResult", "LevelStats", "WeakConvergenceProbe", "MottRow",
           "scaling_sweep", "weak_convergence_probe", "mott_sweep", "solve_cell", "predicted_limit", "pairing",
           "probe_functions", "level_stats", "worker_count", "model_name"]
