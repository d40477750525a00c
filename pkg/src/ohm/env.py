"""Stochastic environments: point clouds, energy marks and conductance fields.

Supported models are the nearest-neighbor random conductance model on Z^d,
Bernoulli bond percolation on Z^d, the Miller-Abrahams network on a marked
Poisson process and an explicit user-supplied edge list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import special

from . import rng
from .errors import ContractError, EstimationError, ParameterError, PointLookupError
from .neighbors import neighbor_pairs


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ParameterError("box corners have different dimensions")

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls((float(lo),) * dim, (float(hi),) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def contains(self, pts: np.ndarray, slack: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lo) - slack
        hi = np.asarray(self.hi) + slack
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def shrink(self, margin: float) -> "Box":
        return Box(tuple(a + margin for a in self.lo), tuple(b - margin for b in self.hi))

    def grow(self, margin: float) -> "Box":
        return self.shrink(-margin)

    def covers(self, other: "Box", slack: float = 1e-9) -> bool:
        return all(a <= b + slack for a, b in zip(self.lo, other.lo)) and all(
            a >= b - slack for a, b in zip(self.hi, other.hi)
        )


@dataclass(frozen=True, eq=False)
class PointCloud:
    dim: int
    points: np.ndarray
    window: Box

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        object.__setattr__(self, "points", pts)
        if self.window.dim != self.dim:
            raise ParameterError("window dimension does not match the cloud")
        if len(pts) and not np.all(self.window.contains(pts, slack=1e-12)):
            raise ParameterError("point outside the sampling window")

    def __len__(self) -> int:
        return len(self.points)

    def has_duplicates(self) -> bool:
        if len(self.points) < 2:
            return False
        return len(np.unique(self.points, axis=0)) < len(self.points)

    def dump(self) -> str:
        return "".join(" ".join(repr(float(v)) for v in p) + "\n" for p in self.points)


# ---------------------------------------------------------------- weight laws


@dataclass(frozen=True)
class ConstantWeights:
    """Deterministic weight per lattice axis (``axis_weights[k]`` for edges along e_k)."""

    axis_weights: tuple[float, ...]

    def __post_init__(self):
        if not self.axis_weights or min(self.axis_weights) < 0:
            raise ParameterError("axis weights must be nonnegative")

    def draw(self, u, axis, lower):
        return np.asarray(self.axis_weights, dtype=float)[axis]


@dataclass(frozen=True)
class UniformWeights:
    low: float
    high: float

    def __post_init__(self):
        if not 0 <= self.low <= self.high:
            raise ParameterError("uniform weights need 0 <= low <= high")

    def draw(self, u, axis, lower):
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class DiscreteWeights:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ParameterError("values and probs must be nonempty and of equal length")
        if min(self.values) < 0 or min(self.probs) < 0 or not sum(self.probs) > 0:
            raise ParameterError("weights and probabilities must be nonnegative")

    def draw(self, u, axis, lower):
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf / cdf[-1], u, side="right")
        return np.asarray(self.values, dtype=float)[np.minimum(idx, len(self.values) - 1)]


@dataclass(frozen=True)
class PeriodicWeights:
    """Deterministic periodic pattern: edge {x, x+e_k} gets ``pattern[k][x_k mod len]``."""

    pattern: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.pattern or any(not row or min(row) < 0 for row in self.pattern):
            raise ParameterError("periodic pattern rows must be nonempty and nonnegative")

    def draw(self, u, axis, lower):
        axis = np.asarray(axis)
        lower = np.atleast_2d(lower)
        out = np.empty(len(axis))
        for k, pat in enumerate(self.pattern):
            sel = axis == k
            if np.any(sel):
                out[sel] = np.asarray(pat, dtype=float)[np.mod(lower[sel, k], len(pat)).astype(int)]
        return out


WeightLaw = Union[ConstantWeights, UniformWeights, DiscreteWeights, PeriodicWeights]


# --------------------------------------------------------------------- models


@dataclass(frozen=True)
class LatticeRCM:
    law: WeightLaw
    name = "lattice_rcm"

    @property
    def interaction_range(self) -> float:
        return 1.0


@dataclass(frozen=True)
class BondPercolation:
    p: float
    name = "bond_percolation"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"percolation probability p={self.p} outside [0, 1]")

    @property
    def interaction_range(self) -> float:
        return 1.0


@dataclass(frozen=True)
class MillerAbrahams:
    gamma: float
    beta: float
    alpha: float = 0.0
    A: float = 1.0
    cutoff: float = 1e-12
    name = "miller_abrahams"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError("gamma must be positive")
        if self.beta < 0:
            raise ParameterError("beta must be nonnegative")
        if self.alpha < 0:
            raise ParameterError("alpha must be nonnegative")
        if self.A <= 0:
            raise ParameterError("A must be positive")
        if not 0.0 < self.cutoff < 1.0:
            raise ParameterError("cutoff must lie in (0, 1)")

    @property
    def interaction_range(self) -> float:
        """Distance beyond which the spatial factor alone is below the cutoff."""
        return 0.5 * self.gamma * math.log(1.0 / self.cutoff)


@dataclass(frozen=True)
class ExplicitEdges:
    """Fixed edge list between cloud point indices."""

    edges: tuple[tuple[int, int, float], ...]
    name = "explicit"

    def __post_init__(self):
        for i, j, c in self.edges:
            if i == j:
                raise ParameterError("explicit self-loop")
            if c < 0:
                raise ParameterError("negative conductance")

    @property
    def interaction_range(self) -> float:
        return math.inf


ConductanceModel = Union[LatticeRCM, BondPercolation, MillerAbrahams, ExplicitEdges]
LATTICE_MODELS = (LatticeRCM, BondPercolation)


@dataclass(frozen=True, eq=False)
class Environment:
    """A realized point cloud together with its conductance field.

    ``shift`` realizes the translated environment: conductances are keyed by
    ``coordinates + shift``, so ``c_{x,y}(env.translated(g)) == c_{x+g,y+g}(env)``.
    ``period`` marks a torus environment whose lattice edges are keyed modulo
    the period.
    """

    cloud: PointCloud
    model: ConductanceModel
    seed: int
    marks: np.ndarray | None = None
    shift: tuple[float, ...] | None = None
    period: float | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        is_ma = isinstance(self.model, MillerAbrahams)
        if is_ma != (self.marks is not None):
            raise ContractError("marks must be present exactly for the Miller-Abrahams model")
        if is_ma:
            marks = np.asarray(self.marks, dtype=float)
            if marks.shape != (len(self.cloud),):
                raise ContractError("one mark per point required")
            if np.any(np.abs(marks) > self.model.A):
                raise ContractError("mark outside [-A, A]")
            object.__setattr__(self, "marks", marks)
        if isinstance(self.model, LATTICE_MODELS) and len(self.cloud):
            if not np.array_equal(self.cloud.points, np.round(self.cloud.points)):
                raise ContractError("lattice models need integer points")

    @property
    def dim(self) -> int:
        return self.cloud.dim

    def translated(self, g: Sequence[float]) -> "Environment":
        """The environment seen after translating space by ``g``."""
        g = np.asarray(g, dtype=float)
        base = np.zeros(self.dim) if self.shift is None else np.asarray(self.shift)
        pts = self.cloud.points - g
        win = Box(tuple(np.asarray(self.cloud.window.lo) - g), tuple(np.asarray(self.cloud.window.hi) - g))
        return replace(self, cloud=PointCloud(self.dim, pts, win), shift=tuple(base + g))

    def index_of(self, x) -> int:
        if self._index is None:
            object.__setattr__(self, "_index", {tuple(p): k for k, p in enumerate(self.cloud.points.tolist())})
        key = tuple(float(v) for v in np.asarray(x, dtype=float).ravel())
        try:
            return self._index[key]
        except KeyError:
            raise PointLookupError(f"point {key} not in the environment") from None

    # conductances are evaluated in bulk for index pairs; ``disp`` overrides
    # ``points[j] - points[i]`` (needed on the torus)
    def pair_conductances(self, i: np.ndarray, j: np.ndarray, disp: np.ndarray | None = None) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        pts = self.cloud.points
        if disp is None:
            disp = pts[j] - pts[i]
        disp = np.atleast_2d(np.asarray(disp, dtype=float)).reshape(len(i), self.dim)
        model = self.model
        if isinstance(model, MillerAbrahams):
            r = np.sqrt((disp**2).sum(axis=1))
            ei, ej = self.marks[i], self.marks[j]
            energy = np.abs(ei) + np.abs(ej) + np.abs(ei - ej)
            c = np.exp(-(2.0 / model.gamma) * r - 0.5 * model.beta * energy)
            c[(c < model.cutoff) | (r == 0.0)] = 0.0
            return c
        if isinstance(model, ExplicitEdges):
            table = {}
            for a, b, c in model.edges:
                key = (min(a, b), max(a, b))
                table[key] = table.get(key, 0.0) + c
            return np.array([table.get((min(a, b), max(a, b)), 0.0) for a, b in zip(i.tolist(), j.tolist())])
        return self._lattice_conductances(pts[i], disp)

    def _lattice_conductances(self, x: np.ndarray, disp: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x))
        if len(x) == 0:
            return out
        nn = (np.abs(disp).sum(axis=1) == 1.0) & (np.count_nonzero(disp, axis=1) == 1)
        if not np.any(nn):
            return out
        xs, ds = x[nn], disp[nn]
        axis = np.argmax(np.abs(ds), axis=1)
        forward = ds[np.arange(len(ds)), axis] > 0
        lower = np.where(forward[:, None], xs, xs + ds)
        if self.shift is not None:
            lower = lower + np.asarray(self.shift)
        if self.period is not None:
            lower = np.mod(lower, self.period)
        lower = np.round(lower).astype(np.int64)
        keys = [lower[:, k] for k in range(self.dim)]
        u = rng.uniforms(self.seed, rng.TAG_EDGE, axis, *keys)
        if isinstance(self.model, BondPercolation):
            vals = (u < self.model.p).astype(float)
        else:
            vals = np.broadcast_to(np.asarray(self.model.law.draw(u, axis, lower), dtype=float), (len(xs),)).copy()
        out[nn] = vals
        return out

    def candidate_pairs(self, subset: np.ndarray | None = None):
        """Index pairs (within ``subset``) that may carry positive conductance."""
        idx = np.arange(len(self.cloud)) if subset is None else np.asarray(subset, dtype=np.int64)
        if isinstance(self.model, ExplicitEdges):
            pos = {int(k): n for n, k in enumerate(idx.tolist())}
            ii, jj = [], []
            for a, b, _ in self.model.edges:
                if a in pos and b in pos:
                    ii.append(a)
                    jj.append(b)
            ii = np.asarray(ii, np.int64)
            jj = np.asarray(jj, np.int64)
            return ii, jj, self.cloud.points[jj] - self.cloud.points[ii]
        radius = self.model.interaction_range
        if isinstance(self.model, LATTICE_MODELS):
            radius = 1.0 + 1e-9
        i, j, disp = neighbor_pairs(self.cloud.points[idx], radius, self.period)
        return idx[i], idx[j], disp


# ------------------------------------------------------------------- sampling


def _check_window(window: Box) -> None:
    if any(b <= a for a, b in zip(window.lo, window.hi)):
        raise ParameterError(f"degenerate window {window}")


def sample_poisson_points(intensity: float, window: Box, seed: int) -> PointCloud:
    """Homogeneous Poisson process of the given intensity in ``window``."""
    if not intensity > 0:
        raise ParameterError("intensity must be positive")
    _check_window(window)
    gen = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, rng.TAG_POISSON]))
    n = gen.poisson(intensity * window.volume)
    lo = np.asarray(window.lo)
    hi = np.asarray(window.hi)
    pts = lo + (hi - lo) * gen.random((n, window.dim))
    return PointCloud(window.dim, pts, window)


def sample_energy_marks(cloud: PointCloud, alpha: float, A: float, seed: int) -> np.ndarray:
    """I.i.d. marks with density proportional to ``|E|^alpha`` on ``[-A, A]``.

    Marks are keyed by point index, so they are reproducible point by point.
    """
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    if not A > 0:
        raise ParameterError("A must be positive")
    idx = np.arange(len(cloud))
    u1 = rng.uniforms(seed, rng.TAG_MARK_SIGN, idx)
    u2 = rng.uniforms(seed, rng.TAG_MARK_SIZE, idx)
    sign = np.where(u1 < 0.5, -1.0, 1.0)
    return sign * A * u2 ** (1.0 / (alpha + 1.0))


def lattice_points(dim: int, region: Box) -> PointCloud:
    """All points of Z^d inside ``region`` (closed), in lexicographic order."""
    if dim < 1:
        raise ParameterError("dimension must be at least 1")
    if region.dim != dim:
        raise ParameterError("region dimension mismatch")
    axes = [np.arange(math.ceil(a), math.floor(b) + 1, dtype=float) for a, b in zip(region.lo, region.hi)]
    if any(len(a) == 0 for a in axes):
        return PointCloud(dim, np.zeros((0, dim)), region)
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    return PointCloud(dim, pts, region)


def make_environment(model: ConductanceModel, window: Box, seed: int, intensity: float | None = None,
                     cloud: PointCloud | None = None) -> Environment:
    """Realize ``model`` in ``window``: lattice points or a marked Poisson sample."""
    dim = window.dim
    if cloud is None:
        if isinstance(model, LATTICE_MODELS):
            cloud = lattice_points(dim, window)
        elif isinstance(model, MillerAbrahams):
            if intensity is None:
                raise ParameterError("the Miller-Abrahams model needs an intensity")
            cloud = sample_poisson_points(intensity, window, seed)
        else:
            raise ParameterError("explicit models need an explicit cloud")
    marks = None
    if isinstance(model, MillerAbrahams):
        marks = sample_energy_marks(cloud, model.alpha, model.A, seed)
    return Environment(cloud=cloud, model=model, seed=seed, marks=marks)


def periodic_environment(model: ConductanceModel, dim: int, N: int, seed: int,
                         intensity: float | None = None) -> Environment:
    """The environment periodized on the torus ``[0, N)^d``."""
    if N < 1:
        raise ParameterError("torus size must be positive")
    window = Box.cube(0.0, float(N), dim)
    if isinstance(model, LATTICE_MODELS):
        cloud = lattice_points(dim, Box.cube(0.0, float(N - 1), dim))
        cloud = PointCloud(dim, cloud.points, window)
    elif isinstance(model, MillerAbrahams):
        if intensity is None:
            raise ParameterError("the Miller-Abrahams model needs an intensity")
        cloud = sample_poisson_points(intensity, window, seed)
        cloud = PointCloud(dim, np.mod(cloud.points, float(N)), window)
    else:
        raise ParameterError("explicit models cannot be periodized")
    env = make_environment(model, window, seed, cloud=cloud)
    return replace(env, period=float(N))


# --------------------------------------------------------------- evaluations


def edge_conductance(env: Environment, x, y) -> float:
    """Conductance ``c_{x,y}`` between two points of the cloud."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if np.array_equal(x, y):
        raise ContractError("conductance of a point with itself is not an edge")
    i = env.index_of(x)
    j = env.index_of(y)
    return float(env.pair_conductances(np.array([i]), np.array([j]), (y - x)[None, :])[0])


@dataclass(frozen=True)
class LambdaEstimate:
    k: int
    value: float
    sample_count: int
    std_error: float
    dropped_mass_bound: float = 0.0
    expected_tail: float = 0.0


def _sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def ma_expected_tail(model: MillerAbrahams, intensity: float, dim: int, k: int, radius: float) -> float:
    """Campbell bound on E sum_{|y-x|>radius} c_{x,y} |x-y|^k for a Poisson sample."""
    s = k + dim
    scale = 0.5 * model.gamma
    # int_r^inf e^{-t/scale} t^{s-1} dt = scale^s Gamma(s, r/scale)
    return intensity * _sphere_area(dim) * scale**s * special.gammaincc(s, radius / scale) * math.gamma(s)


def estimate_lambda_k(env: Environment, k: int, probe_window: Box) -> LambdaEstimate:
    """Point average of ``sum_y c_{x,y} |x-y|^k`` over cloud points in ``probe_window``.

    For the Miller-Abrahams model, edges below the cutoff are left out and
    ``dropped_mass_bound`` bounds, for this sample, the average mass they
    carry: exact mass within the cutoff radius plus ``cutoff * r^k`` for every
    farther point (the spatial factor is decreasing there).
    """
    if k not in (0, 2):
        raise ParameterError("k must be 0 or 2")
    rng_ = env.model.interaction_range
    if math.isfinite(rng_) and not env.cloud.window.covers(probe_window.shrink(-rng_)):
        raise ParameterError("probe window too close to the environment boundary")
    pts = env.cloud.points
    probe = np.nonzero(probe_window.contains(pts))[0] if len(pts) else np.zeros(0, np.int64)
    if len(probe) == 0:
        raise EstimationError("no probe points in the probe window")
    i, j, disp = env.candidate_pairs()
    c = env.pair_conductances(i, j, disp)
    r = np.sqrt((disp**2).sum(axis=1))
    w = c * r**k
    acc = np.zeros(len(pts))
    np.add.at(acc, i, w)
    np.add.at(acc, j, w)
    vals = acc[probe]
    dropped = 0.0
    tail = 0.0
    if isinstance(env.model, MillerAbrahams):
        model = env.model
        ma = np.zeros(len(pts))
        near = np.zeros(len(pts))
        raw = np.exp(-(2.0 / model.gamma) * r - 0.5 * model.beta * (
            np.abs(env.marks[i]) + np.abs(env.marks[j]) + np.abs(env.marks[i] - env.marks[j])))
        lost = np.where(c == 0.0, raw * r**k, 0.0)
        np.add.at(ma, i, lost)
        np.add.at(ma, j, lost)
        np.add.at(near, i, 1.0)
        np.add.at(near, j, 1.0)
        far = (len(pts) - 1) - near[probe]
        dropped = float(np.mean(ma[probe] + far * model.cutoff * rng_**k))
        tail = ma_expected_tail(model, len(pts) / env.cloud.window.volume, env.dim, k, rng_)
    n = len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return LambdaEstimate(k=k, value=float(np.mean(vals)), sample_count=n, std_error=se,
                          dropped_mass_bound=dropped, expected_tail=tail)
