"""
Discrete probability measures on R^d, cost tabulation and coupling containers.

All containers are immutable after construction: their arrays are marked
read-only, so they can be shared between threads without copying.

Random measures are drawn with numpy's PCG64 generator (64-bit state,
explicitly seeded); the same seed always produces bit-identical measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MERGE_TOL = 1e-12
DROP_TOL = 1e-14
NEG_CLAMP_TOL = 1e-14
SUM_TOL = 1e-12
MARGINAL_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely many atoms in R^d carrying probability weights.

    Parameters
    ----------
    support : array-like, shape (m, d)
        Atom coordinates.
    weights : array-like, shape (m,)
        Nonnegative weights summing to one.

    Use :func:`make_measure` to build a measure from raw data; the
    constructor only validates (it does not merge or renormalize).
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if support.ndim != 2 or support.shape[1] < 1:
            raise ValueError("support must have shape (m, d) with d >= 1")
        if support.shape[0] != weights.shape[0]:
            raise ValueError(
                f"support has {support.shape[0]} atoms but {weights.shape[0]} weights"
            )
        if support.shape[0] == 0:
            raise ValueError("a measure needs at least one atom")
        if not (np.all(np.isfinite(support)) and np.all(np.isfinite(weights))):
            raise ValueError("support and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(weights) - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {math.fsum(weights)!r}, expected 1")
        object.__setattr__(self, "support", _readonly(support))
        object.__setattr__(self, "weights", _readonly(weights))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def allclose(self, other: "DiscreteMeasure", atol: float = MARGINAL_TOL) -> bool:
        """True if both measures put the same mass (within atol) on the same atoms.

        Atom order is irrelevant; atoms closer than the merge tolerance are
        identified.
        """
        if self.dim != other.dim:
            return False
        matched = np.zeros(other.size, dtype=bool)
        for x, w in zip(self.support, self.weights):
            d = np.max(np.abs(other.support - x), axis=1)
            hits = np.flatnonzero(d < MERGE_TOL)
            if hits.size == 0:
                if w > atol:
                    return False
                continue
            k = hits[0]
            matched[k] = True
            if abs(other.weights[k] - w) > atol:
                return False
        return bool(np.all(other.weights[~matched] <= atol))

    def to_dict(self) -> dict:
        return {"points": self.support.tolist(), "weights": self.weights.tolist()}


def make_measure(points, weights) -> DiscreteMeasure:
    """Build a normalized measure, merging duplicate atoms.

    Points closer than ``MERGE_TOL`` in sup-norm are merged (the first
    occurrence keeps its coordinates), weights are normalized, atoms whose
    normalized weight falls below ``DROP_TOL`` are removed and the rest
    renormalized. Applying the function to its own output is a no-op.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.asarray(weights, dtype=float).ravel()
    if pts.ndim != 2:
        raise ValueError("points must be a list of equal-length coordinate vectors")
    if pts.shape[0] != w.shape[0]:
        raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
        raise ValueError("points and weights must be finite")
    if np.any(w < -NEG_CLAMP_TOL):
        raise ValueError("weights must be nonnegative")
    w = np.clip(w, 0.0, None)

    reps: list[np.ndarray] = []
    acc: list[float] = []
    for x, wx in zip(pts, w):
        for k, r in enumerate(reps):
            if np.max(np.abs(r - x)) < MERGE_TOL:
                acc[k] += wx
                break
        else:
            reps.append(x)
            acc.append(wx)

    merged = np.array(acc)
    total = math.fsum(merged)
    if total <= 0:
        raise ValueError("all weights are zero")
    merged = _normalize(merged, total)
    keep = merged >= DROP_TOL
    if not np.all(keep):
        merged = merged[keep]
        merged = _normalize(merged, math.fsum(merged))
    support = np.array(reps)[keep]
    return DiscreteMeasure(support, merged)


def _normalize(w: np.ndarray, total: float) -> np.ndarray:
    # leave already-normalized vectors untouched so that make_measure is idempotent
    if abs(total - 1.0) <= 4 * np.finfo(float).eps * max(1, w.size):
        return w
    return w / total


def dirac(point) -> DiscreteMeasure:
    return make_measure([np.atleast_1d(np.asarray(point, dtype=float))], [1.0])


def uniform_grid_measure(n: int, interval: Sequence[float] = (0.0, 1.0)) -> DiscreteMeasure:
    """Midpoint discretization of the uniform law on ``[a, b]`` with n atoms."""
    if n < 1:
        raise ValueError("grid needs n >= 1 atoms")
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    x = a + (np.arange(n) + 0.5) * (b - a) / n
    return DiscreteMeasure(x[:, None], np.full(n, 1.0 / n))


def random_measure(n: int, dim: int = 1, seed: int = 0) -> DiscreteMeasure:
    """Random measure with PCG64 seeded by ``seed``.

    Atoms are uniform on [0, 1)^dim and weights are uniform on [0.05, 1.05)
    before normalization.
    """
    if n < 1 or dim < 1:
        raise ValueError("need n >= 1 and dim >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = rng.random((n, dim))
    w = rng.random(n) + 0.05
    return make_measure(pts, w)


def pairwise_distance(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the rows of X and Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


# -- cost functions ----------------------------------------------------------

BUILTIN_COSTS = ("euclidean", "truncated", "power", "squared-shift", "family-A")
SHIFT_MAPS = ("identity", "reflection")


@dataclass(frozen=True, eq=False)
class CostSpec:
    """A cost h(x, y) >= 0, either an explicit matrix or a named builtin.

    Builtins and their parameters:

    ``euclidean``        |x - y|
    ``truncated``        min(|x - y|, 1)
    ``power``            |x - y|^p, ``p >= 1``
    ``squared-shift``    t |y - f(x)|^2 with ``f`` in {identity, reflection}
                         where reflection is x -> 1 - x
    ``family-A``         min(|x-y|, |x+y-1| + t) for t >= 0 and
                         min(|x-y| - t, |x+y-1|) for t < 0 (one-dimensional)
    """

    kind: str
    name: str | None = None
    params: dict = field(default_factory=dict)
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "matrix":
            if self.matrix is None:
                raise ValueError("matrix cost needs a matrix")
            object.__setattr__(self, "matrix", _readonly(self.matrix))
        elif self.kind == "builtin":
            if self.name not in BUILTIN_COSTS:
                raise ValueError(f"unknown builtin cost {self.name!r}")
            if self.name == "power" and float(self.params.get("p", 1.0)) < 1:
                raise ValueError("power cost needs p >= 1")
            if self.name == "squared-shift" and self.params.get("f", "identity") not in SHIFT_MAPS:
                raise ValueError(f"shift map must be one of {SHIFT_MAPS}")
        else:
            raise ValueError(f"unknown cost kind {self.kind!r}")

    @classmethod
    def from_matrix(cls, matrix) -> "CostSpec":
        return cls("matrix", matrix=np.asarray(matrix, dtype=float))

    @classmethod
    def builtin(cls, name: str, **params) -> "CostSpec":
        return cls("builtin", name=name, params=dict(params))

    def to_dict(self) -> dict:
        if self.kind == "matrix":
            return {"matrix": self.matrix.tolist()}
        return {"builtin": self.name, "params": dict(self.params)}


def _cost_table(spec: CostSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    name, prm = spec.name, spec.params
    if name == "euclidean":
        return pairwise_distance(X, Y)
    if name == "truncated":
        return np.minimum(pairwise_distance(X, Y), 1.0)
    if name == "power":
        return pairwise_distance(X, Y) ** float(prm.get("p", 1.0))
    if name == "squared-shift":
        t = float(prm.get("t", 1.0))
        fx = X if prm.get("f", "identity") == "identity" else 1.0 - X
        return t * pairwise_distance(fx, Y) ** 2
    if name == "family-A":
        if X.shape[1] != 1 or Y.shape[1] != 1:
            raise ValueError("family-A cost is defined on the real line only")
        t = float(prm.get("t", 0.0))
        x, y = X[:, 0][:, None], Y[:, 0][None, :]
        if t >= 0:
            return np.minimum(np.abs(x - y), np.abs(x + y - 1.0) + t)
        return np.minimum(np.abs(x - y) - t, np.abs(x + y - 1.0))
    raise AssertionError(name)


def eval_cost(spec: CostSpec, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Tabulate h(x_i, y_j) on the supports of mu and nu."""
    if spec.kind == "matrix":
        C = np.array(spec.matrix)
        if C.shape != (mu.size, nu.size):
            raise ValueError(f"cost matrix has shape {C.shape}, expected {(mu.size, nu.size)}")
    else:
        if mu.dim != nu.dim:
            raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
        C = _cost_table(spec, mu.support, nu.support)
    if not np.all(np.isfinite(C)):
        raise ValueError("cost has non-finite entries")
    if np.any(C < 0):
        raise ValueError("cost has negative entries")
    C.setflags(write=False)
    return C


# -- couplings ---------------------------------------------------------------


def _check_marginal(mass: np.ndarray, axis_keep: int, measure: DiscreteMeasure, tol: float):
    other = tuple(a for a in range(mass.ndim) if a != axis_keep)
    marg = mass.sum(axis=other)
    if marg.shape != measure.weights.shape:
        raise ValueError(
            f"axis {axis_keep} has {marg.shape[0]} cells, marginal has {measure.size} atoms"
        )
    err = np.max(np.abs(marg - measure.weights))
    if err > tol:
        raise ValueError(f"marginal on axis {axis_keep} off by {err:.3e}")


def _clean_mass(mass) -> np.ndarray:
    mass = np.array(mass, dtype=float)
    if not np.all(np.isfinite(mass)):
        raise ValueError("coupling mass must be finite")
    if np.any(mass < -MARGINAL_TOL):
        raise ValueError("coupling mass must be nonnegative")
    return np.clip(mass, 0.0, None)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between two discrete measures (an m x n mass matrix)."""

    row_measure: DiscreteMeasure
    col_measure: DiscreteMeasure
    mass: np.ndarray
    # (root array, root axes) used to make repeated projections exact
    _source: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        mass = _clean_mass(self.mass)
        if mass.shape != (self.row_measure.size, self.col_measure.size):
            raise ValueError(
                f"mass has shape {mass.shape}, expected "
                f"{(self.row_measure.size, self.col_measure.size)}"
            )
        _check_marginal(mass, 0, self.row_measure, MARGINAL_TOL)
        _check_marginal(mass, 1, self.col_measure, MARGINAL_TOL)
        object.__setattr__(self, "mass", _readonly(mass))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    @property
    def marginals(self) -> list[DiscreteMeasure]:
        return [self.row_measure, self.col_measure]

    def transpose(self) -> "Coupling":
        return Coupling(self.col_measure, self.row_measure, self.mass.T)

    def cost(self, C: np.ndarray) -> float:
        return float(np.sum(np.asarray(C) * self.mass))

    def marginal_residuals(self) -> tuple[float, float]:
        r = np.max(np.abs(self.mass.sum(axis=1) - self.row_measure.weights))
        c = np.max(np.abs(self.mass.sum(axis=0) - self.col_measure.weights))
        return float(r), float(c)

    def to_dict(self) -> dict:
        return {
            "mu": self.row_measure.to_dict(),
            "nu": self.col_measure.to_dict(),
            "mass": self.mass.tolist(),
        }


@dataclass(frozen=True, eq=False)
class MultiCoupling:
    """Joint measure on a product of k finite spaces with prescribed marginals."""

    marginals: tuple
    mass: np.ndarray
    _source: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        margs = tuple(self.marginals)
        mass = _clean_mass(self.mass)
        if mass.ndim != len(margs):
            raise ValueError(f"{mass.ndim}-dimensional mass for {len(margs)} marginals")
        for a, m in enumerate(margs):
            _check_marginal(mass, a, m, MARGINAL_TOL)
        object.__setattr__(self, "marginals", margs)
        object.__setattr__(self, "mass", _readonly(mass))

    @property
    def k(self) -> int:
        return len(self.marginals)


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    return Coupling(mu, nu, np.outer(mu.weights, nu.weights))


def pushforward_projection(c, axes):
    """Marginalize a coupling onto a subset of its axes (0-based).

    Returns a :class:`DiscreteMeasure` for a single axis, a :class:`Coupling`
    for two axes and a :class:`MultiCoupling` otherwise. Axes may be given
    in any order; the output follows that order. Sums are always taken over
    the original array the coupling was derived from, with a fixed reduction,
    so projecting to A and then to B gives bit-for-bit the same numbers as
    projecting to B directly.
    """
    k = len(c.marginals)
    axes = tuple(int(a) for a in np.atleast_1d(axes))
    if not axes:
        raise ValueError("axes must be nonempty")
    if len(set(axes)) != len(axes) or any(a < 0 or a >= k for a in axes):
        raise ValueError(f"invalid axes {axes} for a {k}-marginal coupling")

    root, root_axes = c._source if c._source is not None else (c.mass, tuple(range(k)))
    target = tuple(root_axes[a] for a in axes)
    removed = tuple(a for a in range(root.ndim) if a not in target)
    out = root.sum(axis=removed) if removed else np.array(root)
    kept_sorted = sorted(target)
    out = np.transpose(out, [kept_sorted.index(a) for a in target])
    margs = [c.marginals[a] for a in axes]
    src = (root, target)

    if len(axes) == 1:
        return DiscreteMeasure(margs[0].support, out)
    if len(axes) == 2:
        return Coupling(margs[0], margs[1], out, _source=src)
    return MultiCoupling(tuple(margs), out, _source=src)


def coupling_to_measure(c) -> DiscreteMeasure:
    """View a coupling as a measure on the product space.

    Atoms are the concatenated coordinates of the positive cells; the first
    marginal's coordinates come first.
    """
    margs = c.marginals
    idx = np.argwhere(c.mass > 0)
    pts = np.hstack([margs[a].support[idx[:, a]] for a in range(len(margs))])
    w = c.mass[tuple(idx.T)]
    return make_measure(pts, w)


# -- serialization -----------------------------------------------------------


def measure_from_dict(doc: dict) -> DiscreteMeasure:
    """Parse a measure document.

    Accepted forms: ``{"points": [[...]], "weights": [...]}``,
    ``{"grid": {"n": int, "interval": [a, b]}}`` and
    ``{"random": {"n": int, "dim": int, "seed": int}}``.
    """
    if not isinstance(doc, dict):
        raise ValueError("measure must be a JSON object")
    if "grid" in doc:
        g = doc["grid"]
        if "n" not in g:
            raise ValueError("grid measure: missing field 'n'")
        return uniform_grid_measure(int(g["n"]), g.get("interval", [0.0, 1.0]))
    if "random" in doc:
        r = doc["random"]
        if "n" not in r:
            raise ValueError("random measure: missing field 'n'")
        return random_measure(int(r["n"]), int(r.get("dim", 1)), int(r.get("seed", 0)))
    for key in ("points", "weights"):
        if key not in doc:
            raise ValueError(f"measure: missing field '{key}'")
    return make_measure(doc["points"], doc["weights"])


def cost_from_dict(doc: dict) -> CostSpec:
    if not isinstance(doc, dict):
        raise ValueError("cost must be a JSON object")
    if "matrix" in doc:
        return CostSpec.from_matrix(doc["matrix"])
    if "builtin" in doc:
        return CostSpec.builtin(doc["builtin"], **doc.get("params", {}))
    raise ValueError("cost: expected field 'matrix' or 'builtin'")
