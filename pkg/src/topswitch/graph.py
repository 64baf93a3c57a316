"""Weighted undirected graphs and the spectral predicates used by the
switching and detection analysis.

Agent indices are 0-based inside the library. The JSON format uses
1-based indices, and conversion happens only at the I/O boundary.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "TOL_EDGE",
    "TOL_GAP",
    "MAX_DENOMINATOR",
    "TOL_RATIONAL",
    "WeightedGraph",
    "TopologySet",
    "LaplacianSpectrum",
    "ComponentPartition",
    "DetectabilityResult",
    "SpectralRatioResult",
    "laplacian",
    "spectrum",
    "difference_graph",
    "union_difference_graph",
    "components",
    "detectability_check",
    "rational_ratio",
    "spectral_ratio_check",
    "distinct_eigenvalue_check",
]

TOL_EDGE = 1e-9
TOL_GAP = 1e-8
MAX_DENOMINATOR = 10_000
TOL_RATIONAL = 1e-9
# eigenvalues below this count as the zero mode
TOL_ZERO = 1e-9


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph on ``n`` agents with a symmetric weight matrix.

    Parameters
    ----------
    weights : array_like, shape (n, n)
        Symmetric, nonnegative, zero diagonal.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed (nonzero diagonal)")
        if not np.array_equal(w, w.T):
            if np.max(np.abs(w - w.T)) > TOL_EDGE:
                raise ValueError("weights must be symmetric")
            w = 0.5 * (w + w.T)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[float]]) -> "WeightedGraph":
        """Build from 0-based ``(i, j, weight)`` triples."""
        w = np.zeros((n, n))
        for i, j, a in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at agent {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            w[i, j] = w[j, i] = float(a)
        return cls(w)

    def edges(self, tol: float = 0.0) -> list[tuple[int, int, float]]:
        """0-based ``(i, j, weight)`` with ``i < j`` and weight above ``tol``."""
        iu, ju = np.triu_indices(self.n, k=1)
        return [(int(i), int(j), float(self.weights[i, j]))
                for i, j in zip(iu, ju) if self.weights[i, j] > tol]

    def to_dict(self) -> dict:
        return {"n": self.n,
                "edges": [[i + 1, j + 1, a] for i, j, a in self.edges()]}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedGraph":
        n = int(d["n"])
        edges = [(int(e[0]) - 1, int(e[1]) - 1, float(e[2])) for e in d["edges"]]
        for i, j, _ in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i + 1}, {j + 1}) out of range 1..{n}")
        return cls.from_edges(n, edges)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "WeightedGraph":
        return cls.from_dict(json.loads(s))

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


@dataclass(frozen=True)
class TopologySet:
    """Ordered collection of topologies over a common agent set."""

    graphs: tuple[WeightedGraph, ...]

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("topology set is empty")
        ns = {g.n for g in graphs}
        if len(ns) != 1:
            raise ValueError(f"topologies disagree on agent count: {sorted(ns)}")
        object.__setattr__(self, "graphs", graphs)

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, r: int) -> WeightedGraph:
        return self.graphs[r]


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class ComponentPartition:
    components: tuple[frozenset[int], ...]

    @property
    def d(self) -> int:
        return len(self.components)

    def component_of(self, i: int) -> frozenset[int]:
        for c in self.components:
            if i in c:
                return c
        raise KeyError(i)


@dataclass(frozen=True)
class DetectabilityResult:
    """Verdict of the component-coverage test.

    ``witness`` lists the components that contain no monitored agent.
    """

    detectable: bool
    partition: ComponentPartition
    witness: tuple[frozenset[int], ...] = ()

    def __bool__(self):
        return self.detectable


@dataclass(frozen=True)
class SpectralRatioResult:
    rational: bool
    # (i, j, ratio, p, q) for each checked pair; i, j index the nonzero eigenvalues
    ratios: tuple = field(default=())
    failures: tuple = field(default=())

    def __bool__(self):
        return self.rational


def laplacian(g: WeightedGraph) -> np.ndarray:
    """Graph Laplacian ``L = D - A``."""
    w = g.weights
    return np.diag(w.sum(axis=1)) - w


def spectrum(g: WeightedGraph) -> LaplacianSpectrum:
    """Ascending eigenvalues and orthonormal eigenvectors of the Laplacian."""
    lam, vec = np.linalg.eigh(laplacian(g))
    return LaplacianSpectrum(lam, vec)


def difference_graph(g_r: WeightedGraph, g_s: WeightedGraph,
                     tol: float = TOL_EDGE) -> WeightedGraph:
    """Unit-weight graph with an edge wherever the two weights differ."""
    if g_r.n != g_s.n:
        raise ValueError("graphs have different agent counts")
    diff = (np.abs(g_r.weights - g_s.weights) > tol).astype(float)
    return WeightedGraph(diff)


def union_difference_graph(ts: TopologySet | Sequence[WeightedGraph],
                           tol: float = TOL_EDGE) -> WeightedGraph:
    """Union of the difference graphs over all pairs of the set.

    A singleton set has no pair, so the result is the empty graph and a
    ``UserWarning`` is issued.
    """
    graphs = list(ts)
    n = graphs[0].n
    if len(graphs) == 1:
        warnings.warn("single topology: union difference graph is empty",
                      UserWarning, stacklevel=2)
    union = np.zeros((n, n), dtype=bool)
    for r in range(len(graphs)):
        for s in range(r + 1, len(graphs)):
            union |= np.abs(graphs[r].weights - graphs[s].weights) > tol
    return WeightedGraph(union.astype(float))


def components(g: WeightedGraph) -> ComponentPartition:
    """Connected components, ordered by smallest member."""
    _, labels = connected_components(g.weights > 0, directed=False)
    groups: dict[int, set[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    comps = sorted((frozenset(s) for s in groups.values()), key=min)
    return ComponentPartition(tuple(comps))


def detectability_check(ts: TopologySet | Sequence[WeightedGraph],
                        monitored: Iterable[int]) -> DetectabilityResult:
    """Every component of the union difference graph must hold a monitored agent.

    Parameters
    ----------
    ts : TopologySet or sequence of WeightedGraph
    monitored : iterable of int
        0-based monitored agents.
    """
    mon = set(int(i) for i in monitored)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        part = components(union_difference_graph(ts))
    bad = tuple(c for c in part.components if not (c & mon))
    return DetectabilityResult(not bad, part, bad)


def rational_ratio(x: float, max_denominator: int = MAX_DENOMINATOR,
                   tol: float = TOL_RATIONAL) -> Fraction | None:
    """Best continued-fraction approximant ``p/q`` of ``x``, or None if off by ``tol``."""
    f = Fraction(float(x)).limit_denominator(max_denominator)
    if abs(float(f) - x) < tol:
        return f
    return None


def _nonzero_eigenvalues(g: WeightedGraph) -> np.ndarray:
    lam = spectrum(g).eigenvalues
    return lam[lam > TOL_ZERO]


def spectral_ratio_check(g: WeightedGraph, max_denominator: int = MAX_DENOMINATOR,
                         tol: float = TOL_RATIONAL) -> SpectralRatioResult:
    """Check that ``sqrt(lam_i / lam_j)`` is rational for all nonzero eigenvalues.

    Ratios are taken against the smallest nonzero eigenvalue, which suffices
    because rationals are closed under division.
    """
    lam = _nonzero_eigenvalues(g)
    if lam.size == 0:
        return SpectralRatioResult(True)
    ratios, failures = [], []
    for i in range(lam.size):
        r = math.sqrt(lam[i] / lam[0])
        f = rational_ratio(r, max_denominator, tol)
        entry = (i, 0, r, None if f is None else f.numerator,
                 None if f is None else f.denominator)
        ratios.append(entry)
        if f is None:
            failures.append(entry)
    return SpectralRatioResult(not failures, tuple(ratios), tuple(failures))


def distinct_eigenvalue_check(g: WeightedGraph | np.ndarray, tol: float = TOL_GAP) -> bool:
    """True if all Laplacian eigenvalues are separated by more than ``tol``."""
    L = laplacian(g) if isinstance(g, WeightedGraph) else np.asarray(g, dtype=float)
    lam = np.linalg.eigvalsh(L)
    return bool(np.all(np.diff(lam) > tol))
