"""Traffic assignment instances on random scale-free networks.

Path flows ``x_p`` route the demand of each origin/destination pair over a
fixed set of minimum-hop paths.  Edge loads are ``w = D^T x`` where ``D`` is
the path-edge incidence matrix, and edge costs are affine,
``c_e(w) = a_e + b_e w``.  The feasible set is a block simplex, one block per
O/D pair.
"""

from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GenerationFailed, Unreachable
from .geometry import ConstraintSystem
from .problems import Problem, spectral_norm
from .rng import derive_rng

DEFAULT_ATTACHMENT = 2
DEMAND_RANGE = (1e-3, 1.0)
COST_A_RANGE = (0.0, 10.0)
COST_B_RANGE = (0.0, 1.0)


class TapObjectiveMode(str, enum.Enum):
    PATH_COST_SUM = "PathCostSum"
    TOTAL_EDGE_LATENCY = "TotalEdgeLatency"


@dataclass(frozen=True)
class DiGraph:
    """Directed multigraph; edge ``e`` runs ``tails[e] -> heads[e]``."""

    num_vertices: int
    tails: np.ndarray
    heads: np.ndarray
    _out: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tails = np.asarray(self.tails, dtype=np.intp)
        heads = np.asarray(self.heads, dtype=np.intp)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        out: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for e, u in enumerate(tails):
            out[u].append(e)
        object.__setattr__(self, "_out", tuple(tuple(lst) for lst in out))

    @property
    def num_edges(self) -> int:
        return int(self.tails.size)

    def out_edges(self, u: int) -> tuple[int, ...]:
        """Outgoing edge ids of ``u`` in increasing order."""
        return self._out[u]

    def degree(self) -> np.ndarray:
        """Total (in + out) degree per vertex."""
        return np.bincount(self.tails, minlength=self.num_vertices) + np.bincount(
            self.heads, minlength=self.num_vertices
        )

    def edge_list(self) -> list[tuple[int, int]]:
        return list(zip(self.tails.tolist(), self.heads.tolist()))


def generate_barabasi_albert(num_vertices: int, attachment_m: int, seed: int) -> DiGraph:
    """Preferential attachment graph with every undirected edge doubled into two arcs.

    Growth starts from a star on ``attachment_m + 1`` vertices; each new vertex
    links to ``attachment_m`` distinct existing vertices drawn with probability
    proportional to degree.  Undirected edge ``i = {u, v}`` (in creation order,
    ``u`` the newer vertex) becomes arcs ``2i: u -> v`` and ``2i + 1: v -> u``.
    """
    if attachment_m < 1 or num_vertices <= attachment_m:
        raise ConfigurationError("require attachment_m >= 1 and num_vertices > attachment_m")
    rng = derive_rng(seed, "tap.barabasi_albert")
    undirected: list[tuple[int, int]] = [(leaf, 0) for leaf in range(1, attachment_m + 1)]
    # each vertex appears once per incident edge: sampling from it is degree-proportional
    repeated: list[int] = [v for edge in undirected for v in edge]
    for new in range(attachment_m + 1, num_vertices):
        targets: set[int] = set()
        while len(targets) < attachment_m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            undirected.append((new, t))
            repeated.extend((new, t))
    tails = np.empty(2 * len(undirected), dtype=np.intp)
    heads = np.empty_like(tails)
    for i, (u, v) in enumerate(undirected):
        tails[2 * i], heads[2 * i] = u, v
        tails[2 * i + 1], heads[2 * i + 1] = v, u
    return DiGraph(num_vertices, tails, heads)


Path = tuple[int, ...]


def _lex_shortest_path(
    graph: DiGraph, source: int, target: int, banned_vertices: set[int], banned_edges: set[int]
) -> Path | None:
    """Minimum-hop path with the lexicographically smallest edge-id sequence."""
    if source in banned_vertices or target in banned_vertices:
        return None
    # hop distance to target over the restricted graph (reverse BFS)
    incoming: dict[int, list[int]] = {}
    for e in range(graph.num_edges):
        if e in banned_edges:
            continue
        u, v = int(graph.tails[e]), int(graph.heads[e])
        if u in banned_vertices or v in banned_vertices:
            continue
        incoming.setdefault(v, []).append(u)
    dist = {target: 0}
    queue = deque([target])
    while queue:
        v = queue.popleft()
        for u in incoming.get(v, ()):
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    if source not in dist:
        return None
    path: list[int] = []
    u = source
    while u != target:
        for e in graph.out_edges(u):
            v = int(graph.heads[e])
            if e not in banned_edges and v not in banned_vertices and dist.get(v) == dist[u] - 1:
                path.append(e)
                u = v
                break
    return tuple(path)


def path_vertices(graph: DiGraph, origin: int, path: Path) -> list[int]:
    return [origin] + [int(graph.heads[e]) for e in path]


def enumerate_min_hop_paths(graph: DiGraph, origin: int, destination: int, k: int) -> list[Path]:
    """Up to ``k`` simple paths in increasing ``(hops, edge ids)`` order (Yen's algorithm)."""
    if k < 1:
        raise ConfigurationError("k must be positive")
    if origin == destination:
        raise ConfigurationError("origin and destination must differ")
    first = _lex_shortest_path(graph, origin, destination, set(), set())
    if first is None:
        raise Unreachable(f"vertex {destination} is not reachable from {origin}")
    accepted: list[Path] = [first]
    seen: set[Path] = {first}
    candidates: list[tuple[int, Path]] = []
    while len(accepted) < k:
        last = accepted[-1]
        verts = path_vertices(graph, origin, last)
        for i in range(len(last)):
            root = last[:i]
            spur = verts[i]
            banned_edges = {p[i] for p in accepted if p[:i] == root and len(p) > i}
            banned_vertices = set(verts[:i])
            tail = _lex_shortest_path(graph, spur, destination, banned_vertices, banned_edges)
            if tail is None:
                continue
            cand = root + tail
            if cand not in seen:
                seen.add(cand)
                heapq.heappush(candidates, (len(cand), cand))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates)[1])
    return accepted


@dataclass(frozen=True)
class TapInstance:
    graph: DiGraph
    origins: np.ndarray
    destinations: np.ndarray
    demands: np.ndarray
    paths: tuple[tuple[Path, ...], ...]
    edge_a: np.ndarray
    edge_b: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)
    path_edge_incidence: sp.csr_matrix = field(init=False, repr=False, compare=False)
    edge_path_multiplicity: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if np.any(self.edge_a < 0) or np.any(self.edge_b < 0):
            raise ConfigurationError("edge cost coefficients must be nonnegative")
        if np.any(self.demands < 0):
            raise ConfigurationError("demands must be nonnegative")
        rows, cols = [], []
        p = 0
        for block in self.paths:
            for path in block:
                rows.extend([p] * len(path))
                cols.extend(path)
                p += 1
        data = np.ones(len(rows))
        inc = sp.csr_matrix((data, (rows, cols)), shape=(p, self.graph.num_edges))
        object.__setattr__(self, "path_edge_incidence", inc)
        object.__setattr__(self, "edge_path_multiplicity", np.asarray(inc.sum(axis=0)).ravel())

    @property
    def num_pairs(self) -> int:
        return int(self.demands.size)

    @property
    def num_paths(self) -> int:
        return self.path_edge_incidence.shape[0]

    @property
    def block_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_pairs), [len(b) for b in self.paths])

    def constraints(self) -> ConstraintSystem:
        return ConstraintSystem.from_blocks(self.block_labels, self.demands)

    def uniform_start(self) -> np.ndarray:
        sizes = np.array([len(b) for b in self.paths], dtype=float)
        return (self.demands / sizes)[self.block_labels]

    def loads(self, x: np.ndarray) -> np.ndarray:
        return self.path_edge_incidence.T @ self._check(x)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_paths,):
            raise ConfigurationError(f"path-flow vector has shape {x.shape}, expected ({self.num_paths},)")
        return x

    def to_dict(self) -> dict:
        g = self.graph
        return {
            "vertices": g.num_vertices,
            "edges": [
                [int(u), int(v), float(a), float(b)]
                for u, v, a, b in zip(g.tails, g.heads, self.edge_a, self.edge_b)
            ],
            "od_pairs": [
                {
                    "origin": int(o),
                    "destination": int(d),
                    "demand": float(m),
                    "paths": [list(map(int, p)) for p in block],
                }
                for o, d, m, block in zip(self.origins, self.destinations, self.demands, self.paths)
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> TapInstance:
        edges = spec["edges"]
        graph = DiGraph(
            int(spec["vertices"]),
            np.array([e[0] for e in edges], dtype=np.intp),
            np.array([e[1] for e in edges], dtype=np.intp),
        )
        pairs = spec["od_pairs"]
        inst = cls(
            graph=graph,
            origins=np.array([p["origin"] for p in pairs], dtype=np.intp),
            destinations=np.array([p["destination"] for p in pairs], dtype=np.intp),
            demands=np.array([p["demand"] for p in pairs], dtype=float),
            paths=tuple(tuple(tuple(int(e) for e in path) for path in p["paths"]) for p in pairs),
            edge_a=np.array([e[2] for e in edges], dtype=float),
            edge_b=np.array([e[3] for e in edges], dtype=float),
            metadata=dict(spec.get("metadata", {})),
        )
        validate_paths(inst)
        return inst


def validate_paths(instance: TapInstance) -> None:
    """Raise ValueError unless every path is an ``o -> d`` walk of adjacent edges."""
    g = instance.graph
    for o, d, block in zip(instance.origins, instance.destinations, instance.paths):
        if not block:
            raise ValueError(f"O/D pair ({o}, {d}) has no paths")
        for path in block:
            u = int(o)
            for e in path:
                if not 0 <= e < g.num_edges or int(g.tails[e]) != u:
                    raise ValueError(f"path {path} is broken at edge {e}")
                u = int(g.heads[e])
            if u != int(d):
                raise ValueError(f"path {path} ends at {u}, expected {d}")


def _reachable_from(graph: DiGraph, source: int) -> set[int]:
    seen = {source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for e in graph.out_edges(u):
            v = int(graph.heads[e])
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def generate_tap_instance(
    num_vertices: int,
    num_od_pairs: int,
    paths_per_pair: int,
    seed: int,
    attachment_m: int = DEFAULT_ATTACHMENT,
) -> tuple[TapInstance, np.ndarray]:
    """Seeded random instance and its uniform-assignment start."""
    if min(num_vertices, num_od_pairs, paths_per_pair) < 1:
        raise ConfigurationError("num_vertices, num_od_pairs and paths_per_pair must be positive")
    graph = generate_barabasi_albert(num_vertices, attachment_m, seed)
    rng_pairs = derive_rng(seed, "tap.od_pairs")
    reach = [_reachable_from(graph, u) for u in range(num_vertices)]
    ordered = [(o, d) for o in range(num_vertices) for d in range(num_vertices) if o != d]
    pairs: list[tuple[int, int]] = []
    for idx in rng_pairs.permutation(len(ordered)):
        o, d = ordered[idx]
        if d in reach[o]:
            pairs.append((o, d))
            if len(pairs) == num_od_pairs:
                break
    if len(pairs) < num_od_pairs:
        raise GenerationFailed(f"only {len(pairs)} reachable ordered pairs; {num_od_pairs} requested")
    demands = derive_rng(seed, "tap.demands").uniform(*DEMAND_RANGE, num_od_pairs)
    rng_costs = derive_rng(seed, "tap.edge_costs")
    edge_a = rng_costs.uniform(*COST_A_RANGE, graph.num_edges)
    edge_b = rng_costs.uniform(*COST_B_RANGE, graph.num_edges)
    paths = tuple(tuple(enumerate_min_hop_paths(graph, o, d, paths_per_pair)) for o, d in pairs)
    inst = TapInstance(
        graph=graph,
        origins=np.array([o for o, _ in pairs], dtype=np.intp),
        destinations=np.array([d for _, d in pairs], dtype=np.intp),
        demands=demands,
        paths=paths,
        edge_a=edge_a,
        edge_b=edge_b,
        metadata={
            "num_vertices": num_vertices,
            "num_od_pairs": num_od_pairs,
            "paths_per_pair": paths_per_pair,
            "attachment_m": attachment_m,
            "seed": seed,
        },
    )
    return inst, inst.uniform_start()


def tap_objective(instance: TapInstance, mode: TapObjectiveMode | str, x: np.ndarray) -> float:
    """Aggregate latency of path flows ``x`` under ``mode``."""
    mode = TapObjectiveMode(mode)
    w = instance.loads(x)
    cost = instance.edge_a + instance.edge_b * w
    if mode is TapObjectiveMode.PATH_COST_SUM:
        return float(instance.edge_path_multiplicity @ cost)
    return float(w @ cost)


def tap_gradient(instance: TapInstance, mode: TapObjectiveMode | str, x: np.ndarray) -> np.ndarray:
    mode = TapObjectiveMode(mode)
    inc = instance.path_edge_incidence
    if mode is TapObjectiveMode.PATH_COST_SUM:
        instance._check(x)
        return inc @ (instance.edge_path_multiplicity * instance.edge_b)
    w = instance.loads(x)
    return inc @ (instance.edge_a + 2.0 * instance.edge_b * w)


def tap_lipschitz(instance: TapInstance, mode: TapObjectiveMode | str) -> float:
    """Spectral norm of the (constant) Hessian ``2 D diag(b) D^T``; zero for PathCostSum."""
    if TapObjectiveMode(mode) is TapObjectiveMode.PATH_COST_SUM:
        return 0.0
    inc = instance.path_edge_incidence
    two_b = 2.0 * instance.edge_b
    return spectral_norm(lambda v: inc @ (two_b * (inc.T @ v)), instance.num_paths, iterations=200, tol=1e-10)


def path_cost_sum_optimum(instance: TapInstance) -> tuple[np.ndarray, float]:
    """Exact minimizer of the PathCostSum objective, which is linear in ``x``.

    Each block routes its whole demand on a path of smallest gradient entry.
    """
    g = tap_gradient(instance, TapObjectiveMode.PATH_COST_SUM, np.zeros(instance.num_paths))
    x = np.zeros(instance.num_paths)
    start = 0
    for demand, block in zip(instance.demands, instance.paths):
        stop = start + len(block)
        x[start + int(np.argmin(g[start:stop]))] = demand
        start = stop
    return x, tap_objective(instance, TapObjectiveMode.PATH_COST_SUM, x)


def tap_problem(instance: TapInstance, mode: TapObjectiveMode | str = TapObjectiveMode.PATH_COST_SUM) -> Problem:
    mode = TapObjectiveMode(mode)
    known = path_cost_sum_optimum(instance) if mode is TapObjectiveMode.PATH_COST_SUM else None
    return Problem(
        eval_f=lambda x: tap_objective(instance, mode, x),
        eval_grad=lambda x: tap_gradient(instance, mode, x),
        constraints=instance.constraints(),
        lipschitz_l=tap_lipschitz(instance, mode),
        dimension_n=instance.num_paths,
        known_optimum=known,
        name=f"tap_{mode.value}",
        start=instance.uniform_start(),
        metadata={"tap": instance, "mode": mode.value},
    )
