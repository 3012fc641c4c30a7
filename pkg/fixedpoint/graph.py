"""
Directed graphs over the point universe of a b-metric space

Explicit edges live in a networkx DiGraph; infinite vertex sets are handled by
parametric edge families that answer membership intensionally. Every graph
contains all loops. The module also implements the orbit-membership test for
C_gf and the checks behind properties P1-P4.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from fixedpoint.bmetric import point_key, same_point
from fixedpoint.errors import PreconditionViolation, ScenarioError

logger = logging.getLogger(__name__)

VERTEX_TOL = 1e-12

Point = Any
Edge = Tuple[Point, Point]


def _is_scalar(x: Point) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool)


class EdgeFamily:
    """An intensional edge set with membership and sampling"""

    name = "predicate"

    def contains(self, x: Point, y: Point) -> bool:
        raise NotImplementedError

    def sample(self, first: int, random: int, rng: np.random.Generator) -> List[Edge]:
        return []


class PredicateFamily(EdgeFamily):
    """Wraps a user supplied edge predicate; cannot be sampled"""

    def __init__(self, predicate: Callable[[Point, Point], bool], name: str = "predicate"):
        self.predicate = predicate
        self.name = name

    def contains(self, x: Point, y: Point) -> bool:
        return bool(self.predicate(x, y))


class ZeroToPowersFamily(EdgeFamily):
    """Edges (0, base^-n) for integers n >= 0"""

    name = "zero_to_powers"

    def __init__(self, base: float = 3.0, tol: float = VERTEX_TOL):
        if base <= 1:
            raise PreconditionViolation(f"Family base must exceed 1, got {base}")
        self.base = float(base)
        self.tol = tol

    def contains(self, x: Point, y: Point) -> bool:
        if not (_is_scalar(x) and _is_scalar(y)) or abs(x) > self.tol or y <= 0:
            return False
        n = round(-math.log(y) / math.log(self.base))
        if n < 0:
            return False
        target = self.base ** -n
        return abs(y - target) <= self.tol * target

    def sample(self, first: int, random: int, rng: np.random.Generator) -> List[Edge]:
        exponents = list(range(first)) + [int(n) for n in rng.integers(first, first + 200, size=random)]
        return [(0.0, self.base ** -n) for n in exponents]


class ScaledUnitStepsFamily(EdgeFamily):
    """Edges (base^t z, base^t (z + 1)) for real z >= z_min and integers t >= 0"""

    name = "scaled_unit_steps"

    def __init__(self, base: float = 3.0, z_min: float = 2.0, tol: float = VERTEX_TOL):
        if base <= 1:
            raise PreconditionViolation(f"Family base must exceed 1, got {base}")
        self.base = float(base)
        self.z_min = float(z_min)
        self.tol = tol

    def contains(self, x: Point, y: Point) -> bool:
        if not (_is_scalar(x) and _is_scalar(y)) or x < 0 or y <= x:
            return False
        step = y - x
        t = round(math.log(step) / math.log(self.base))
        if t < 0:
            return False
        scale = self.base ** t
        if abs(step - scale) > self.tol * scale:
            return False
        return x / scale >= self.z_min - self.tol

    def sample(self, first: int, random: int, rng: np.random.Generator) -> List[Edge]:
        edges = []
        width = max(1, int(math.ceil(math.sqrt(first))))
        for index in range(first):
            t, offset = divmod(index, width)
            z = self.z_min + offset
            edges.append((self.base ** t * z, self.base ** t * (z + 1)))
        for _ in range(random):
            t = int(rng.integers(0, 9))
            z = float(rng.uniform(self.z_min, self.z_min + 50.0))
            edges.append((self.base ** t * z, self.base ** t * (z + 1)))
        return edges


class CompleteFamily(EdgeFamily):
    """Every ordered pair is an edge; sampling draws random points from the space"""

    name = "complete"

    def __init__(self, point_sampler: Optional[Callable[[np.random.Generator], Point]] = None):
        self.point_sampler = point_sampler

    def contains(self, x: Point, y: Point) -> bool:
        return True

    def sample(self, first: int, random: int, rng: np.random.Generator) -> List[Edge]:
        if self.point_sampler is None:
            return []
        return [(self.point_sampler(rng), self.point_sampler(rng)) for _ in range(first + random)]


@dataclass(frozen=True)
class PathQuery:
    source: Point
    target: Point
    path: Optional[List[Point]] = None

    @property
    def found(self) -> bool:
        return self.path is not None

    @property
    def length(self) -> Optional[int]:
        return None if self.path is None else len(self.path) - 1


class DirectedGraph:
    """
    Directed graph whose vertex set is a point universe

    Loops (x, x) are edges for every point. Explicit edges are stored without
    parallels in a networkx DiGraph; edge families, each with an orientation
    flag, extend membership to infinite vertex sets.
    """

    def __init__(
        self,
        vertices: Iterable[Point] = (),
        edges: Iterable[Edge] = (),
        families: Iterable[Any] = (),
        edge_predicate: Optional[Callable[[Point, Point], bool]] = None,
        name: str = "graph",
        tol: float = VERTEX_TOL,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize the graph

        Args:
            vertices: Known vertices (a finite sample for infinite universes)
            edges: Explicit ordered pairs
            families: EdgeFamily objects or (EdgeFamily, reversed) tuples
            edge_predicate: Optional intensional membership test
            name: Label used in logs
            tol: Tolerance for matching numeric vertices
            logger: Optional logger instance
        """
        self.logger = logger or logging.getLogger(__name__)
        self.name = name
        self.tol = tol
        self._digraph = nx.DiGraph()

        oriented: List[Tuple[EdgeFamily, bool]] = []
        for family in families:
            oriented.append(family if isinstance(family, tuple) else (family, False))
        if edge_predicate is not None:
            oriented.append((PredicateFamily(edge_predicate), False))
        self.families: Tuple[Tuple[EdgeFamily, bool], ...] = tuple(oriented)

        for vertex in vertices:
            self._add_vertex(vertex)
        for x, y in edges:
            self._digraph.add_edge(self._add_vertex(x), self._add_vertex(y))

    def _add_vertex(self, point: Point) -> Hashable:
        key = self._resolve(point)
        if key is None:
            key = point_key(point)
            self._digraph.add_node(key, point=point)
            self._digraph.add_edge(key, key)
        return key

    def _resolve(self, point: Point) -> Optional[Hashable]:
        key = point_key(point)
        if key in self._digraph:
            return key
        if _is_scalar(point):
            for node, data in self._digraph.nodes(data=True):
                if _is_scalar(data["point"]) and same_point(data["point"], point, self.tol):
                    return node
        return None

    @property
    def vertices(self) -> List[Point]:
        return [data["point"] for _, data in self._digraph.nodes(data=True)]

    def edge_set(self) -> Set[Tuple[Hashable, Hashable]]:
        """Explicit edges as a set of vertex-key pairs (loops included)"""
        return set(self._digraph.edges())

    def explicit_edges(self) -> List[Edge]:
        points = nx.get_node_attributes(self._digraph, "point")
        return [(points[u], points[v]) for u, v in self._digraph.edges()]

    def has_edge(self, x: Point, y: Point) -> bool:
        if same_point(x, y, self.tol):
            return True
        kx, ky = self._resolve(x), self._resolve(y)
        if kx is not None and ky is not None and self._digraph.has_edge(kx, ky):
            return True
        for family, flipped in self.families:
            if family.contains(y, x) if flipped else family.contains(x, y):
                return True
        return False

    def materialize(self, extra: Iterable[Point] = ()) -> Tuple[nx.DiGraph, Dict[int, Hashable]]:
        """
        Finite networkx view over the known vertices plus extra points

        Family edges are evaluated on every ordered pair of the finite vertex set.

        Returns:
            The DiGraph and a map from position in `extra` to node key
        """
        view = nx.DiGraph()
        points = nx.get_node_attributes(self._digraph, "point")
        for key, point in points.items():
            view.add_node(key, point=point)
        view.add_edges_from(self._digraph.edges())

        keys: Dict[int, Hashable] = {}
        for position, point in enumerate(extra):
            key = self._resolve(point)
            if key is None:
                key = point_key(point)
                view.add_node(key, point=point)
                view.add_edge(key, key)
            keys[position] = key

        if self.families:
            nodes = list(view.nodes(data="point"))
            for u, pu in nodes:
                for v, pv in nodes:
                    if u != v and not view.has_edge(u, v) and self.has_edge(pu, pv):
                        view.add_edge(u, v)
        return view, keys

    def __repr__(self) -> str:
        families = ", ".join(f"{f.name}{'^-1' if flipped else ''}" for f, flipped in self.families)
        return f"DirectedGraph(name={self.name!r}, vertices={self._digraph.number_of_nodes()}, families=[{families}])"


def reverse(g: DirectedGraph) -> DirectedGraph:
    """G^-1: (x, y) is an edge iff (y, x) is an edge of g"""
    return DirectedGraph(
        vertices=g.vertices,
        edges=[(y, x) for x, y in g.explicit_edges()],
        families=[(family, not flipped) for family, flipped in g.families],
        name=f"{g.name}^-1",
        tol=g.tol,
        logger=g.logger,
    )


def symmetrize(g: DirectedGraph) -> DirectedGraph:
    """G~ with E(G~) = E(G) union E(G^-1)"""
    edges = g.explicit_edges()
    families: List[Tuple[EdgeFamily, bool]] = []
    for family, flipped in g.families:
        for orientation in (flipped, not flipped):
            if not any(f is family and o == orientation for f, o in families):
                families.append((family, orientation))
    name = g.name if g.name.endswith("~") else f"{g.name}~"
    return DirectedGraph(
        vertices=g.vertices,
        edges=edges + [(y, x) for x, y in edges],
        families=families,
        name=name,
        tol=g.tol,
        logger=g.logger,
    )


def find_path(g: DirectedGraph, x: Point, y: Point, max_len: int) -> PathQuery:
    """
    Shortest directed path from x to y of length at most max_len

    The search runs over the graph's known vertices together with x and y.
    """
    if same_point(x, y, g.tol):
        return PathQuery(x, y, [x])
    view, keys = g.materialize([x, y])
    try:
        route = nx.shortest_path(view, keys[0], keys[1])
    except nx.NetworkXNoPath:
        return PathQuery(x, y, None)
    if len(route) - 1 > max_len:
        return PathQuery(x, y, None)
    return PathQuery(x, y, [view.nodes[key]["point"] for key in route])


def is_weakly_connected(g: DirectedGraph, sample: Sequence[Point]) -> bool:
    """True iff every pair of sampled vertices is joined by a path in G~"""
    if not sample:
        raise PreconditionViolation("is_weakly_connected needs a nonempty sample")
    view, keys = symmetrize(g).materialize(sample)
    component = nx.node_connected_component(view.to_undirected(), keys[0])
    return all(key in component for key in keys.values())


def check_orbit_membership(g: DirectedGraph, orbit: Sequence[Point], horizon: int) -> bool:
    """
    C_gf membership observed up to a horizon

    Args:
        g: Graph
        orbit: Points gx_0, gx_1, ...
        horizon: Last index included in the pairwise check

    Returns:
        True iff (orbit[n], orbit[m]) is an edge of G~ for all n, m <= horizon
    """
    if len(orbit) < horizon + 1:
        raise PreconditionViolation(f"Orbit has {len(orbit)} entries, horizon {horizon} needs {horizon + 1}")
    closure = symmetrize(g)
    for n in range(horizon + 1):
        for m in range(n + 1, horizon + 1):
            if not closure.has_edge(orbit[n], orbit[m]):
                logger.debug(f"Orbit pair ({n}, {m}) is not an edge of {closure.name}")
                return False
    return True


def check_P1_P3(g: DirectedGraph, sequence: Sequence[Point], limit: Point) -> Optional[List[int]]:
    """
    Subsequence inheriting edges to the limit, as observed on a finite sequence

    Consecutive pairs must be edges of G~. The indices i with
    (sequence[i], limit) in E(G~) are returned when they cover at least half of
    the tail (second half of the sequence); otherwise None.
    """
    closure = symmetrize(g)
    for i in range(len(sequence) - 1):
        if not closure.has_edge(sequence[i], sequence[i + 1]):
            raise PreconditionViolation(f"Consecutive pair at index {i} is not an edge of {closure.name}")
    indices = [i for i, point in enumerate(sequence) if closure.has_edge(point, limit)]
    tail_start = len(sequence) // 2
    tail_length = len(sequence) - tail_start
    if tail_length == 0:
        return None
    tail_hits = sum(1 for i in indices if i >= tail_start)
    return indices if 2 * tail_hits >= tail_length else None


def check_P2_P4(g: DirectedGraph, candidates: Sequence[Point]) -> bool:
    """True iff every ordered pair of candidates is an edge of G~"""
    closure = symmetrize(g)
    return all(closure.has_edge(x, y) for x in candidates for y in candidates)


def sample_edges(g: DirectedGraph, first: int, random: int, rng: np.random.Generator) -> List[Edge]:
    """
    Edge sample of E(G~): family edges in both orientations plus explicit non-loop edges
    """
    edges: List[Edge] = []
    for family, flipped in symmetrize(g).families:
        drawn = family.sample(first, random, rng)
        edges.extend((y, x) if flipped else (x, y) for x, y in drawn)
    for x, y in g.explicit_edges():
        if not same_point(x, y, g.tol):
            edges.extend([(x, y), (y, x)])
    return edges


def load_graph(
    config: Dict[str, Any],
    point_sampler: Optional[Callable[[np.random.Generator], Point]] = None,
    logger: Optional[logging.Logger] = None,
) -> DirectedGraph:
    """
    Build a graph from config: an explicit edge list and/or a named family

    Args:
        config: {"edges": [[x, y], ...], "vertices": [...], "family": name, "base": b, "z_min": z}
        point_sampler: Random point generator for the complete family
        logger: Optional logger instance

    Returns:
        The constructed graph (loops are added implicitly)
    """
    family_name = config.get("family")
    families: List[EdgeFamily] = []
    try:
        if family_name == "zero_to_powers":
            families.append(ZeroToPowersFamily(base=float(config.get("base", 3.0))))
        elif family_name == "scaled_unit_steps":
            families.append(
                ScaledUnitStepsFamily(base=float(config.get("base", 3.0)), z_min=float(config.get("z_min", 2.0)))
            )
        elif family_name == "complete":
            families.append(CompleteFamily(point_sampler))
        elif family_name not in (None, "loops_only"):
            raise ScenarioError(f"Unknown graph family {family_name!r}")
        edges = [(x, y) for x, y in config.get("edges", [])]
    except (TypeError, ValueError, PreconditionViolation) as e:
        raise ScenarioError(f"Invalid graph config: {e}") from e
    return DirectedGraph(
        vertices=config.get("vertices", []),
        edges=edges,
        families=families,
        name=config.get("name", family_name or "graph"),
        logger=logger,
    )
