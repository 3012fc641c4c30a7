"""
C*-algebra-valued b-metric spaces

Provides the space abstraction together with the concrete instances used by the
toolkit and a sampled axiom checker:
- ScalarPowerMetric: d(x, y) = |x - y|^p * I on the real line (or half line)
- GridFunctionMetric: grid functions with d(f, g) = diag(|f_i - g_i|^p)
- OperatorNormMetric: matrices with d(X, Y) = ||X - Y||^2 * T
- CustomTableMetric: a finite point list with an explicit metric table
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from fixedpoint.algebra import (
    POSITIVITY_RTOL,
    AlgebraElement,
    OrderMode,
    element_from_config,
    is_positive,
    leq,
    min_eigenvalue,
    norm,
)
from fixedpoint.errors import AxiomViolation, EmptySample, PreconditionViolation, ScenarioError, UnknownPoint

logger = logging.getLogger(__name__)

Point = Any


def same_point(x: Point, y: Point, tol: float = 0.0) -> bool:
    """Point identity for scalars, grid functions and matrices, up to an absolute tolerance"""
    if isinstance(x, AlgebraElement) or isinstance(y, AlgebraElement):
        if not (isinstance(x, AlgebraElement) and isinstance(y, AlgebraElement)):
            return False
        return x.allclose(y, atol=tol)
    if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
        xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return xa.shape == ya.shape and bool(np.all(np.abs(xa - ya) <= tol))
    if isinstance(x, (int, float)) and isinstance(y, (int, float)):
        return abs(float(x) - float(y)) <= tol
    return x == y


def point_key(x: Point) -> Hashable:
    """Hashable key for a point"""
    if isinstance(x, AlgebraElement):
        return ("matrix", x.dim, tuple(x.entries.ravel().tolist()))
    if isinstance(x, np.ndarray):
        return ("grid", tuple(np.asarray(x, dtype=float).ravel().tolist()))
    if isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool):
        return float(x)
    return x


@dataclass(frozen=True)
class AxiomReport:
    checked_pairs: int
    symmetry_ok: bool
    identity_ok: bool
    triangle_ok: bool
    worst_triangle_slack: float

    @property
    def all_ok(self) -> bool:
        return self.symmetry_ok and self.identity_ok and self.triangle_ok


class BMetricSpace:
    """
    A point universe with a metric d: X x X -> A_+ and coefficient A >= 1.

    Infinite universes are described by a membership predicate; the metric is
    evaluated lazily.
    """

    kind = "custom"

    def __init__(
        self,
        metric: Callable[[Point, Point], AlgebraElement],
        coefficient: AlgebraElement,
        algebra_dim: int,
        contains: Optional[Callable[[Point], bool]] = None,
        name: str = "space",
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize a b-metric space

        Args:
            metric: Function returning the algebra-valued distance of two points
            coefficient: The b-metric coefficient A, must satisfy A >= 1 (Loewner)
            algebra_dim: Side length n of the matrix algebra M_n
            contains: Membership test for the point universe
            name: Label used in logs and reports
            logger: Optional logger instance
        """
        self.logger = logger or logging.getLogger(__name__)
        self.name = name
        self.algebra_dim = int(algebra_dim)
        if coefficient.dim != self.algebra_dim:
            raise PreconditionViolation(
                f"Coefficient has dimension {coefficient.dim}, algebra has {self.algebra_dim}"
            )
        if not leq(AlgebraElement.identity(self.algebra_dim), coefficient, OrderMode.LOEWNER):
            raise PreconditionViolation("The b-metric coefficient must dominate the identity (A >= 1)")
        self.coefficient = coefficient
        self._metric = metric
        self._contains = contains

    def has_point(self, x: Point) -> bool:
        if self._contains is None:
            return True
        try:
            return bool(self._contains(x))
        except (TypeError, ValueError):
            return False

    def eval_metric(self, x: Point, y: Point) -> AlgebraElement:
        for point in (x, y):
            if not self.has_point(point):
                raise UnknownPoint(f"{point!r} is not a point of {self.name}")
        value = self._metric(x, y)
        if value.dim != self.algebra_dim:
            raise PreconditionViolation(
                f"Metric returned dimension {value.dim}, expected {self.algebra_dim}"
            )
        return value

    def random_point(self, rng: np.random.Generator) -> Point:
        raise NotImplementedError(f"{type(self).__name__} cannot draw random points")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, algebra_dim={self.algebra_dim})"


def _is_finite_scalar(x: Point) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool) and np.isfinite(x)


class ScalarPowerMetric(BMetricSpace):
    """d(x, y) = |x - y|^p * I_dim on the reals (or on [0, inf) with domain="nonnegative")"""

    kind = "scalar_power"

    def __init__(
        self,
        p: float = 2.0,
        dim: int = 2,
        domain: str = "real",
        coefficient: Optional[AlgebraElement] = None,
        name: str = "scalar_power",
        logger: Optional[logging.Logger] = None,
    ):
        if p < 1:
            raise PreconditionViolation(f"Exponent p must be >= 1, got {p}")
        if domain not in ("real", "nonnegative"):
            raise PreconditionViolation(f"Unknown domain {domain!r}")
        self.p = float(p)
        self.domain = domain
        identity = np.eye(dim)

        def metric(x: Point, y: Point) -> AlgebraElement:
            return AlgebraElement(abs(float(x) - float(y)) ** self.p * identity)

        def contains(x: Point) -> bool:
            return _is_finite_scalar(x) and (domain == "real" or float(x) >= 0.0)

        super().__init__(
            metric,
            coefficient if coefficient is not None else AlgebraElement.scalar(2.0 ** self.p, dim),
            dim,
            contains=contains,
            name=name,
            logger=logger,
        )

    def random_point(self, rng: np.random.Generator) -> float:
        low = 0.0 if self.domain == "nonnegative" else -10.0
        return float(rng.uniform(low, 10.0))


class GridFunctionMetric(BMetricSpace):
    """
    Real functions sampled on m grid nodes with d_b(f, g) = diag(|f_i - g_i|^p).

    The multiplication operator by |f - g|^p becomes a diagonal matrix, so the
    spectral norm of d_b(f, g) is (max_i |f_i - g_i|)^p.
    """

    kind = "grid_function"

    def __init__(
        self,
        grid_size: int,
        p: float = 1.0,
        coefficient: Optional[AlgebraElement] = None,
        name: str = "grid_function",
        logger: Optional[logging.Logger] = None,
    ):
        if grid_size < 1:
            raise PreconditionViolation(f"Grid size must be positive, got {grid_size}")
        if p < 1:
            raise PreconditionViolation(f"Exponent p must be >= 1, got {p}")
        self.grid_size = int(grid_size)
        self.p = float(p)

        def metric(f: Point, g: Point) -> AlgebraElement:
            gap = np.abs(np.asarray(f, dtype=float) - np.asarray(g, dtype=float))
            return AlgebraElement(np.diag(gap ** self.p))

        def contains(f: Point) -> bool:
            arr = np.asarray(f, dtype=float)
            return arr.shape == (self.grid_size,) and bool(np.all(np.isfinite(arr)))

        super().__init__(
            metric,
            coefficient if coefficient is not None else AlgebraElement.scalar(2.0 ** self.p, self.grid_size),
            self.grid_size,
            contains=contains,
            name=name,
            logger=logger,
        )

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-5.0, 5.0, size=self.grid_size)


class OperatorNormMetric(BMetricSpace):
    """d(X, Y) = ||X - Y||^2 * T on n x n matrices, coefficient 4 * I"""

    kind = "operator_norm"

    def __init__(
        self,
        dim: int,
        weight: Optional[AlgebraElement] = None,
        name: str = "operator_norm",
        logger: Optional[logging.Logger] = None,
    ):
        self.weight = weight if weight is not None else AlgebraElement.identity(dim)
        if not is_positive(self.weight).is_positive:
            raise PreconditionViolation("The weight operator T must be positive")
        weight_entries = self.weight.entries

        def metric(x: Point, y: Point) -> AlgebraElement:
            return AlgebraElement(norm(x - y) ** 2 * weight_entries)

        def contains(x: Point) -> bool:
            return isinstance(x, AlgebraElement) and x.dim == dim

        super().__init__(
            metric,
            AlgebraElement.scalar(4.0, self.weight.dim),
            self.weight.dim,
            contains=contains,
            name=name,
            logger=logger,
        )
        self.matrix_dim = int(dim)

    def random_point(self, rng: np.random.Generator) -> AlgebraElement:
        raw = rng.normal(size=(self.matrix_dim, self.matrix_dim)) + 1j * rng.normal(size=(self.matrix_dim, self.matrix_dim))
        return AlgebraElement(0.5 * (raw + raw.conj().T))


class CustomTableMetric(BMetricSpace):
    """Finite space with an explicit metric table, validated against the axioms on construction"""

    kind = "custom_table"

    def __init__(
        self,
        points: Sequence[Hashable],
        table: Sequence[Sequence[AlgebraElement]],
        coefficient: AlgebraElement,
        name: str = "custom_table",
        logger: Optional[logging.Logger] = None,
    ):
        self.points = list(points)
        if not self.points:
            raise EmptySample("A custom table needs at least one point")
        if len(table) != len(self.points) or any(len(row) != len(self.points) for row in table):
            raise PreconditionViolation("Metric table must be square with one row per point")
        self._index = {point_key(p): i for i, p in enumerate(self.points)}
        self._table = [list(row) for row in table]

        def metric(x: Point, y: Point) -> AlgebraElement:
            return self._table[self._index[point_key(x)]][self._index[point_key(y)]]

        def contains(x: Point) -> bool:
            return point_key(x) in self._index

        super().__init__(metric, coefficient, coefficient.dim, contains=contains, name=name, logger=logger)

        report = verify_axioms(self, list(itertools.product(self.points, repeat=3)))
        if not report.all_ok:
            raise AxiomViolation(
                f"Metric table '{name}' fails the b-metric axioms: symmetry={report.symmetry_ok}, "
                f"identity={report.identity_ok}, triangle={report.triangle_ok} "
                f"(worst slack {report.worst_triangle_slack:.3e})"
            )

    def random_point(self, rng: np.random.Generator) -> Hashable:
        return self.points[int(rng.integers(len(self.points)))]


def eval_metric(space: BMetricSpace, x: Point, y: Point) -> AlgebraElement:
    """Evaluate d(x, y) in the space"""
    return space.eval_metric(x, y)


def _is_zero(value: AlgebraElement) -> bool:
    return not np.any(value.entries)


def verify_axioms(
    space: BMetricSpace,
    sample: Sequence[Tuple[Point, Point, Point]],
    tol: float = POSITIVITY_RTOL,
) -> AxiomReport:
    """
    Check the b-metric axioms on sampled triples (x, y, z)

    Checks positivity with d(x, y) = 0 iff x = y, symmetry and
    d(x, y) <= A[d(x, z) + d(z, y)] in the Loewner order.

    Args:
        space: Space to check
        sample: Nonempty list of point triples
        tol: Relative tolerance for the positivity tests

    Returns:
        AxiomReport, worst_triangle_slack being the smallest eigenvalue of
        A[d(x, z) + d(z, y)] - d(x, y) seen over the sample
    """
    if not sample:
        raise EmptySample("verify_axioms needs at least one triple")

    identity_ok = symmetry_ok = triangle_ok = True
    worst_slack = float("inf")
    checked = 0
    coefficient = space.coefficient

    for x, y, z in sample:
        d_xy = space.eval_metric(x, y)
        d_xz = space.eval_metric(x, z)
        d_zy = space.eval_metric(z, y)
        checked += 3

        for (u, v), d_uv in (((x, y), d_xy), ((x, z), d_xz), ((z, y), d_zy)):
            if not is_positive(d_uv, tol).is_positive:
                identity_ok = False
            if same_point(u, v) != _is_zero(d_uv):
                identity_ok = False
            scale = max(1.0, norm(d_uv))
            if not d_uv.allclose(space.eval_metric(v, u), atol=tol * scale):
                symmetry_ok = False

        bound = coefficient @ (d_xz + d_zy) - d_xy
        worst_slack = min(worst_slack, min_eigenvalue(bound))
        if not is_positive(bound, tol).is_positive:
            triangle_ok = False

    report = AxiomReport(
        checked_pairs=checked,
        symmetry_ok=symmetry_ok,
        identity_ok=identity_ok,
        triangle_ok=triangle_ok,
        worst_triangle_slack=worst_slack,
    )
    logger.info(
        f"Axioms on {space.name}: {len(sample)} triples, symmetry={symmetry_ok}, "
        f"identity={identity_ok}, triangle={triangle_ok}, worst slack={worst_slack:.3e}"
    )
    return report


def power_inequality_check(p: float, samples: Sequence[Tuple[float, float, float]]) -> bool:
    """
    |x - y|^p <= 2^p (|x - z|^p + |z - y|^p) on every sampled (x, y, z)

    Args:
        p: Exponent, p >= 1
        samples: Real triples

    Returns:
        True if no sample violates the inequality beyond 1e-12 relative slack
    """
    if p < 1:
        raise PreconditionViolation(f"Exponent p must be >= 1, got {p}")
    for x, y, z in samples:
        lhs = abs(x - y) ** p
        rhs = 2.0 ** p * (abs(x - z) ** p + abs(z - y) ** p)
        if lhs > rhs * (1.0 + 1e-12):
            return False
    return True


def random_triples(space: BMetricSpace, count: int, rng: np.random.Generator) -> List[Tuple[Point, Point, Point]]:
    return [(space.random_point(rng), space.random_point(rng), space.random_point(rng)) for _ in range(count)]


def load_space(config: Dict[str, Any], logger: Optional[logging.Logger] = None) -> BMetricSpace:
    """
    Build a space from its structured config

    Args:
        config: {"kind": scalar_power | grid_function | custom_table | operator_norm, ...}
        logger: Optional logger instance

    Returns:
        The constructed space
    """
    kind = config.get("kind")
    try:
        coefficient = config.get("coefficient")
        if kind == "scalar_power":
            dim = int(config.get("dim", 2))
            return ScalarPowerMetric(
                p=float(config.get("p", 2.0)),
                dim=dim,
                domain=config.get("domain", "real"),
                coefficient=element_from_config(coefficient, dim) if coefficient is not None else None,
                name=config.get("name", "scalar_power"),
                logger=logger,
            )
        if kind == "grid_function":
            size = int(config["grid_size"])
            return GridFunctionMetric(
                grid_size=size,
                p=float(config.get("p", 1.0)),
                coefficient=element_from_config(coefficient, size) if coefficient is not None else None,
                name=config.get("name", "grid_function"),
                logger=logger,
            )
        if kind == "operator_norm":
            dim = int(config["dim"])
            weight = config.get("weight")
            return OperatorNormMetric(
                dim=dim,
                weight=element_from_config(weight, dim) if weight is not None else None,
                name=config.get("name", "operator_norm"),
                logger=logger,
            )
        if kind == "custom_table":
            dim = int(config.get("dim", 1))
            table = [[_table_entry(entry, dim) for entry in row] for row in config["table"]]
            return CustomTableMetric(
                points=config["points"],
                table=table,
                coefficient=element_from_config(coefficient, dim) if coefficient is not None else AlgebraElement.identity(dim),
                name=config.get("name", "custom_table"),
                logger=logger,
            )
    except (KeyError, TypeError, ValueError, PreconditionViolation, AxiomViolation, EmptySample) as e:
        raise ScenarioError(f"Invalid {kind} space config: {e}") from e
    raise ScenarioError(f"Unknown metric kind {kind!r}")


def _table_entry(entry: Any, dim: int) -> AlgebraElement:
    if isinstance(entry, (int, float)):
        return AlgebraElement.scalar(float(entry), dim)
    return element_from_config(entry, dim)
