"""
Jungck iteration and graph contraction certificates

Covers the two contraction families (Banach type with B* d B and Kannan type
with B(d(fx, gx) + d(fy, gy))), their a priori and Cauchy tail bounds, the
extraction of coincidence points, weak compatibility and the promotion to a
common fixed point.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fixedpoint.algebra import (
    POSITIVITY_RTOL,
    AlgebraElement,
    NormMode,
    OrderMode,
    in_center,
    is_positive,
    norm,
    order_slack,
    resolvent_contraction,
)
from fixedpoint.bmetric import BMetricSpace
from fixedpoint.errors import (
    CertificateInvalid,
    CertificateViolation,
    DivergentParameters,
    NoConvergence,
    OrbitNotInCgf,
    PreconditionViolation,
    PreimageFailure,
)
from fixedpoint.graph import DirectedGraph, check_orbit_membership, check_P2_P4, symmetrize
from fixedpoint.logger import log_execution_time, log_function_call

logger = logging.getLogger(__name__)

Point = Any

DEFAULT_TOL = 1e-12
DEFAULT_HORIZON = 64
# Acceptance residual is this multiple of the stopping tolerance
ACCEPT_FACTOR = 10.0
EDGE_RTOL = 1e-12

CGF_POLICIES = ("enforce", "advisory")


@dataclass(frozen=True)
class MappingPair:
    """
    Self-maps f, g with f(X) inside g(X)

    g_preimage(y) returns some x with g(x) = y, or None when no such x is known.
    Different selectors may produce different orbits.
    """
    f: Callable[[Point], Point]
    g: Callable[[Point], Point]
    g_preimage: Callable[[Point], Optional[Point]]
    identity_g: bool = False
    name: str = "pair"

    @classmethod
    def affine_g(cls, f: Callable[[Point], Point], slope: float, intercept: float = 0.0, name: str = "pair") -> "MappingPair":
        """Pair with g(x) = slope * x + intercept and its closed-form inverse"""
        if slope == 0:
            raise PreconditionViolation("Affine g needs a nonzero slope to be invertible")
        return cls(
            f=f,
            g=lambda x: slope * x + intercept,
            g_preimage=lambda y: (y - intercept) / slope,
            identity_g=slope == 1 and intercept == 0,
            name=name,
        )

    @classmethod
    def identity(cls, f: Callable[[Point], Point], name: str = "fixed_point") -> "MappingPair":
        return cls(f=f, g=lambda x: x, g_preimage=lambda y: y, identity_g=True, name=name)


@dataclass
class IterationTrace:
    orbit: List[Point]
    step_norms: List[float]
    preimages: List[Point] = field(default_factory=list)
    bound_values: List[float] = field(default_factory=list)
    converged: bool = False
    limit: Optional[Point] = None
    # d(gx_0, gx_1), set once bounds are attached
    Q: Optional[AlgebraElement] = None


class CertificateFamily(str, Enum):
    BANACH = "banach"
    KANNAN = "kannan"


@dataclass(frozen=True)
class EdgeResult:
    edge: Tuple[Point, Point]
    holds: bool
    slack: float


@dataclass
class ContractionCertificate:
    family: CertificateFamily
    B: AlgebraElement
    constants: Dict[str, float]
    edge_results: List[EdgeResult]
    overall: bool
    norm_mode: NormMode = NormMode.SPECTRAL
    order_mode: OrderMode = OrderMode.LOEWNER
    t: Optional[AlgebraElement] = None
    notes: List[str] = field(default_factory=list)

    @property
    def worst_slack(self) -> Optional[float]:
        if not self.edge_results:
            return None
        return min(result.slack for result in self.edge_results)

    @property
    def failed_edges(self) -> List[EdgeResult]:
        return [result for result in self.edge_results if not result.holds]

    def summary(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "overall": self.overall,
            "norm_mode": self.norm_mode.value,
            "order_mode": self.order_mode.value,
            "constants": dict(self.constants),
            "edges_checked": len(self.edge_results),
            "edges_failed": len(self.failed_edges),
            "worst_slack": self.worst_slack,
            "notes": list(self.notes),
        }


@dataclass
class CoincidenceResult:
    coincidence_point: Point
    point_of_coincidence: Point
    weakly_compatible: bool
    common_fixed_point: Optional[Point] = None
    uniqueness_checked: bool = False
    in_cgf: bool = True
    residual: float = 0.0
    iterations: int = 0
    seed: Optional[Point] = None
    trace: Optional[IterationTrace] = None


def _preimage(pair: MappingPair, y: Point, step: int) -> Point:
    x = pair.g_preimage(y)
    if x is None:
        raise PreimageFailure(f"No g-preimage for {y!r} at step {step}; f(X) is not inside g(X) there")
    return x


def _is_finite_point(x: Point) -> bool:
    """False for numeric points with inf/nan entries; labels are always finite"""
    if isinstance(x, AlgebraElement):
        return bool(np.all(np.isfinite(x.entries)))
    try:
        return bool(np.all(np.isfinite(np.asarray(x, dtype=complex))))
    except (TypeError, ValueError):
        return True


def _distance(space: BMetricSpace, x: Point, y: Point, mode: NormMode) -> float:
    return norm(space.eval_metric(x, y), mode)


def jungck_orbit(
    pair: MappingPair,
    space: BMetricSpace,
    x0: Point,
    n_steps: int,
    norm_mode: NormMode = NormMode.SPECTRAL,
    stop_tol: Optional[float] = None,
    min_steps: int = 0,
) -> IterationTrace:
    """
    Jungck orbit gx_0, gx_1, ... with gx_n = f(x_{n-1})

    Args:
        pair: Mapping pair
        space: Space supplying the metric for the step norms
        x0: Seed
        n_steps: Number of steps (orbit has n_steps + 1 entries)
        norm_mode: Norm applied to d(gx_n, gx_{n+1})
        stop_tol: Stop early once a step norm drops below this value
        min_steps: Steps taken before early stopping is allowed

    Returns:
        IterationTrace with orbit, step norms and the chosen preimages x_n
    """
    if n_steps < 1:
        raise PreconditionViolation(f"n_steps must be at least 1, got {n_steps}")

    x = x0
    orbit = [pair.g(x0)]
    preimages = [x0]
    step_norms: List[float] = []

    for n in range(1, n_steps + 1):
        gx = pair.f(x)
        step = float("nan")
        if _is_finite_point(gx):
            x = _preimage(pair, gx, n)
            try:
                step = _distance(space, orbit[-1], gx, norm_mode)
            except (OverflowError, ValueError):
                pass
        if not np.isfinite(step):
            partial = IterationTrace(orbit=orbit, step_norms=step_norms, preimages=preimages)
            raise NoConvergence(
                f"Orbit of {pair.name} from {x0!r} diverged at step {n}: "
                f"d(gx_{n - 1}, gx_{n}) is not finite (last finite step {step_norms[-1] if step_norms else 'none'})",
                trace=partial,
            )
        orbit.append(gx)
        preimages.append(x)
        step_norms.append(step)
        if stop_tol is not None and n >= min_steps and step < stop_tol:
            break

    logger.debug(f"Orbit of {pair.name} from {x0!r}: {len(step_norms)} steps, last step {step_norms[-1]:.3e}")
    return IterationTrace(orbit=orbit, step_norms=step_norms, preimages=preimages)


def _edge_tolerance(tol: float, lhs: AlgebraElement, rhs: AlgebraElement) -> float:
    return tol * max(1.0, norm(lhs), norm(rhs))


def _check_edges(
    pair: MappingPair,
    space: BMetricSpace,
    graph: DirectedGraph,
    edge_sample: Iterable[Tuple[Point, Point]],
    rhs_of: Callable[[Point, Point, Point, Point], AlgebraElement],
    order_mode: OrderMode,
    tol: float,
) -> List[EdgeResult]:
    closure = symmetrize(graph)
    results = []
    for gx, gy in edge_sample:
        if not closure.has_edge(gx, gy):
            logger.warning(f"Skipping sampled pair ({gx!r}, {gy!r}): not an edge of {closure.name}")
            continue
        x = _preimage(pair, gx, 0)
        y = _preimage(pair, gy, 0)
        fx, fy = pair.f(x), pair.f(y)
        lhs = space.eval_metric(fx, fy)
        rhs = rhs_of(gx, gy, fx, fy)
        slack = order_slack(lhs, rhs, order_mode)
        holds = slack >= -_edge_tolerance(tol, lhs, rhs)
        results.append(EdgeResult(edge=(gx, gy), holds=holds, slack=slack))
    return results


@log_function_call
def certify_banach(
    pair: MappingPair,
    space: BMetricSpace,
    graph: DirectedGraph,
    B: AlgebraElement,
    edge_sample: Iterable[Tuple[Point, Point]],
    norm_mode: NormMode = NormMode.SPECTRAL,
    order_mode: OrderMode = OrderMode.LOEWNER,
    tol: float = EDGE_RTOL,
) -> ContractionCertificate:
    """
    Check d(fx, fy) <= B* d(gx, gy) B on sampled edges plus ||A|| ||B||^2 < 1

    Edges are given in g-image coordinates (gx, gy). Failures are recorded per
    edge; nothing is raised for a failing inequality.
    """
    norm_mode, order_mode = NormMode(norm_mode), OrderMode(order_mode)
    norm_a = norm(space.coefficient, norm_mode)
    norm_b = norm(B, norm_mode)
    lam = norm_a * norm_b ** 2

    def rhs_of(gx, gy, fx, fy):
        return B.star @ space.eval_metric(gx, gy) @ B

    results = _check_edges(pair, space, graph, edge_sample, rhs_of, order_mode, tol)
    overall = lam < 1 and all(result.holds for result in results)

    certificate = ContractionCertificate(
        family=CertificateFamily.BANACH,
        B=B,
        constants={"norm_A": norm_a, "norm_B": norm_b, "lambda": lam},
        edge_results=results,
        overall=overall,
        norm_mode=norm_mode,
        order_mode=order_mode,
        notes=["bounds use ||B||^2 in place of ||B^2||"],
    )
    logger.info(
        f"Banach certificate for {pair.name}: overall={overall}, lambda={lam:.6g}, "
        f"{len(results)} edges, {len(certificate.failed_edges)} failed"
    )
    return certificate


@log_function_call
def certify_kannan(
    pair: MappingPair,
    space: BMetricSpace,
    graph: DirectedGraph,
    B: AlgebraElement,
    edge_sample: Iterable[Tuple[Point, Point]],
    norm_mode: NormMode = NormMode.SPECTRAL,
    order_mode: OrderMode = OrderMode.LOEWNER,
    tol: float = EDGE_RTOL,
) -> ContractionCertificate:
    """
    Check d(fx, fy) <= B (d(fx, gx) + d(fy, gy)) on sampled edges

    B must be a positive element of the center with ||BA|| < 1/2. The
    certificate records t = B(1 - B)^-1 and its norm.
    """
    norm_mode, order_mode = NormMode(norm_mode), OrderMode(order_mode)
    if not in_center(B) or not is_positive(B, POSITIVITY_RTOL).is_positive:
        raise PreconditionViolation("Kannan certificates need B positive and in the center of the algebra")
    norm_ba = norm(B @ space.coefficient, norm_mode)
    if norm_ba >= 0.5:
        raise PreconditionViolation(f"Kannan certificates need ||BA|| < 1/2, got {norm_ba:.6g}")
    t = resolvent_contraction(B)

    def rhs_of(gx, gy, fx, fy):
        return B @ (space.eval_metric(fx, gx) + space.eval_metric(fy, gy))

    results = _check_edges(pair, space, graph, edge_sample, rhs_of, order_mode, tol)
    overall = all(result.holds for result in results)

    certificate = ContractionCertificate(
        family=CertificateFamily.KANNAN,
        B=B,
        constants={
            "norm_A": norm(space.coefficient, norm_mode),
            "norm_B": norm(B, norm_mode),
            "norm_BA": norm_ba,
            "norm_t": norm(t, norm_mode),
        },
        edge_results=results,
        overall=overall,
        norm_mode=norm_mode,
        order_mode=order_mode,
        t=t,
    )
    logger.info(
        f"Kannan certificate for {pair.name}: overall={overall}, ||BA||={norm_ba:.6g}, "
        f"||t||={certificate.constants['norm_t']:.6g}, worst slack={certificate.worst_slack}"
    )
    return certificate


def _require_valid(certificate: ContractionCertificate) -> None:
    if not certificate.overall:
        raise CertificateInvalid(f"{certificate.family.value} certificate did not pass")


def apriori_step_bound(certificate: ContractionCertificate, Q: AlgebraElement, n: int) -> float:
    """
    Upper bound on ||d(gx_n, gx_{n+1})|| with Q = d(gx_0, gx_1)

    Banach: ||B||^(2n) ||Q||. Kannan: ||t||^n ||Q||.
    """
    _require_valid(certificate)
    if n < 0:
        raise PreconditionViolation(f"Step index must be nonnegative, got {n}")
    q = norm(Q, certificate.norm_mode)
    if certificate.family is CertificateFamily.BANACH:
        return certificate.constants["norm_B"] ** (2 * n) * q
    return certificate.constants["norm_t"] ** n * q


def cauchy_tail_bound(certificate: ContractionCertificate, Q: AlgebraElement, n: int, m: int) -> float:
    """
    Closed-form majorant of ||d(gx_n, gx_m)|| for m > n

    Banach:
        ||A||^(1-n) ||Q|| sum_{j=n}^{m-2} lam^j + ||A||^(-n) ||Q|| lam^(m-1), lam = ||A|| ||B||^2
    Kannan, with p = m - n:
        ||A||^p ||t||^(n+1) ||Q|| / (||A|| - ||t||) + ||A||^(p-1) ||t||^n ||Q||
    """
    _require_valid(certificate)
    if not 0 <= n < m:
        raise PreconditionViolation(f"Tail bound needs 0 <= n < m, got n={n}, m={m}")
    q = norm(Q, certificate.norm_mode)
    a = certificate.constants["norm_A"]

    if certificate.family is CertificateFamily.BANACH:
        lam = certificate.constants["lambda"]
        if lam >= 1:
            raise DivergentParameters(f"Geometric ratio ||A|| ||B||^2 = {lam:.6g} is not below 1")
        series = sum(lam ** j for j in range(n, m - 1))
        return a ** (1 - n) * q * series + a ** (-n) * q * lam ** (m - 1)

    t = certificate.constants["norm_t"]
    if t >= a:
        raise DivergentParameters(f"||t|| = {t:.6g} is not below ||A|| = {a:.6g}")
    p = m - n
    return a ** p * t ** (n + 1) * q / (a - t) + a ** (p - 1) * t ** n * q


def _attach_bounds(trace: IterationTrace, space: BMetricSpace, certificate: ContractionCertificate) -> None:
    trace.Q = space.eval_metric(trace.orbit[0], trace.orbit[1])
    trace.bound_values = [apriori_step_bound(certificate, trace.Q, n) for n in range(len(trace.step_norms))]


@log_execution_time
def solve_coincidence(
    pair: MappingPair,
    space: BMetricSpace,
    graph: DirectedGraph,
    certificate: ContractionCertificate,
    x0: Point,
    tol: float = DEFAULT_TOL,
    max_iter: int = 1000,
    horizon: int = DEFAULT_HORIZON,
    cgf_policy: str = "enforce",
) -> CoincidenceResult:
    """
    Run the Jungck iteration from x0 to a point of coincidence

    Args:
        pair: Mapping pair
        space: b-metric space
        graph: Graph whose symmetrization must connect the orbit
        certificate: Passing contraction certificate
        x0: Seed
        tol: Stopping tolerance on ||d(gx_n, gx_{n+1})||
        max_iter: Iteration cap
        horizon: Orbit entries checked for C_gf membership
        cgf_policy: "enforce" raises OrbitNotInCgf, "advisory" records it and continues

    Returns:
        CoincidenceResult with residual ||d(f(v), g(v))|| <= 10 * tol
    """
    if cgf_policy not in CGF_POLICIES:
        raise PreconditionViolation(f"cgf_policy must be one of {CGF_POLICIES}, got {cgf_policy!r}")
    _require_valid(certificate)
    mode = certificate.norm_mode
    tol_accept = ACCEPT_FACTOR * tol

    trace = jungck_orbit(pair, space, x0, max(max_iter, horizon), mode, stop_tol=tol, min_steps=horizon)

    in_cgf = check_orbit_membership(graph, trace.orbit, horizon)
    if not in_cgf:
        message = f"Orbit of {pair.name} from {x0!r} is not pairwise connected in {graph.name}~ up to {horizon}"
        if cgf_policy == "enforce":
            raise OrbitNotInCgf(message)
        logger.warning(f"{message}; continuing under advisory policy")

    converged_at = next((n for n, step in enumerate(trace.step_norms) if step < tol), None)
    if converged_at is None:
        raise NoConvergence(
            f"No convergence from {x0!r} after {len(trace.step_norms)} steps (last step {trace.step_norms[-1]:.3e})"
        )
    iterations = converged_at + 1
    trace.orbit = trace.orbit[: iterations + 1]
    trace.preimages = trace.preimages[: iterations + 1]
    trace.step_norms = trace.step_norms[:iterations]
    trace.converged = True
    trace.limit = trace.orbit[-1]
    _attach_bounds(trace, space, certificate)

    v = _preimage(pair, trace.limit, iterations)
    u = pair.f(v)
    residual = _distance(space, u, pair.g(v), mode)
    if residual > tol_accept:
        raise NoConvergence(f"Residual ||d(f(v), g(v))|| = {residual:.3e} exceeds {tol_accept:.1e}")

    compatible = _distance(space, pair.f(pair.g(v)), pair.g(pair.f(v)), mode) <= tol_accept
    common = None
    if compatible:
        if _distance(space, pair.f(u), u, mode) <= tol_accept and _distance(space, pair.g(u), u, mode) <= tol_accept:
            common = u
        else:
            logger.warning(f"Point of coincidence {u!r} is weakly compatible but not a common fixed point")

    logger.info(
        f"{pair.name} from {x0!r}: point of coincidence {u!r} after {iterations} iterations, "
        f"weakly compatible={compatible}, common fixed point={'yes' if common is not None else 'no'}"
    )
    return CoincidenceResult(
        coincidence_point=v,
        point_of_coincidence=u,
        weakly_compatible=compatible,
        common_fixed_point=common,
        in_cgf=in_cgf,
        residual=residual,
        iterations=iterations,
        seed=x0,
        trace=trace,
    )


def solve_fixed_point(
    f: Callable[[Point], Point],
    space: BMetricSpace,
    graph: DirectedGraph,
    certificate: ContractionCertificate,
    x0: Point,
    tol: float = DEFAULT_TOL,
    max_iter: int = 1000,
    horizon: int = DEFAULT_HORIZON,
    cgf_policy: str = "enforce",
) -> CoincidenceResult:
    """Fixed point of f: the coincidence problem with g the identity"""
    return solve_coincidence(
        MappingPair.identity(f), space, graph, certificate, x0,
        tol=tol, max_iter=max_iter, horizon=horizon, cgf_policy=cgf_policy,
    )


def check_uniqueness(
    results: Sequence[CoincidenceResult],
    space: BMetricSpace,
    graph: DirectedGraph,
    certificate: ContractionCertificate,
    tol: float = DEFAULT_TOL,
) -> List[CoincidenceResult]:
    """
    Compare points of coincidence found from different seeds

    Points within the acceptance tolerance are clustered. If more than one
    cluster survives and the representatives are pairwise connected in G~ under
    a passing certificate, the contraction argument is contradicted and
    CertificateViolation is raised. Weak compatibility must hold at every
    coincidence point found; otherwise common fixed points are withdrawn.

    Returns:
        Copies of the results with uniqueness_checked set
    """
    if not results:
        return []
    mode = certificate.norm_mode
    tol_accept = ACCEPT_FACTOR * tol

    representatives: List[Point] = []
    for result in results:
        u = result.point_of_coincidence
        if not any(_distance(space, u, rep, mode) <= tol_accept for rep in representatives):
            representatives.append(u)

    connected = check_P2_P4(graph, representatives)
    if len(representatives) > 1:
        if connected and certificate.overall:
            raise CertificateViolation(
                f"{len(representatives)} distinct points of coincidence are connected in {graph.name}~"
            )
        logger.warning(f"{len(representatives)} distinct points of coincidence, not all connected in {graph.name}~")

    all_compatible = all(result.weakly_compatible for result in results)
    checked = []
    for result in results:
        updates: Dict[str, Any] = {"uniqueness_checked": connected}
        if not all_compatible:
            updates.update(weakly_compatible=False, common_fixed_point=None)
        checked.append(dataclasses.replace(result, **updates))
    return checked


@log_execution_time
def solve_from_seeds(
    pair: MappingPair,
    space: BMetricSpace,
    graph: DirectedGraph,
    certificate: ContractionCertificate,
    seeds: Sequence[Point],
    tol: float = DEFAULT_TOL,
    max_iter: int = 1000,
    horizon: int = DEFAULT_HORIZON,
    cgf_policy: str = "enforce",
) -> List[CoincidenceResult]:
    """Solve from every seed and cross-check the points of coincidence"""
    if not seeds:
        raise PreconditionViolation("At least one seed is required")
    results = [
        solve_coincidence(pair, space, graph, certificate, x0, tol=tol, max_iter=max_iter,
                          horizon=horizon, cgf_policy=cgf_policy)
        for x0 in seeds
    ]
    return check_uniqueness(results, space, graph, certificate, tol=tol)


def select_reporting_certificate(certificates: Iterable[ContractionCertificate]) -> ContractionCertificate:
    """Passing Banach certificate if any, else the first passing one"""
    passing = [certificate for certificate in certificates if certificate.overall]
    if not passing:
        raise CertificateInvalid("No passing certificate to report bounds from")
    for certificate in passing:
        if certificate.family is CertificateFamily.BANACH:
            return certificate
    return passing[0]
