"""
Applications of the contraction machinery

Two problem classes, each with a Picard solver and an independent direct solver:
- Stein-type operator equations X - sum_k B_k* X B_k = Q on M_n
- Fredholm integral equations x(t) = int_E k(t, s, x(s)) ds + g(t) on a uniform grid
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from fixedpoint.algebra import AlgebraElement, is_positive, norm
from fixedpoint.bmetric import GridFunctionMetric, OperatorNormMetric, verify_axioms, random_triples
from fixedpoint.engine import (
    ContractionCertificate,
    MappingPair,
    apriori_step_bound,
    certify_banach,
)
from fixedpoint.errors import (
    DimensionMismatch,
    GateViolation,
    NoConvergence,
    NonlinearKernel,
    NotPositive,
    PreconditionViolation,
    SingularSystem,
)
from fixedpoint.graph import CompleteFamily, DirectedGraph, sample_edges
from fixedpoint.logger import log_execution_time

logger = logging.getLogger(__name__)

STEIN_GATE = 0.5
STEIN_ADVISORY_GATE = 0.25
PHI_ROW_TOL = 1e-9
LIPSCHITZ_TOL = 1e-12
# Steps below this fraction of the solution scale are dominated by rounding
FACTOR_FLOOR = 1e-4


def _contraction_factors(step_norms: Sequence[float], scale: float) -> List[float]:
    """Ratios of consecutive step norms, taken only while the earlier step is above the rounding floor"""
    return [
        later / earlier
        for earlier, later in zip(step_norms, step_norms[1:])
        if earlier > FACTOR_FLOOR * scale
    ]


# ---------------------------------------------------------------------------
# Stein-type operator equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteinProblem:
    """
    X = sum_k B_k* X B_k + Q on M_n

    Q must be positive and share the dimension of every coefficient. The
    enforced gate is beta = sum_k ||B_k||^2 < 1/2; sum_k ||B_k||^4 < 1/4 is
    recorded as advisory.
    """
    coefficients: Sequence[AlgebraElement]
    Q: AlgebraElement

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        for B in self.coefficients:
            if B.dim != self.Q.dim:
                raise DimensionMismatch(f"Coefficient of dimension {B.dim} does not match Q of dimension {self.Q.dim}")
        if not is_positive(self.Q).is_positive:
            raise NotPositive("Stein problems need a positive right-hand side Q")

    @property
    def dim(self) -> int:
        return self.Q.dim

    @property
    def beta(self) -> float:
        return float(sum(norm(B) ** 2 for B in self.coefficients))

    @property
    def advisory_gate(self) -> bool:
        return float(sum(norm(B) ** 4 for B in self.coefficients)) < STEIN_ADVISORY_GATE

    def check_gate(self) -> None:
        if self.beta >= STEIN_GATE:
            raise GateViolation(f"Stein gate needs sum ||B_k||^2 < 1/2, got {self.beta:.6g}")
        if not self.advisory_gate:
            logger.warning("sum ||B_k||^4 >= 1/4; solving anyway since beta < 1/2")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SteinProblem":
        """Parse {dim, coefficients: [matrix...], Q: matrix}"""
        coefficients = [AlgebraElement.from_dict(entry) for entry in data.get("coefficients", [])]
        Q = AlgebraElement.from_dict(data["Q"])
        if "dim" in data and int(data["dim"]) != Q.dim:
            raise DimensionMismatch(f"Declared dim {data['dim']} does not match Q of dimension {Q.dim}")
        return cls(coefficients, Q)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "coefficients": [B.to_dict() for B in self.coefficients],
            "Q": self.Q.to_dict(),
        }


@dataclass
class SteinReport:
    solution: AlgebraElement
    iterations: int
    step_norms: List[float]
    metric_steps: List[float]
    bound_curve: List[float]
    contraction_factors: List[float]
    residual: float
    relative_residual: float
    hermitian: bool
    positive: bool
    oracle_delta: Optional[float] = None


class CertifiedMap(NamedTuple):
    pair: MappingPair
    space: Any
    graph: DirectedGraph
    certificate: ContractionCertificate


def stein_map(problem: SteinProblem, X: AlgebraElement) -> AlgebraElement:
    """F(X) = sum_k B_k* X B_k + Q"""
    entries = problem.Q.entries.copy()
    for B in problem.coefficients:
        entries = entries + B.entries.conj().T @ X.entries @ B.entries
    return AlgebraElement(entries)


def stein_certificate(
    problem: SteinProblem,
    rng: np.random.Generator,
    samples: int = 32,
    weight: Optional[AlgebraElement] = None,
) -> CertifiedMap:
    """
    Banach certificate for F on d(X, Y) = ||X - Y||^2 T over the complete graph

    Uses B = beta * I, so the certificate constant is 4 beta^2.
    """
    problem.check_gate()
    space = OperatorNormMetric(problem.dim, weight=weight, name="stein")
    graph = DirectedGraph(families=[CompleteFamily(space.random_point)], name="complete")
    pair = MappingPair.identity(lambda X: stein_map(problem, X), name="stein")
    B = AlgebraElement.scalar(problem.beta, space.algebra_dim)
    certificate = certify_banach(pair, space, graph, B, sample_edges(graph, 0, samples, rng))
    return CertifiedMap(pair, space, graph, certificate)


def stein_oracle(problem: SteinProblem) -> AlgebraElement:
    """
    Direct solve of vec(X) - M vec(X) = vec(Q) with column-stacking vec

    M = sum_k kron(B_k^T, B_k*), the matrix of X -> B_k* X B_k.
    """
    n = problem.dim
    M = np.zeros((n * n, n * n), dtype=complex)
    for B in problem.coefficients:
        M += np.kron(B.entries.T, B.entries.conj().T)
    rhs = problem.Q.entries.flatten(order="F")
    try:
        vec = scipy.linalg.solve(np.eye(n * n) - M, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise SingularSystem(f"Vectorized Stein system is singular: {e}") from e
    return AlgebraElement(vec.reshape((n, n), order="F"))


@log_execution_time
def solve_stein_report(
    problem: SteinProblem,
    X0: Optional[AlgebraElement] = None,
    tol: float = 1e-12,
    max_iter: int = 1000,
    certified: Optional[CertifiedMap] = None,
    with_oracle: bool = False,
) -> SteinReport:
    """
    Picard iteration X_{n+1} = F(X_n) with per-step history

    Args:
        problem: Stein problem
        X0: Start (default zero)
        tol: Stop once ||X_{n+1} - X_n|| < tol * max(1, ||X_{n+1}||) (spectral); a
            problem without coefficient mass has F(X) = Q and stops after one step
        max_iter: Iteration cap
        certified: Certificate from stein_certificate, used for the bound curve
        with_oracle: Also run the direct solver and record the max-abs difference

    Returns:
        SteinReport with the absolute residual ||X* - F(X*)|| and the same value
        divided by max(1, ||X*||); the relative one is <= tol
    """
    problem.check_gate()
    X = X0 if X0 is not None else AlgebraElement.zero(problem.dim)
    start = X
    if X.dim != problem.dim:
        raise DimensionMismatch(f"Start of dimension {X.dim} does not match problem dimension {problem.dim}")

    weight_norm = norm(certified.space.weight) if certified is not None else 1.0
    constant_map = problem.beta == 0.0
    step_norms: List[float] = []
    for _ in range(max_iter):
        X_next = stein_map(problem, X)
        step_norms.append(norm(X_next - X))
        X = X_next
        if constant_map or step_norms[-1] < tol * max(1.0, norm(X)):
            break
    else:
        raise NoConvergence(f"Stein iteration did not reach {tol:.1e} in {max_iter} steps (last {step_norms[-1]:.3e})")

    scale = max(1.0, norm(X))
    residual = norm(X - stein_map(problem, X))
    if residual > tol * scale:
        raise NoConvergence(f"Stein residual {residual:.3e} exceeds {tol:.1e} * {scale:.3e}")

    factors = _contraction_factors(step_norms, scale)
    metric_steps = [s ** 2 * weight_norm for s in step_norms]
    bound_curve: List[float] = []
    if certified is not None:
        Q = certified.space.eval_metric(start, stein_map(problem, start))
        bound_curve = [apriori_step_bound(certified.certificate, Q, k) for k in range(len(step_norms))]

    hermitian = X.allclose(X.star, atol=max(tol, 1e-10) * max(1.0, norm(X)))
    positive = is_positive(X).is_positive
    if problem.Q.allclose(problem.Q.star) and (X0 is None or X0.allclose(X0.star)) and not hermitian:
        logger.warning("Stein solution is not Hermitian although Q and X0 are")

    report = SteinReport(
        solution=X,
        iterations=len(step_norms),
        step_norms=step_norms,
        metric_steps=metric_steps,
        bound_curve=bound_curve,
        contraction_factors=factors,
        residual=residual,
        relative_residual=residual / scale,
        hermitian=hermitian,
        positive=positive,
    )
    if with_oracle:
        report.oracle_delta = float(np.max(np.abs(stein_oracle(problem).entries - X.entries)))
    logger.info(
        f"Stein solve: n={problem.dim}, N={len(problem.coefficients)}, beta={problem.beta:.4g}, "
        f"{report.iterations} iterations, residual {residual:.3e}"
    )
    return report


def stein_iterate(
    problem: SteinProblem,
    X0: Optional[AlgebraElement] = None,
    tol: float = 1e-12,
    max_iter: int = 1000,
) -> AlgebraElement:
    return solve_stein_report(problem, X0=X0, tol=tol, max_iter=max_iter).solution


def random_stein_problem(
    rng: np.random.Generator,
    dim: int,
    count: int,
    beta: float = 0.45,
) -> SteinProblem:
    """Random complex coefficients rescaled so that sum ||B_k||^2 = beta, random positive Q"""
    coefficients = []
    if count > 0:
        raw = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(count)]
        weights = rng.uniform(0.5, 1.5, size=count)
        weights = weights / weights.sum()
        for matrix, share in zip(raw, weights):
            scale = math.sqrt(beta * share) / np.linalg.norm(matrix, ord=2)
            coefficients.append(AlgebraElement(scale * matrix))
    root = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Q = AlgebraElement(root @ root.conj().T + 0.1 * np.eye(dim))
    return SteinProblem(coefficients, Q)


# ---------------------------------------------------------------------------
# Fredholm integral equation
# ---------------------------------------------------------------------------

PhiSpec = Union[str, Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray, list]

PHI_BUILTINS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "ones": lambda t, s: np.ones(np.broadcast(t, s).shape),
    "product": lambda t, s: t * s,
}

NONLINEARITIES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda u: u,
    "sin": np.sin,
    "tanh": np.tanh,
}


def phi_on_grid(phi: PhiSpec, nodes: np.ndarray) -> np.ndarray:
    """Evaluate phi on nodes x nodes: a builtin name, a vectorized callable or an explicit table"""
    m = len(nodes)
    if isinstance(phi, str):
        if phi not in PHI_BUILTINS:
            raise PreconditionViolation(f"Unknown phi builtin {phi!r}; expected one of {sorted(PHI_BUILTINS)}")
        table = PHI_BUILTINS[phi](nodes[:, None], nodes[None, :])
    elif callable(phi):
        table = phi(nodes[:, None], nodes[None, :])
    else:
        table = phi
    table = np.asarray(table, dtype=float)
    if table.shape != (m, m):
        raise DimensionMismatch(f"phi table has shape {table.shape}, grid needs ({m}, {m})")
    return table


@dataclass(frozen=True)
class Kernel:
    """k(t, s, u) = scale * phi(t, s) * sigma(u) + offset"""
    phi: PhiSpec = "ones"
    scale: float = 1.0
    offset: float = 0.0

    nonlinearity = "identity"

    @property
    def is_affine(self) -> bool:
        return self.nonlinearity == "identity"

    def values(self, phi_grid: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Kernel table K[i, j] = k(t_i, s_j, u_j)"""
        sigma = NONLINEARITIES[self.nonlinearity]
        return self.scale * phi_grid * sigma(np.asarray(u, dtype=float))[None, :] + self.offset

    def pointwise(self, phi_value: float, u: float) -> float:
        return self.scale * phi_value * float(NONLINEARITIES[self.nonlinearity](u)) + self.offset


@dataclass(frozen=True)
class LinearPhiKernel(Kernel):
    pass


@dataclass(frozen=True)
class CustomKernel(Kernel):
    nonlinearity: str = "identity"

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise PreconditionViolation(
                f"Unknown nonlinearity {self.nonlinearity!r}; expected one of {sorted(NONLINEARITIES)}"
            )


@dataclass(frozen=True, eq=False)
class IntegralProblem:
    """
    x(t) = int_E k(t, s, x(s)) ds + g(t) on E = [lo, hi]

    Discretized with m uniform nodes t_i = lo + i w, w = (hi - lo) / m, and the
    left-endpoint rule.
    """
    lo: float
    hi: float
    m: int
    p: float
    beta: float
    kernel: Kernel
    g: Any = 0.0
    phi_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 1 or not self.hi > self.lo:
            raise PreconditionViolation(f"Need m >= 1 and hi > lo, got m={self.m}, [{self.lo}, {self.hi}]")
        if self.p < 1:
            raise PreconditionViolation(f"Exponent p must be at least 1, got {self.p}")
        g = np.broadcast_to(np.asarray(self.g, dtype=float), (self.m,)).copy()
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "phi_grid", phi_on_grid(self.kernel.phi, self.nodes))

    @property
    def w(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.w * np.arange(self.m)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """One Picard step: w * sum_s k(t, s, x(s)) + g(t)"""
        return self.w * self.kernel.values(self.phi_grid, x).sum(axis=1) + self.g

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IntegralProblem":
        """
        Parse {lo, hi, m, p, beta, kernel, g}

        kernel is {"name": "linear_phi" | "custom", "phi": builtin name or table,
        "scale", "offset", "nonlinearity"}; scale defaults to beta.
        """
        spec = dict(data.get("kernel", {}))
        name = spec.pop("name", "linear_phi")
        beta = float(data["beta"])
        options = {
            "phi": spec.get("phi", "ones"),
            "scale": float(spec.get("scale", beta)),
            "offset": float(spec.get("offset", 0.0)),
        }
        if name == "linear_phi":
            kernel: Kernel = LinearPhiKernel(**options)
        elif name == "custom":
            kernel = CustomKernel(nonlinearity=spec.get("nonlinearity", "identity"), **options)
        else:
            raise PreconditionViolation(f"Unknown kernel {name!r}")
        return cls(
            lo=float(data.get("lo", 0.0)),
            hi=float(data.get("hi", 1.0)),
            m=int(data["m"]),
            p=float(data.get("p", 1.0)),
            beta=beta,
            kernel=kernel,
            g=data.get("g", 0.0),
        )


@dataclass(frozen=True)
class IntegralConditions:
    beta_ok: bool
    phi_ok: bool
    lipschitz_ok: bool
    phi_row_sup: float
    worst_lipschitz_excess: float

    @property
    def all_ok(self) -> bool:
        return self.beta_ok and self.phi_ok and self.lipschitz_ok


@dataclass
class IntegralReport:
    solution: np.ndarray
    iterations: int
    step_norms: List[float]
    metric_steps: List[float]
    bound_curve: List[float]
    residuals: List[float]
    contraction_factors: List[float]
    residual: float
    relative_residual: float
    conditions: IntegralConditions
    axioms_ok: Optional[bool] = None
    oracle_delta: Optional[float] = None


def check_integral_conditions(problem: IntegralProblem, rng: np.random.Generator, samples: int = 256) -> IntegralConditions:
    """
    Solvability conditions

    (b) beta in (0, 2^(-p/2)) and a sampled Lipschitz bound
        |k(t, s, u) - k(t, s, v)| <= beta |phi(t, s) (u - v)|
    (c) sup_t w * sum_s |phi(t, s)| <= 1
    """
    beta_ok = 0 < problem.beta < 1 / math.sqrt(2 ** problem.p)
    row_sup = float(np.max(problem.w * np.abs(problem.phi_grid).sum(axis=1)))
    phi_ok = row_sup <= 1 + PHI_ROW_TOL

    worst = -math.inf
    for _ in range(samples):
        i, j = (int(k) for k in rng.integers(0, problem.m, size=2))
        u, v = (float(k) for k in rng.uniform(-10.0, 10.0, size=2))
        phi_value = problem.phi_grid[i, j]
        gap = abs(problem.kernel.pointwise(phi_value, u) - problem.kernel.pointwise(phi_value, v))
        worst = max(worst, gap - problem.beta * abs(phi_value * (u - v)))
    lipschitz_ok = worst <= LIPSCHITZ_TOL

    return IntegralConditions(
        beta_ok=beta_ok,
        phi_ok=phi_ok,
        lipschitz_ok=lipschitz_ok,
        phi_row_sup=row_sup,
        worst_lipschitz_excess=worst,
    )


def _require_conditions(problem: IntegralProblem, rng: Optional[np.random.Generator]) -> IntegralConditions:
    conditions = check_integral_conditions(problem, rng if rng is not None else np.random.default_rng(0))
    if not conditions.all_ok:
        raise GateViolation(
            f"Integral problem fails its conditions: beta={conditions.beta_ok}, "
            f"phi rows={conditions.phi_ok} (sup {conditions.phi_row_sup:.6g}), "
            f"Lipschitz={conditions.lipschitz_ok}"
        )
    return conditions


@log_execution_time
def solve_integral_report(
    problem: IntegralProblem,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 1000,
    rng: Optional[np.random.Generator] = None,
    axiom_samples: int = 0,
    with_oracle: bool = False,
) -> IntegralReport:
    """
    Picard iteration with per-step history

    The bound curve is in the norm of d_b(x, y) = diag(|x - y|^p):
    ||d_b(x_n, x_{n+1})|| <= beta^(p n) ||d_b(x_0, x_1)||.

    Args:
        problem: Integral problem
        x0: Start (default g)
        tol: Stop once the sup-norm step drops below tol * max(1, sup |x|)
        max_iter: Iteration cap
        rng: Generator for the sampled Lipschitz check and axiom triples
        axiom_samples: Random triples for verify_axioms on the grid space (0 skips)
        with_oracle: Also run the direct solver (affine kernels only)
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    conditions = _require_conditions(problem, rng)

    x = problem.g.copy() if x0 is None else np.asarray(x0, dtype=float)
    if x.shape != (problem.m,):
        raise DimensionMismatch(f"Start has shape {x.shape}, grid has {problem.m} nodes")

    step_norms: List[float] = []
    residuals: List[float] = []
    for _ in range(max_iter):
        x_next = problem.apply(x)
        step_norms.append(float(np.max(np.abs(x_next - x))))
        x = x_next
        residuals.append(float(np.max(np.abs(x - problem.apply(x)))))
        if step_norms[-1] < tol * max(1.0, float(np.max(np.abs(x)))):
            break
    else:
        raise NoConvergence(f"Picard iteration did not reach {tol:.1e} in {max_iter} steps (last {step_norms[-1]:.3e})")

    scale = max(1.0, float(np.max(np.abs(x))))
    residual = residuals[-1]
    if residual > tol * scale:
        raise NoConvergence(f"Integral residual {residual:.3e} exceeds {tol:.1e} * {scale:.3e}")

    metric_steps = [s ** problem.p for s in step_norms]
    bound_curve = [metric_steps[0] * problem.beta ** (problem.p * n) for n in range(len(step_norms))]
    factors = _contraction_factors(step_norms, scale)

    report = IntegralReport(
        solution=x,
        iterations=len(step_norms),
        step_norms=step_norms,
        metric_steps=metric_steps,
        bound_curve=bound_curve,
        residuals=residuals,
        contraction_factors=factors,
        residual=residual,
        relative_residual=residual / scale,
        conditions=conditions,
    )
    if axiom_samples > 0:
        space = GridFunctionMetric(problem.m, p=problem.p)
        report.axioms_ok = verify_axioms(space, random_triples(space, axiom_samples, rng)).all_ok
    if with_oracle:
        report.oracle_delta = float(np.max(np.abs(integral_oracle(problem) - x)))
    logger.info(f"Integral solve: m={problem.m}, beta={problem.beta:.4g}, {report.iterations} iterations, residual {residual:.3e}")
    return report


def integral_solve(
    problem: IntegralProblem,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    return solve_integral_report(problem, x0=x0, tol=tol, max_iter=max_iter, rng=rng).solution


def integral_oracle(problem: IntegralProblem) -> np.ndarray:
    """
    Dense solve of (I - scale w Phi) x = g + w C 1 for affine kernels

    Raises:
        NonlinearKernel: the kernel is not affine in u
        SingularSystem: the linear system cannot be solved
    """
    kernel = problem.kernel
    if not kernel.is_affine:
        raise NonlinearKernel(f"Direct solve needs an affine kernel, got nonlinearity {kernel.nonlinearity!r}")
    m = problem.m
    system = np.eye(m) - kernel.scale * problem.w * problem.phi_grid
    rhs = problem.g + problem.w * kernel.offset * m
    try:
        return scipy.linalg.solve(system, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise SingularSystem(f"Integral system is singular: {e}") from e
