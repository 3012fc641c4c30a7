"""
Finite-dimensional C*-algebra core

This module models the unital C*-algebra M_n of complex n x n matrices:
- involution (conjugate transpose) and the spectral / Frobenius norms
- positivity reports and the Loewner / entrywise partial orders
- positive square roots through the Hermitian functional calculus
- the resolvent contraction t = a(1 - a)^-1 and membership in the center
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np
import scipy.linalg

from fixedpoint.errors import DimensionMismatch, NotPositive, PreconditionViolation

logger = logging.getLogger(__name__)

# Relative tolerance for positivity: min eigenvalue >= -POSITIVITY_RTOL * max(1, ||a||)
POSITIVITY_RTOL = 1e-10
SQRT_EPS = 1e-10
CENTER_TOL = 1e-12
# Eigenvalues below EIGEN_FLOOR * max(1, ||a||) are rounding noise and take a zero root
EIGEN_FLOOR = 1e-14


class NormMode(str, Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


class OrderMode(str, Enum):
    LOEWNER = "loewner"
    ENTRYWISE = "entrywise"


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """
    An element of M_n stored as a read-only complex matrix.

    Real inputs are embedded with zero imaginary part. Construction rejects
    non-square, empty or non-finite input.
    """
    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError(f"Algebra elements must be square matrices, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Algebra elements must have finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n: int) -> "AlgebraElement":
        return cls(np.eye(n))

    @classmethod
    def zero(cls, n: int) -> "AlgebraElement":
        return cls(np.zeros((n, n)))

    @classmethod
    def scalar(cls, value: complex, n: int) -> "AlgebraElement":
        return cls(value * np.eye(n))

    @classmethod
    def diag(cls, values: Iterable[complex]) -> "AlgebraElement":
        return cls(np.diag(np.asarray(list(values), dtype=complex)))

    def _check_dim(self, other: "AlgebraElement") -> None:
        if self.dim != other.dim:
            raise DimensionMismatch(f"Cannot combine elements of dimension {self.dim} and {other.dim}")

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_dim(other)
        return AlgebraElement(self.entries + other.entries)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_dim(other)
        return AlgebraElement(self.entries - other.entries)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(-self.entries)

    def __matmul__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_dim(other)
        return AlgebraElement(self.entries @ other.entries)

    def __mul__(self, scalar: Union[int, float, complex]) -> "AlgebraElement":
        return AlgebraElement(scalar * self.entries)

    __rmul__ = __mul__

    @property
    def star(self) -> "AlgebraElement":
        return involution(self)

    def allclose(self, other: "AlgebraElement", atol: float = 1e-12) -> bool:
        return self.dim == other.dim and bool(np.allclose(self.entries, other.entries, rtol=0.0, atol=atol))

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the {"dim", "re", "im"} document format"""
        return {
            "dim": self.dim,
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AlgebraElement":
        """
        Parse the {"dim", "re", "im"} document format

        Args:
            data: Mapping with the side length and the real / imaginary tables

        Returns:
            The parsed element
        """
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros((dim, dim))), dtype=float)
        if re.shape != (dim, dim) or im.shape != (dim, dim):
            raise ValueError(f"Matrix tables do not match declared dim {dim}")
        return cls(re + 1j * im)

    def __repr__(self) -> str:
        return f"AlgebraElement(dim={self.dim}, entries={np.array2string(self.entries, precision=6)})"


@dataclass(frozen=True)
class PositivityReport:
    is_hermitian: bool
    min_eigenvalue: float
    is_positive: bool
    tolerance_used: float


def as_element(value: Union[AlgebraElement, np.ndarray, list]) -> AlgebraElement:
    if isinstance(value, AlgebraElement):
        return value
    return AlgebraElement(np.asarray(value))


def involution(a: AlgebraElement) -> AlgebraElement:
    """Conjugate transpose a*"""
    return AlgebraElement(a.entries.conj().T)


def hermitian_part(a: AlgebraElement) -> np.ndarray:
    return 0.5 * (a.entries + a.entries.conj().T)


def norm(a: AlgebraElement, mode: NormMode = NormMode.SPECTRAL) -> float:
    """
    Norm of an algebra element

    Args:
        a: Element to measure
        mode: SPECTRAL (largest singular value, the C*-norm) or FROBENIUS

    Returns:
        Nonnegative norm value
    """
    mode = NormMode(mode)
    if mode is NormMode.SPECTRAL:
        return float(np.linalg.norm(a.entries, ord=2))
    return float(np.linalg.norm(a.entries, ord="fro"))


def min_eigenvalue(a: AlgebraElement) -> float:
    """Smallest eigenvalue of the Hermitian part"""
    return float(scipy.linalg.eigvalsh(hermitian_part(a))[0])


def is_positive(a: AlgebraElement, tol: float = POSITIVITY_RTOL) -> PositivityReport:
    """
    Decide membership in the positive cone.

    The Hermitian check runs first; a non-Hermitian element is reported as not
    positive rather than raising.

    Args:
        a: Element to test
        tol: Relative tolerance, scaled by max(1, ||a||)

    Returns:
        PositivityReport with the Hermitian flag and minimum eigenvalue
    """
    if tol < 0:
        raise PreconditionViolation(f"Positivity tolerance must be nonnegative, got {tol}")
    tolerance_used = tol * max(1.0, norm(a))
    deviation = float(np.max(np.abs(a.entries - a.entries.conj().T)))
    hermitian = deviation <= tolerance_used
    lowest = min_eigenvalue(a)
    positive = hermitian and lowest >= -tolerance_used
    return PositivityReport(
        is_hermitian=hermitian,
        min_eigenvalue=lowest,
        is_positive=positive,
        tolerance_used=tolerance_used,
    )


def leq(
    a: AlgebraElement,
    b: AlgebraElement,
    mode: OrderMode = OrderMode.LOEWNER,
    tol: float = POSITIVITY_RTOL,
) -> bool:
    """
    Partial order a <= b

    Args:
        a: Left element
        b: Right element
        mode: LOEWNER (b - a positive) or ENTRYWISE (Re(a_ij - b_ij) <= tol, Im within tol)
        tol: Tolerance passed to the positivity test, or absolute tolerance for ENTRYWISE

    Returns:
        True when a precedes b
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"Cannot compare elements of dimension {a.dim} and {b.dim}")
    mode = OrderMode(mode)
    if mode is OrderMode.LOEWNER:
        return is_positive(b - a, tol).is_positive
    diff = a.entries - b.entries
    return bool(np.all(diff.real <= tol) and np.all(np.abs(diff.imag) <= tol))


def order_slack(a: AlgebraElement, b: AlgebraElement, mode: OrderMode = OrderMode.LOEWNER) -> float:
    """How far a <= b holds: min eigenvalue of b - a, or its smallest real entry"""
    mode = OrderMode(mode)
    gap = b - a
    if mode is OrderMode.LOEWNER:
        return min_eigenvalue(gap)
    return float(np.min(gap.entries.real))


def sqrt_positive(a: AlgebraElement, tol: float = POSITIVITY_RTOL) -> AlgebraElement:
    """
    Unique positive square root via Hermitian eigendecomposition

    Eigenvalues inside the tolerance band below zero, and rounding noise just
    above it, are clamped to zero so projections map to themselves.

    Args:
        a: Positive element
        tol: Positivity tolerance

    Returns:
        r with r positive and r r = a
    """
    report = is_positive(a, tol)
    if not report.is_positive:
        raise NotPositive(
            f"Square root needs a positive element (hermitian={report.is_hermitian}, "
            f"min eigenvalue={report.min_eigenvalue:.3e})"
        )
    eigenvalues, vectors = scipy.linalg.eigh(hermitian_part(a))
    floor = EIGEN_FLOOR * max(1.0, norm(a))
    roots = np.sqrt(np.where(eigenvalues > floor, eigenvalues, 0.0))
    root = AlgebraElement((vectors * roots) @ vectors.conj().T)

    defect = norm(root @ root - a)
    if defect > SQRT_EPS * max(1.0, norm(a)):
        logger.warning(f"Square root defect {defect:.3e} exceeds {SQRT_EPS:.0e} relative bound")
    return root


def resolvent_contraction(a: AlgebraElement, tol: float = POSITIVITY_RTOL) -> AlgebraElement:
    """
    t = a(1 - a)^-1 for a positive a with ||a|| < 1/2

    Args:
        a: Positive element of spectral norm below one half
        tol: Positivity tolerance

    Returns:
        t, which has spectral norm strictly below one
    """
    if not is_positive(a, tol).is_positive:
        raise PreconditionViolation("Resolvent contraction needs a positive element")
    size = norm(a)
    if size >= 0.5:
        raise PreconditionViolation(f"Resolvent contraction needs ||a|| < 1/2, got {size:.6g}")
    complement = np.eye(a.dim) - a.entries
    t = AlgebraElement(a.entries @ scipy.linalg.inv(complement))
    logger.debug(f"Resolvent contraction: ||a|| = {size:.6g}, ||t|| = {norm(t):.6g}")
    return t


def in_center(b: AlgebraElement, tol: float = CENTER_TOL) -> bool:
    """True iff b lies within tol of lambda * 1 with lambda = trace(b) / n"""
    lam = np.trace(b.entries) / b.dim
    deviation = np.max(np.abs(b.entries - lam * np.eye(b.dim)))
    return bool(deviation <= tol)


def element_from_config(value: Any, dim: Optional[int] = None) -> AlgebraElement:
    """
    Build an element from the config shorthands

    Accepts the full {"dim", "re", "im"} document, {"scalar": s} (needs dim),
    {"diag": [...]} or a plain nested list of entries.
    """
    if isinstance(value, (AlgebraElement, np.ndarray, list)):
        return as_element(value)
    if not isinstance(value, dict):
        raise ValueError(f"Cannot read a matrix from {value!r}")
    if "re" in value:
        return AlgebraElement.from_dict(value)
    if "diag" in value:
        return AlgebraElement.diag(value["diag"])
    if "scalar" in value:
        size = int(value.get("dim", dim or 0))
        if size < 1:
            raise ValueError("Scalar matrices need a dimension")
        return AlgebraElement.scalar(float(value["scalar"]), size)
    raise ValueError(f"Unrecognised matrix specification keys: {sorted(value)}")
