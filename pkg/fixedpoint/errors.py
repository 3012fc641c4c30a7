"""
Exception hierarchy for the fixed point toolkit.

Library code raises these; only the command line layer turns them into exit codes.
"""


class FixedPointError(Exception):
    """Base class for every error raised by the toolkit"""


class DimensionMismatch(FixedPointError):
    """Two algebra elements of different sizes were combined"""


class NotPositive(FixedPointError):
    """An operation that needs a positive element received something else"""


class PreconditionViolation(FixedPointError):
    """A documented precondition of an operation does not hold"""


class UnknownPoint(FixedPointError):
    """A point outside the universe of a b-metric space"""


class EmptySample(FixedPointError):
    pass


class AxiomViolation(FixedPointError):
    """A metric table failed the b-metric axioms"""


class PreimageFailure(FixedPointError):
    """The g-preimage selector could not invert a point (f(X) is not inside g(X))"""


class CertificateInvalid(FixedPointError):
    """A bound was requested from a certificate that did not pass"""


class DivergentParameters(FixedPointError):
    """Tail bound constants do not define a convergent series"""


class NoConvergence(FixedPointError):
    """Iteration hit max_iter without meeting the tolerance, or the orbit left the finite range"""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class OrbitNotInCgf(FixedPointError):
    """The seed's orbit is not pairwise connected in the symmetrized graph"""


class CertificateViolation(FixedPointError):
    """Two distinct, graph-connected points of coincidence under a contraction"""


class GateViolation(FixedPointError):
    """A solvability gate of an application problem is not met"""


class SingularSystem(FixedPointError):
    pass


class NonlinearKernel(FixedPointError):
    """The direct integral oracle only handles kernels affine in u"""


class ScenarioError(FixedPointError):
    """Malformed or unresolvable configuration"""
