"""
Tests for the Jungck iteration, the contraction certificates and their bounds
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import math

import numpy as np
import pytest

from fixedpoint.algebra import AlgebraElement, NormMode, OrderMode
from fixedpoint.bmetric import ScalarPowerMetric
from fixedpoint.engine import (
    CertificateFamily,
    CoincidenceResult,
    ContractionCertificate,
    MappingPair,
    apriori_step_bound,
    cauchy_tail_bound,
    certify_banach,
    certify_kannan,
    check_uniqueness,
    jungck_orbit,
    select_reporting_certificate,
    solve_coincidence,
    solve_fixed_point,
    solve_from_seeds,
)
from fixedpoint.errors import (
    CertificateInvalid,
    CertificateViolation,
    DivergentParameters,
    NoConvergence,
    OrbitNotInCgf,
    PreconditionViolation,
    PreimageFailure,
)
from fixedpoint.graph import CompleteFamily, DirectedGraph, ScaledUnitStepsFamily, ZeroToPowersFamily, sample_edges


def f_with_jump(x):
    return 1.0 if x == 1 / 3 else x / 3


@pytest.fixture
def example_3_2():
    space = ScalarPowerMetric(p=2.0, dim=2)
    graph = DirectedGraph(families=[ZeroToPowersFamily(base=3)], name="zero_to_powers")
    pair = MappingPair.affine_g(f_with_jump, slope=2.0, name="example_3_2")
    edges = sample_edges(graph, 32, 32, np.random.default_rng(0))
    B = AlgebraElement.diag([0.25, 0.25])
    certificate = certify_banach(pair, space, graph, B, edges)
    return space, graph, pair, edges, certificate


@pytest.fixture
def example_3_6():
    space = ScalarPowerMetric(p=2.0, dim=2, domain="nonnegative")
    graph = DirectedGraph(families=[ScaledUnitStepsFamily(base=3, z_min=2)], name="scaled_unit_steps")
    pair = MappingPair.affine_g(lambda x: 3 * x, slope=9.0, name="example_3_6")
    edges = sample_edges(graph, 32, 32, np.random.default_rng(0))
    return space, graph, pair, edges


def _manual_certificate(family, **constants):
    return ContractionCertificate(
        family=family,
        B=AlgebraElement.identity(1),
        constants=constants,
        edge_results=[],
        overall=True,
    )


def test_banach_certificate_for_the_jump_map(example_3_2):
    _, _, _, _, certificate = example_3_2
    assert certificate.overall
    assert certificate.family is CertificateFamily.BANACH
    assert certificate.constants["lambda"] == pytest.approx(0.25)
    assert not certificate.failed_edges

    # case n = 0: d(f0, f(1/2)) = 1/36 against B d(0, 1) B = 1/16
    first = certificate.edge_results[0]
    assert first.edge == (0.0, 1.0)
    assert first.slack == pytest.approx(1 / 16 - 1 / 36)


def test_banach_certificate_under_frobenius_and_entrywise(example_3_2):
    space, graph, pair, edges, _ = example_3_2
    certificate = certify_banach(
        pair, space, graph, AlgebraElement.diag([0.25, 0.25]), edges,
        norm_mode=NormMode.FROBENIUS, order_mode=OrderMode.ENTRYWISE,
    )
    assert certificate.overall
    assert certificate.constants["lambda"] == pytest.approx(math.sqrt(32) / 8)
    assert certificate.summary()["norm_mode"] == "frobenius"


def test_banach_certificate_without_contraction(example_3_2):
    space, graph, pair, edges, _ = example_3_2
    certificate = certify_banach(pair, space, graph, AlgebraElement.identity(2), edges)
    assert not certificate.overall
    assert certificate.constants["lambda"] == pytest.approx(4.0)
    with pytest.raises(CertificateInvalid):
        solve_coincidence(pair, space, graph, certificate, 0.0)
    with pytest.raises(CertificateInvalid):
        apriori_step_bound(certificate, AlgebraElement.identity(2), 1)


def test_orbit_from_one_sixth_follows_the_predicted_ratio(example_3_2):
    space, graph, pair, _, certificate = example_3_2
    result = solve_coincidence(pair, space, graph, certificate, 1 / 6, cgf_policy="advisory")

    assert not result.in_cgf
    assert abs(result.point_of_coincidence) < 1e-6
    assert result.weakly_compatible
    assert result.common_fixed_point is not None
    assert result.residual <= 1e-11

    trace = result.trace
    assert trace.converged
    assert trace.step_norms[0] == pytest.approx((1 / 3 - 1 / 18) ** 2)
    for n in range(4):
        assert trace.step_norms[n + 1] / trace.step_norms[n] == pytest.approx(1 / 36, rel=1e-9)
    assert len(trace.bound_values) == len(trace.step_norms)
    assert all(step <= bound * (1 + 1e-12) for step, bound in zip(trace.step_norms, trace.bound_values))


def test_orbit_outside_cgf_is_rejected_when_enforced(example_3_2):
    space, graph, pair, _, certificate = example_3_2
    with pytest.raises(OrbitNotInCgf):
        solve_coincidence(pair, space, graph, certificate, 1 / 6, cgf_policy="enforce")
    with pytest.raises(PreconditionViolation):
        solve_coincidence(pair, space, graph, certificate, 1 / 6, cgf_policy="sometimes")


def test_seed_zero_gives_the_common_fixed_point(example_3_2):
    space, graph, pair, _, certificate = example_3_2
    result = solve_coincidence(pair, space, graph, certificate, 0.0)
    assert result.in_cgf
    assert result.coincidence_point == 0.0
    assert result.point_of_coincidence == 0.0
    assert result.common_fixed_point == 0.0
    assert result.iterations == 1


def test_uniqueness_across_seeds(example_3_2):
    space, graph, pair, _, certificate = example_3_2
    results = solve_from_seeds(pair, space, graph, certificate, [0.0, 1 / 6, 1 / 486], cgf_policy="advisory")
    assert len(results) == 3
    assert all(result.uniqueness_checked for result in results)
    assert all(abs(result.point_of_coincidence) < 1e-6 for result in results)
    with pytest.raises(PreconditionViolation):
        solve_from_seeds(pair, space, graph, certificate, [])


def test_coincidence_without_weak_compatibility():
    space = ScalarPowerMetric(p=2.0, dim=2)
    graph = DirectedGraph(families=[ZeroToPowersFamily(base=3)])
    pair = MappingPair.affine_g(f_with_jump, slope=2.0, intercept=-5.0, name="remark_3_3")
    edges = sample_edges(graph, 16, 16, np.random.default_rng(0))
    certificate = certify_banach(pair, space, graph, AlgebraElement.diag([0.25, 0.25]), edges)
    assert certificate.overall

    result = solve_coincidence(pair, space, graph, certificate, 3.0)
    assert result.coincidence_point == pytest.approx(3.0)
    assert result.point_of_coincidence == pytest.approx(1.0)
    assert not result.weakly_compatible
    assert result.common_fixed_point is None


def test_kannan_certificate_is_tight_at_the_first_edge(example_3_6):
    space, graph, pair, edges = example_3_6
    certificate = certify_kannan(pair, space, graph, AlgebraElement.scalar(1 / 52, 2), edges)
    assert certificate.overall
    assert certificate.family is CertificateFamily.KANNAN
    tight = [r for r in certificate.edge_results if r.edge == (2.0, 3.0)]
    assert tight and all(abs(r.slack) < 1e-12 for r in tight)
    assert all(r.holds for r in certificate.edge_results)
    assert certificate.constants["norm_t"] == pytest.approx(1 / 51)
    assert certificate.t.allclose(AlgebraElement.scalar(1 / 51, 2))


def test_kannan_certificate_fails_with_a_smaller_constant(example_3_6):
    space, graph, pair, edges = example_3_6
    certificate = certify_kannan(pair, space, graph, AlgebraElement.scalar(1 / 53, 2), edges)
    assert not certificate.overall
    failed = {result.edge for result in certificate.failed_edges}
    assert (2.0, 3.0) in failed
    assert certificate.worst_slack < 0
    # 8 * 4 + 8 * 2 + 4 = 52 < 53 at z = 2, t = 0
    assert min(r.slack for r in certificate.edge_results if r.edge == (2.0, 3.0)) == pytest.approx(1 / 9 * (52 / 53 - 1))


def test_kannan_solve_and_bounds(example_3_6):
    space, graph, pair, edges = example_3_6
    certificate = certify_kannan(pair, space, graph, AlgebraElement.scalar(1 / 52, 2), edges)
    result = solve_coincidence(pair, space, graph, certificate, 0.0)
    assert result.common_fixed_point == 0.0
    assert result.weakly_compatible
    assert result.trace.bound_values == [0.0]


def test_kannan_preconditions(example_3_6):
    space, graph, pair, edges = example_3_6
    with pytest.raises(PreconditionViolation):
        certify_kannan(pair, space, graph, AlgebraElement.diag([0.01, 0.02]), edges)
    with pytest.raises(PreconditionViolation):
        certify_kannan(pair, space, graph, AlgebraElement.scalar(0.2, 2), edges)


def test_banach_tail_bound_closed_form():
    certificate = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.25, **{"lambda": 0.25})
    Q = AlgebraElement.identity(1)
    assert cauchy_tail_bound(certificate, Q, 3, 5) == pytest.approx(17 / 16384)
    assert apriori_step_bound(certificate, Q, 3) == pytest.approx(0.25 ** 6)
    with pytest.raises(PreconditionViolation):
        cauchy_tail_bound(certificate, Q, 5, 5)

    divergent = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.5, **{"lambda": 1.0})
    with pytest.raises(DivergentParameters):
        cauchy_tail_bound(divergent, Q, 0, 2)


def test_kannan_tail_bound_uses_the_lower_index():
    certificate = _manual_certificate(CertificateFamily.KANNAN, norm_A=4.0, norm_t=0.1)
    Q = AlgebraElement.scalar(2.0, 1)
    n, m = 1, 3
    expected = 4.0 ** 2 * 0.1 ** 2 * 2.0 / (4.0 - 0.1) + 4.0 * 0.1 * 2.0
    assert cauchy_tail_bound(certificate, Q, n, m) == pytest.approx(expected)
    assert apriori_step_bound(certificate, Q, 2) == pytest.approx(0.01 * 2.0)

    divergent = _manual_certificate(CertificateFamily.KANNAN, norm_A=1.0, norm_t=1.0)
    with pytest.raises(DivergentParameters):
        cauchy_tail_bound(divergent, Q, 0, 1)


def test_tail_bound_dominates_observed_distances():
    rng = np.random.default_rng(7)
    space = ScalarPowerMetric(p=2.0, dim=1)
    graph = DirectedGraph(families=[CompleteFamily(space.random_point)], name="complete")
    for _ in range(1000):
        c = float(rng.uniform(0.05, 0.45))
        pair = MappingPair.identity(lambda x, c=c: c * x)
        edges = sample_edges(graph, 0, 2, rng)
        certificate = certify_banach(pair, space, graph, AlgebraElement.scalar(c, 1), edges)
        assert certificate.overall

        trace = jungck_orbit(pair, space, float(rng.uniform(-10.0, 10.0)), 12)
        Q = space.eval_metric(trace.orbit[0], trace.orbit[1])
        n = int(rng.integers(0, 11))
        m = int(rng.integers(n + 1, 13))
        observed = space.eval_metric(trace.orbit[n], trace.orbit[m]).entries[0, 0].real
        assert observed <= cauchy_tail_bound(certificate, Q, n, m) * (1 + 1e-9) + 1e-300


def _tail_pairs(rng, length, count=10):
    pairs = []
    for _ in range(count):
        n = int(rng.integers(0, length - 1))
        pairs.append((n, int(rng.integers(n + 1, length))))
    return pairs


@pytest.mark.parametrize("x0", [1 / 6, 1 / 486])
def test_tail_bound_on_banach_example_orbits(example_3_2, x0):
    space, _, pair, _, certificate = example_3_2
    trace = jungck_orbit(pair, space, x0, 12)
    Q = space.eval_metric(trace.orbit[0], trace.orbit[1])
    for n, m in _tail_pairs(np.random.default_rng(11), len(trace.orbit)):
        observed = space.eval_metric(trace.orbit[n], trace.orbit[m])
        assert observed.entries[0, 0].real <= cauchy_tail_bound(certificate, Q, n, m) * (1 + 1e-9) + 1e-300


def test_tail_bound_on_kannan_example_orbit(example_3_6):
    space, graph, pair, edges = example_3_6
    certificate = certify_kannan(pair, space, graph, AlgebraElement.scalar(1 / 52, 2), edges)
    trace = jungck_orbit(pair, space, 0.0, 12)
    Q = space.eval_metric(trace.orbit[0], trace.orbit[1])
    for n, m in _tail_pairs(np.random.default_rng(13), len(trace.orbit)):
        bound = cauchy_tail_bound(certificate, Q, n, m)
        assert bound >= 0.0
        assert space.eval_metric(trace.orbit[n], trace.orbit[m]).entries[0, 0].real <= bound
        assert cauchy_tail_bound(certificate, AlgebraElement.scalar(36.0, 2), n, m) > 0.0


def test_jungck_orbit_shapes_and_preimage_failures():
    space = ScalarPowerMetric(p=1.0, dim=1)
    pair = MappingPair.affine_g(lambda x: x / 2, slope=1.0)
    trace = jungck_orbit(pair, space, 8.0, 3)
    assert trace.orbit == [8.0, 4.0, 2.0, 1.0]
    assert trace.step_norms == pytest.approx([4.0, 2.0, 1.0])

    with pytest.raises(PreconditionViolation):
        jungck_orbit(pair, space, 8.0, 0)
    with pytest.raises(PreconditionViolation):
        MappingPair.affine_g(lambda x: x, slope=0.0)

    broken = MappingPair(f=lambda x: x / 2, g=lambda x: x, g_preimage=lambda y: None)
    with pytest.raises(PreimageFailure):
        jungck_orbit(broken, space, 8.0, 2)


def test_no_convergence_is_reported():
    space = ScalarPowerMetric(p=2.0, dim=1)
    graph = DirectedGraph(families=[CompleteFamily()], name="complete")
    certificate = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.25, **{"lambda": 0.25})
    with pytest.raises(NoConvergence):
        solve_fixed_point(lambda x: x + 1.0, space, graph, certificate, 0.0, max_iter=50, horizon=10)


def test_diverging_orbit_raises_no_convergence_with_partial_trace():
    space = ScalarPowerMetric(p=2.0, dim=1)
    graph = DirectedGraph(families=[CompleteFamily()], name="complete")
    certificate = _manual_certificate(CertificateFamily.BANACH, norm_A=2.0, norm_B=0.1, **{"lambda": 0.02})
    with pytest.raises(NoConvergence, match="diverged") as caught:
        solve_fixed_point(lambda x: 3.0 * x, space, graph, certificate, 1.0, max_iter=1000)

    trace = caught.value.trace
    assert trace is not None
    assert trace.step_norms
    assert all(math.isfinite(step) for step in trace.step_norms)
    assert len(trace.orbit) == len(trace.step_norms) + 1
    assert trace.step_norms[1] / trace.step_norms[0] == pytest.approx(9.0)


def test_diverging_orbit_from_jungck_orbit_directly():
    space = ScalarPowerMetric(p=1.0, dim=1)
    pair = MappingPair.identity(lambda x: x * 1e200)
    with pytest.raises(NoConvergence) as caught:
        jungck_orbit(pair, space, 1.0, 10)
    assert caught.value.trace.orbit[0] == 1.0


def test_distinct_connected_points_contradict_the_certificate():
    space = ScalarPowerMetric(p=2.0, dim=1)
    graph = DirectedGraph(families=[CompleteFamily()], name="complete")
    certificate = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.25, **{"lambda": 0.25})
    results = [
        CoincidenceResult(coincidence_point=0.0, point_of_coincidence=0.0, weakly_compatible=True, common_fixed_point=0.0),
        CoincidenceResult(coincidence_point=1.0, point_of_coincidence=1.0, weakly_compatible=True, common_fixed_point=1.0),
    ]
    with pytest.raises(CertificateViolation):
        check_uniqueness(results, space, graph, certificate)


def test_common_fixed_points_withdrawn_without_weak_compatibility():
    space = ScalarPowerMetric(p=2.0, dim=1)
    graph = DirectedGraph(families=[CompleteFamily()], name="complete")
    certificate = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.25, **{"lambda": 0.25})
    results = [
        CoincidenceResult(coincidence_point=0.0, point_of_coincidence=0.0, weakly_compatible=True, common_fixed_point=0.0),
        CoincidenceResult(coincidence_point=2.0, point_of_coincidence=0.0, weakly_compatible=False),
    ]
    checked = check_uniqueness(results, space, graph, certificate)
    assert all(result.uniqueness_checked for result in checked)
    assert all(result.common_fixed_point is None for result in checked)
    assert results[0].common_fixed_point == 0.0


def test_reporting_certificate_prefers_banach():
    kannan = _manual_certificate(CertificateFamily.KANNAN, norm_A=4.0, norm_t=0.1)
    banach = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=0.25, **{"lambda": 0.25})
    assert select_reporting_certificate([kannan, banach]) is banach
    assert select_reporting_certificate([kannan]) is kannan

    failing = _manual_certificate(CertificateFamily.BANACH, norm_A=4.0, norm_B=1.0, **{"lambda": 4.0})
    failing.overall = False
    with pytest.raises(CertificateInvalid):
        select_reporting_certificate([failing])
