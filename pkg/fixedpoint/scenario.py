"""
Scenario files and the runner behind the command line

A scenario is a versioned JSON document (schema_version 1) describing a space,
a graph, a mapping pair with seeds and one or more certificates, or an
application problem. Unknown fields are rejected by the schema.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from fixedpoint.algebra import AlgebraElement, NormMode, OrderMode, element_from_config
from fixedpoint.applications import (
    IntegralProblem,
    SteinProblem,
    check_integral_conditions,
    integral_oracle,
    random_stein_problem,
    solve_integral_report,
    solve_stein_report,
    stein_certificate,
    stein_oracle,
)
from fixedpoint.bmetric import (
    AxiomReport,
    BMetricSpace,
    GridFunctionMetric,
    OperatorNormMetric,
    load_space,
    random_triples,
    same_point,
    verify_axioms,
)
from fixedpoint.engine import (
    CGF_POLICIES,
    CertificateFamily,
    CoincidenceResult,
    ContractionCertificate,
    MappingPair,
    certify_banach,
    certify_kannan,
    select_reporting_certificate,
    solve_from_seeds,
)
from fixedpoint.errors import FixedPointError, ScenarioError
from fixedpoint.export_manager import ReportExporter
from fixedpoint.graph import DirectedGraph, load_graph, sample_edges
from fixedpoint.logger import log_execution_time

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIO_KINDS = ("coincidence", "fixed_point", "stein", "integral")
BUNDLED_SCENARIOS = ("example_3_2", "remark_3_3", "example_3_6", "stein_demo", "integral_demo")
EXPECT_ATOL = 1e-6

_NUMBER = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+(\.\d+)?\s*(/\s*\d+\s*)?$"}]}

_MATRIX = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "re": {"type": "array"},
        "im": {"type": "array"},
        "diag": {"type": "array", "items": _NUMBER},
        "scalar": _NUMBER,
    },
}

_SPACE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["scalar_power", "grid_function", "operator_norm", "custom_table"]},
        "name": {"type": "string"},
        "p": {"type": "number", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "domain": {"enum": ["real", "nonnegative"]},
        "grid_size": {"type": "integer", "minimum": 1},
        "coefficient": _MATRIX,
        "weight": _MATRIX,
        "points": {"type": "array", "minItems": 1},
        "table": {"type": "array"},
    },
}

_GRAPH = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "family": {"enum": ["zero_to_powers", "scaled_unit_steps", "complete", "loops_only"]},
        "base": {"type": "number", "exclusiveMinimum": 1},
        "z_min": {"type": "number"},
        "vertices": {"type": "array"},
        "edges": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2}},
    },
}

_MAP = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": ["linear", "linear_with_jump", "constant", "identity", "affine"]},
        "slope": _NUMBER,
        "intercept": _NUMBER,
        "jump_at": _NUMBER,
        "jump_value": _NUMBER,
        "value": _NUMBER,
    },
}

_MAPPING = {
    "type": "object",
    "additionalProperties": False,
    "required": ["f", "seeds"],
    "properties": {
        "f": _MAP,
        "g": _MAP,
        "seeds": {"type": "array", "minItems": 1, "items": _NUMBER},
    },
}

_CERTIFICATE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "B"],
    "properties": {
        "family": {"enum": [family.value for family in CertificateFamily]},
        "B": _MATRIX,
        "norm_mode": {"enum": [mode.value for mode in NormMode]},
        "order_mode": {"enum": [mode.value for mode in OrderMode]},
        "family_samples": {"type": "integer", "minimum": 0},
        "random_samples": {"type": "integer", "minimum": 0},
    },
}

_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "cgf_policy": {"enum": list(CGF_POLICIES)},
    },
}

STEIN_PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"const": "stein"},
        "dim": {"type": "integer", "minimum": 1},
        "coefficients": {"type": "array", "items": _MATRIX},
        "Q": _MATRIX,
        "random": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "count"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "count": {"type": "integer", "minimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
            },
        },
    },
    "oneOf": [{"required": ["Q"]}, {"required": ["random"]}],
}

INTEGRAL_PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["m", "beta"],
    "properties": {
        "kind": {"const": "integral"},
        "lo": {"type": "number"},
        "hi": {"type": "number"},
        "m": {"type": "integer", "minimum": 1},
        "p": {"type": "number", "minimum": 1},
        "beta": {"type": "number"},
        "g": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]},
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["linear_phi", "custom"]},
                "phi": {"oneOf": [{"enum": ["ones", "product"]}, {"type": "array"}]},
                "scale": {"type": "number"},
                "offset": {"type": "number"},
                "nonlinearity": {"enum": ["identity", "sin", "tanh"]},
            },
        },
    },
}

_EXPECT = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "verify": {"type": "boolean"},
        "converged": {"type": "boolean"},
        "point_of_coincidence": {"type": "number"},
        "coincidence_point": {"type": "number"},
        "common_fixed_point": {"type": ["number", "null"]},
        "weakly_compatible": {"type": "boolean"},
        "max_iterations": {"type": "integer", "minimum": 1},
        "solution_constant": {"type": "number"},
        "solution_atol": {"type": "number", "exclusiveMinimum": 0},
        "oracle_delta_max": {"type": "number", "exclusiveMinimum": 0},
        "edge_slacks": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["edge", "slack"],
                "properties": {
                    "edge": {"type": "array", "minItems": 2, "maxItems": 2},
                    "slack": {"type": "number"},
                    "atol": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}

SCENARIO_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "kind"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "kind": {"enum": list(SCENARIO_KINDS)},
        "space": _SPACE,
        "graph": _GRAPH,
        "mapping": _MAPPING,
        "certificates": {"type": "array", "minItems": 1, "items": _CERTIFICATE},
        "solver": _SOLVER,
        "problem": {"type": "object"},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "format": {"enum": ["csv", "jsonl"]},
            },
        },
        "expect": _EXPECT,
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"enum": ["coincidence", "fixed_point"]}}},
            "then": {"required": ["space", "graph", "mapping", "certificates"]},
        },
        {
            "if": {"properties": {"kind": {"enum": ["stein", "integral"]}}},
            "then": {"required": ["problem"]},
        },
    ],
}


def parse_number(value: Any) -> float:
    """A JSON number or an exact fraction string such as "1/6" """
    if isinstance(value, str):
        try:
            return float(Fraction(value.replace(" ", "")))
        except (ValueError, ZeroDivisionError) as e:
            raise ScenarioError(f"Cannot read number {value!r}: {e}") from e
    return float(value)


def _validate(document: Dict[str, Any], schema: Dict[str, Any], label: str) -> None:
    try:
        jsonschema.validate(document, schema)
    except jsonschema.ValidationError as e:
        location = "/".join(str(part) for part in e.absolute_path) or "<root>"
        raise ScenarioError(f"{label} is invalid at {location}: {e.message}") from e


def _read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r') as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"File not found: {path}") from e
    except (json.JSONDecodeError, OSError) as e:
        raise ScenarioError(f"Could not read {path}: {e}") from e
    if not isinstance(document, dict):
        raise ScenarioError(f"{path} must contain a JSON object")
    return document


def _numeric_matrix(spec: Dict[str, Any]) -> Dict[str, Any]:
    """Resolve fraction strings in the diag / scalar matrix shorthands"""
    spec = dict(spec)
    if "diag" in spec:
        spec["diag"] = [parse_number(value) for value in spec["diag"]]
    if "scalar" in spec:
        spec["scalar"] = parse_number(spec["scalar"])
    return spec


def _numeric_point(value: Any) -> Any:
    if isinstance(value, (str, int, float)):
        return parse_number(value)
    return value


# ---------------------------------------------------------------------------
# Maps
# ---------------------------------------------------------------------------

def build_map(spec: Dict[str, Any]) -> Callable[[Any], Any]:
    """
    Scalar self-maps from the registry

    linear:           slope * x + intercept
    linear_with_jump: linear, except jump_value at x = jump_at
    constant:         value
    identity:         x
    """
    name = spec["name"]
    slope = parse_number(spec.get("slope", 1))
    intercept = parse_number(spec.get("intercept", 0))
    if name in ("linear", "affine"):
        return lambda x: slope * x + intercept
    if name == "linear_with_jump":
        if "jump_at" not in spec or "jump_value" not in spec:
            raise ScenarioError("linear_with_jump needs jump_at and jump_value")
        jump_at, jump_value = parse_number(spec["jump_at"]), parse_number(spec["jump_value"])
        return lambda x: jump_value if math.isclose(x, jump_at, rel_tol=0.0, abs_tol=1e-15) else slope * x + intercept
    if name == "constant":
        value = parse_number(spec.get("value", 0))
        return lambda x: value
    if name == "identity":
        return lambda x: x
    raise ScenarioError(f"Unknown map {name!r}")


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    kind: str
    document: Dict[str, Any]
    source: Optional[str] = None
    description: str = ""

    @property
    def solver(self) -> Dict[str, Any]:
        return self.document.get("solver", {})

    @property
    def expect(self) -> Dict[str, Any]:
        return self.document.get("expect", {})

    @property
    def seeds(self) -> List[float]:
        return [parse_number(seed) for seed in self.document["mapping"]["seeds"]]

    def build_space(self) -> BMetricSpace:
        config = dict(self.document["space"])
        for key in ("coefficient", "weight"):
            if key in config:
                config[key] = _numeric_matrix(config[key])
        return load_space(config, logger=logger)

    def build_graph(self, space: BMetricSpace) -> DirectedGraph:
        config = dict(self.document["graph"])
        # custom tables may use labels as points, everything else is numeric here
        if self.document["space"]["kind"] == "scalar_power":
            config["edges"] = [[_numeric_point(x), _numeric_point(y)] for x, y in config.get("edges", [])]
            config["vertices"] = [_numeric_point(v) for v in config.get("vertices", [])]
        else:
            config["edges"] = [tuple(edge) for edge in config.get("edges", [])]
        return load_graph(config, point_sampler=space.random_point, logger=logger)

    def build_pair(self) -> MappingPair:
        mapping = self.document["mapping"]
        f = build_map(mapping["f"])
        g_spec = mapping.get("g", {"name": "identity"})
        if self.kind == "fixed_point" or g_spec["name"] == "identity":
            return MappingPair.identity(f, name=self.name)
        if g_spec["name"] not in ("affine", "linear"):
            raise ScenarioError(f"g must be affine or identity, got {g_spec['name']!r}")
        try:
            return MappingPair.affine_g(
                f,
                slope=parse_number(g_spec.get("slope", 1)),
                intercept=parse_number(g_spec.get("intercept", 0)),
                name=self.name,
            )
        except FixedPointError as e:
            raise ScenarioError(str(e)) from e

    def build_stein_problem(self) -> SteinProblem:
        return load_stein_problem(self.document["problem"])

    def build_integral_problem(self) -> IntegralProblem:
        return load_integral_problem(self.document["problem"])


def load_stein_problem(document: Dict[str, Any]) -> SteinProblem:
    _validate(document, STEIN_PROBLEM_SCHEMA, "Stein problem")
    try:
        if "random" in document:
            spec = document["random"]
            rng = np.random.default_rng(spec.get("seed", 0))
            return random_stein_problem(rng, spec["dim"], spec["count"], beta=spec.get("beta", 0.45))
        dim = document.get("dim")
        resolved = dict(document)
        resolved["Q"] = element_from_config(_numeric_matrix(document["Q"]), dim).to_dict()
        resolved["coefficients"] = [
            element_from_config(_numeric_matrix(entry), dim).to_dict() for entry in document.get("coefficients", [])
        ]
        return SteinProblem.from_dict(resolved)
    except (KeyError, TypeError, ValueError, FixedPointError) as e:
        raise ScenarioError(f"Invalid Stein problem: {e}") from e


def load_integral_problem(document: Dict[str, Any]) -> IntegralProblem:
    _validate(document, INTEGRAL_PROBLEM_SCHEMA, "Integral problem")
    try:
        return IntegralProblem.from_dict(document)
    except (KeyError, TypeError, ValueError, FixedPointError) as e:
        raise ScenarioError(f"Invalid integral problem: {e}") from e


def load_problem(path: str) -> Any:
    """Problem file for the oracle command: Stein if it carries Q or random, else integral"""
    document = _read_json(path)
    document.pop("schema_version", None)
    if document.get("kind") == "stein" or "Q" in document or "random" in document:
        return load_stein_problem(document)
    return load_integral_problem(document)


def load_scenario(path: str) -> Scenario:
    """
    Read and validate a scenario file

    Raises:
        ScenarioError: unreadable file, malformed JSON or schema violation
    """
    document = _read_json(path)
    _validate(document, SCENARIO_SCHEMA, f"Scenario {path}")
    scenario = Scenario(
        name=document["name"],
        kind=document["kind"],
        document=document,
        source=path,
        description=document.get("description", ""),
    )
    logger.debug(f"Loaded scenario '{scenario.name}' ({scenario.kind}) from {path}")
    return scenario


def scenario_path(directory: str, name: str) -> str:
    return os.path.join(directory, f"{name}.json")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class RunSettings:
    tol: float = 1e-12
    max_iter: int = 1000
    horizon: int = 64
    seed: int = 0
    family_samples: int = 32
    random_samples: int = 32
    norm_mode: str = "spectral"
    order_mode: str = "loewner"
    cgf_policy: str = "enforce"

    @classmethod
    def resolve(cls, config: Any, scenario: Optional[Scenario] = None, overrides: Optional[Dict[str, Any]] = None) -> "RunSettings":
        """Config defaults, then the scenario's solver block, then explicit overrides"""
        values = {
            "tol": config.tol,
            "max_iter": config.max_iter,
            "horizon": config.horizon,
            "seed": config.seed,
            "family_samples": config.family_samples,
            "random_samples": config.random_samples,
            "norm_mode": config.norm_mode,
            "order_mode": config.order_mode,
        }
        if scenario is not None:
            values.update(scenario.solver)
        values.update({key: value for key, value in (overrides or {}).items() if value is not None and key in values})
        return cls(**values)


@dataclass
class VerifyOutcome:
    scenario: str
    passed: bool
    axioms: Optional[AxiomReport] = None
    certificates: List[ContractionCertificate] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SolveOutcome:
    scenario: str
    converged: bool
    results: List[CoincidenceResult] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    solution: Any = None


def to_jsonable(value: Any) -> Any:
    if isinstance(value, AlgebraElement):
        return value.to_dict()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, dict):
        return {key: to_jsonable(item) for key, item in value.items()}
    return value


class ScenarioRunner:
    """Runs verify / solve / expectation checks for scenarios"""

    def __init__(self, config: Any, exporter: Optional[ReportExporter] = None,
                 overrides: Optional[Dict[str, Any]] = None, logger: Optional[logging.Logger] = None):
        """
        Initialize the runner

        Args:
            config: Config instance supplying defaults
            exporter: Report writer (reports are skipped when None)
            overrides: Command line values that win over scenario and config
            logger: Optional logger instance
        """
        self.config = config
        self.exporter = exporter
        self.overrides = overrides or {}
        self.logger = logger or logging.getLogger(__name__)

    def settings_for(self, scenario: Scenario) -> RunSettings:
        return RunSettings.resolve(self.config, scenario, self.overrides)

    # -- certificates -------------------------------------------------------

    def build_certificates(self, scenario: Scenario, pair: MappingPair, space: BMetricSpace,
                           graph: DirectedGraph, settings: RunSettings) -> List[ContractionCertificate]:
        rng = np.random.default_rng(settings.seed)
        certificates = []
        for spec in scenario.document["certificates"]:
            try:
                B = element_from_config(_numeric_matrix(spec["B"]), space.algebra_dim)
            except (KeyError, ValueError) as e:
                raise ScenarioError(f"Invalid certificate matrix in {scenario.name}: {e}") from e
            edges = sample_edges(
                graph,
                spec.get("family_samples", settings.family_samples),
                spec.get("random_samples", settings.random_samples),
                rng,
            )
            certify = certify_banach if spec["family"] == CertificateFamily.BANACH.value else certify_kannan
            certificates.append(certify(
                pair, space, graph, B, edges,
                norm_mode=spec.get("norm_mode", settings.norm_mode),
                order_mode=spec.get("order_mode", settings.order_mode),
            ))
        return certificates

    def _axioms(self, space: BMetricSpace, settings: RunSettings) -> AxiomReport:
        rng = np.random.default_rng(settings.seed)
        return verify_axioms(space, random_triples(space, settings.family_samples + settings.random_samples, rng))

    # -- verify -------------------------------------------------------------

    @log_execution_time
    def verify(self, scenario: Scenario) -> VerifyOutcome:
        """Axioms plus certificates (or the application gates)"""
        settings = self.settings_for(scenario)
        self.logger.info(f"Verifying scenario '{scenario.name}' ({scenario.kind})")

        if scenario.kind == "stein":
            problem = scenario.build_stein_problem()
            space = OperatorNormMetric(problem.dim)
            axioms = self._axioms(space, settings)
            gate_ok = problem.beta < 0.5
            certificates = []
            if gate_ok:
                certificates = [stein_certificate(problem, np.random.default_rng(settings.seed),
                                                  samples=settings.random_samples).certificate]
            passed = axioms.all_ok and gate_ok and all(c.overall for c in certificates)
            details = {"beta": problem.beta, "advisory_gate": problem.advisory_gate}
            return self._verified(scenario, passed, axioms, certificates, details)

        if scenario.kind == "integral":
            problem = scenario.build_integral_problem()
            space = GridFunctionMetric(problem.m, p=problem.p)
            axioms = self._axioms(space, settings)
            conditions = check_integral_conditions(problem, np.random.default_rng(settings.seed))
            passed = axioms.all_ok and conditions.all_ok
            details = {
                "beta_ok": conditions.beta_ok,
                "phi_ok": conditions.phi_ok,
                "lipschitz_ok": conditions.lipschitz_ok,
                "phi_row_sup": conditions.phi_row_sup,
            }
            return self._verified(scenario, passed, axioms, [], details)

        space = scenario.build_space()
        graph = scenario.build_graph(space)
        pair = scenario.build_pair()
        axioms = self._axioms(space, settings)
        certificates = self.build_certificates(scenario, pair, space, graph, settings)
        passed = axioms.all_ok and all(c.overall for c in certificates)
        return self._verified(scenario, passed, axioms, certificates, {})

    def _verified(self, scenario: Scenario, passed: bool, axioms: AxiomReport,
                  certificates: List[ContractionCertificate], details: Dict[str, Any]) -> VerifyOutcome:
        outcome = VerifyOutcome(scenario.name, passed, axioms, certificates, details)
        if self.exporter is not None:
            self.exporter.export_summary(f"{scenario.name}_verify", {
                "scenario": scenario.name,
                "kind": scenario.kind,
                "passed": passed,
                "axioms": {
                    "checked_pairs": axioms.checked_pairs,
                    "symmetry_ok": axioms.symmetry_ok,
                    "identity_ok": axioms.identity_ok,
                    "triangle_ok": axioms.triangle_ok,
                    "worst_triangle_slack": axioms.worst_triangle_slack,
                },
                "certificates": [c.summary() for c in certificates],
                "details": details,
            })
        level = logging.INFO if passed else logging.WARNING
        self.logger.log(level, f"Scenario '{scenario.name}' verification {'passed' if passed else 'FAILED'}")
        return outcome

    # -- solve --------------------------------------------------------------

    @log_execution_time
    def solve(self, scenario: Scenario) -> SolveOutcome:
        """Run the solver for the scenario and write trace and summary reports"""
        settings = self.settings_for(scenario)
        self.logger.info(f"Solving scenario '{scenario.name}' ({scenario.kind})")
        if scenario.kind == "stein":
            return self._solve_stein(scenario, settings)
        if scenario.kind == "integral":
            return self._solve_integral(scenario, settings)
        return self._solve_coincidence(scenario, settings)

    def _solve_coincidence(self, scenario: Scenario, settings: RunSettings) -> SolveOutcome:
        space = scenario.build_space()
        graph = scenario.build_graph(space)
        pair = scenario.build_pair()
        certificates = self.build_certificates(scenario, pair, space, graph, settings)
        certificate = select_reporting_certificate(certificates)

        results = solve_from_seeds(
            pair, space, graph, certificate, scenario.seeds,
            tol=settings.tol, max_iter=settings.max_iter, horizon=settings.horizon,
            cgf_policy=settings.cgf_policy,
        )

        files = []
        seeds_summary = []
        for index, result in enumerate(results):
            trace = result.trace
            if self.exporter is not None:
                files.append(self.exporter.export_trace(scenario.name, index, trace.step_norms, trace.bound_values))
            seeds_summary.append({
                "seed": result.seed,
                "iterations": result.iterations,
                "converged": trace.converged,
                "limit": to_jsonable(trace.limit),
                "residual": result.residual,
                "coincidence_point": to_jsonable(result.coincidence_point),
                "point_of_coincidence": to_jsonable(result.point_of_coincidence),
                "weakly_compatible": result.weakly_compatible,
                "common_fixed_point": to_jsonable(result.common_fixed_point),
                "in_cgf": result.in_cgf,
                "uniqueness_checked": result.uniqueness_checked,
                "bound_curve": trace.bound_values,
                "observed_curve": trace.step_norms,
            })
        summary = {
            "scenario": scenario.name,
            "kind": scenario.kind,
            "certificate": certificate.summary(),
            "seeds": seeds_summary,
        }
        return self._solved(scenario, all(r.trace.converged for r in results), results, summary, files, None)

    def _solve_stein(self, scenario: Scenario, settings: RunSettings) -> SolveOutcome:
        problem = scenario.build_stein_problem()
        certified = stein_certificate(problem, np.random.default_rng(settings.seed), samples=settings.random_samples)
        report = solve_stein_report(problem, tol=settings.tol, max_iter=settings.max_iter,
                                    certified=certified, with_oracle=True)
        files = []
        if self.exporter is not None:
            files.append(self.exporter.export_trace(scenario.name, 0, report.metric_steps, report.bound_curve))
        summary = {
            "scenario": scenario.name,
            "kind": scenario.kind,
            "certificate": certified.certificate.summary(),
            "beta": problem.beta,
            "advisory_gate": problem.advisory_gate,
            "iterations": report.iterations,
            "converged": True,
            "residual": report.residual,
            "relative_residual": report.relative_residual,
            "oracle_delta": report.oracle_delta,
            "hermitian": report.hermitian,
            "positive": report.positive,
            "max_contraction_factor": max(report.contraction_factors, default=0.0),
            "bound_curve": report.bound_curve,
            "observed_curve": report.metric_steps,
        }
        return self._solved(scenario, True, [], summary, files, report.solution)

    def _solve_integral(self, scenario: Scenario, settings: RunSettings) -> SolveOutcome:
        problem = scenario.build_integral_problem()
        report = solve_integral_report(
            problem, tol=settings.tol, max_iter=settings.max_iter,
            rng=np.random.default_rng(settings.seed),
            axiom_samples=settings.random_samples,
            with_oracle=problem.kernel.is_affine,
        )
        files = []
        if self.exporter is not None:
            files.append(self.exporter.export_trace(scenario.name, 0, report.metric_steps, report.bound_curve))
        summary = {
            "scenario": scenario.name,
            "kind": scenario.kind,
            "beta": problem.beta,
            "p": problem.p,
            "iterations": report.iterations,
            "converged": True,
            "residual": report.residual,
            "relative_residual": report.relative_residual,
            "oracle_delta": report.oracle_delta,
            "axioms_ok": report.axioms_ok,
            "max_contraction_factor": max(report.contraction_factors, default=0.0),
            "solution": report.solution.tolist(),
            "bound_curve": report.bound_curve,
            "observed_curve": report.metric_steps,
        }
        return self._solved(scenario, True, [], summary, files, report.solution)

    def _solved(self, scenario: Scenario, converged: bool, results: List[CoincidenceResult],
                summary: Dict[str, Any], files: List[str], solution: Any) -> SolveOutcome:
        if self.exporter is not None:
            files.append(self.exporter.export_summary(scenario.name, to_jsonable(summary)))
        self.logger.info(f"Scenario '{scenario.name}' solved: converged={converged}, reports={len(files)}")
        return SolveOutcome(scenario.name, converged, results, summary, files, solution)

    # -- oracle -------------------------------------------------------------

    def oracle(self, problem: Any, name: str = "oracle") -> Dict[str, Any]:
        """Iterative solve against the direct solver for a problem file"""
        settings = RunSettings.resolve(self.config, None, self.overrides)
        if isinstance(problem, SteinProblem):
            report = solve_stein_report(problem, tol=settings.tol, max_iter=settings.max_iter)
            direct = stein_oracle(problem)
            delta = float(np.max(np.abs(direct.entries - report.solution.entries)))
            summary = {"problem": "stein", "dim": problem.dim, "beta": problem.beta,
                       "iterations": report.iterations, "oracle_delta": delta}
        else:
            report = solve_integral_report(problem, tol=settings.tol, max_iter=settings.max_iter,
                                           rng=np.random.default_rng(settings.seed))
            direct = integral_oracle(problem)
            delta = float(np.max(np.abs(direct - report.solution)))
            summary = {"problem": "integral", "m": problem.m, "beta": problem.beta,
                       "iterations": report.iterations, "oracle_delta": delta}
        if self.exporter is not None:
            self.exporter.export_summary(name, summary)
        self.logger.info(f"Oracle comparison for {name}: max-abs difference {delta:.3e}")
        return summary

    # -- expectations -------------------------------------------------------

    def check_expectations(self, scenario: Scenario, verified: VerifyOutcome,
                           solved: Optional[SolveOutcome]) -> List[str]:
        """Compare outcomes with the scenario's expect block; returns failure messages"""
        expect = scenario.expect
        failures: List[str] = []

        if verified.passed != expect.get("verify", True):
            failures.append(f"verify passed={verified.passed}, expected {expect.get('verify', True)}")

        for item in expect.get("edge_slacks", []):
            edge = tuple(parse_number(v) for v in item["edge"])
            atol = item.get("atol", 1e-12)
            matches = [
                r for c in verified.certificates for r in c.edge_results
                if same_point(r.edge[0], edge[0], 1e-12) and same_point(r.edge[1], edge[1], 1e-12)
            ]
            if not matches:
                failures.append(f"edge {edge} was not sampled")
            elif any(abs(r.slack - item["slack"]) > atol for r in matches):
                failures.append(f"edge {edge} slack {matches[0].slack:.3e}, expected {item['slack']}")

        if solved is None:
            return failures

        if "converged" in expect and solved.converged != expect["converged"]:
            failures.append(f"converged={solved.converged}, expected {expect['converged']}")

        for result in solved.results:
            label = f"seed {result.seed!r}"
            for key in ("point_of_coincidence", "coincidence_point"):
                if key in expect and not _close(getattr(result, key), expect[key]):
                    failures.append(f"{label}: {key}={getattr(result, key)!r}, expected {expect[key]}")
            if "weakly_compatible" in expect and result.weakly_compatible != expect["weakly_compatible"]:
                failures.append(f"{label}: weakly_compatible={result.weakly_compatible}")
            if "common_fixed_point" in expect:
                wanted = expect["common_fixed_point"]
                found = result.common_fixed_point
                if (wanted is None) != (found is None) or (wanted is not None and not _close(found, wanted)):
                    failures.append(f"{label}: common_fixed_point={found!r}, expected {wanted}")
            if "max_iterations" in expect and result.iterations > expect["max_iterations"]:
                failures.append(f"{label}: {result.iterations} iterations, expected at most {expect['max_iterations']}")

        if "solution_constant" in expect:
            atol = expect.get("solution_atol", 1e-10)
            target = expect["solution_constant"]
            solution = solved.solution
            if isinstance(solution, AlgebraElement):
                deviation = float(np.max(np.abs(solution.entries - target * np.eye(solution.dim))))
            else:
                deviation = float(np.max(np.abs(np.asarray(solution) - target)))
            if deviation > atol:
                failures.append(f"solution deviates from {target} by {deviation:.3e}")

        if "oracle_delta_max" in expect:
            delta = solved.summary.get("oracle_delta")
            if delta is None or delta > expect["oracle_delta_max"]:
                failures.append(f"oracle delta {delta}, expected below {expect['oracle_delta_max']}")

        return failures


def _close(value: Any, target: float, atol: float = EXPECT_ATOL) -> bool:
    try:
        return abs(float(value) - float(target)) <= atol
    except (TypeError, ValueError):
        return False
