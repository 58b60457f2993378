# fieldtheory/services/scenarios.py
"""
Named experiments behind `manage.py run_scenario`.

Every scenario takes a validated run config (see RunConfigSerializer) and
returns a ScenarioResult; `run` writes the artifacts. Randomness is drawn
only from generators seeded by config["seed"].
"""
import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework import serializers

from fieldtheory.serializers import RunConfigSerializer
from fieldtheory.services.algebra import algebra_residuals, build_algebra
from fieldtheory.services.dynamics import (
    PalatiniBoundarySystem,
    YangMillsBoundarySystem,
    action_ym,
    boundary_hamiltonian,
    evolution_rhs,
    evolve,
    fundamental_check,
    lambda_limit_residuals,
    ym_boundary_hamiltonian,
    ym_evolution_rhs,
)
from fieldtheory.services.fields import (
    field_shapes,
    flat_vacuum,
    random_bulk_field,
    random_state,
    zero_state,
)
from fieldtheory.services.mesh import build_mesh, d_a, d_a_star, pairing
from fieldtheory.services.pca import (
    CATALOGUE,
    first_level_values,
    flat_vacuum_bulk,
    lagrange_criticality_check,
    lagrange_surrogate_check,
    palatini_gradient,
    pca_run,
    project_constraints,
    residual_norms,
)
from fieldtheory.services.reduction import (
    GaugeElement,
    action_gauge_defect,
    coisotropy_check,
    gauge_defect_order,
    gauss_operator,
    gauss_projection,
    gauss_constraint_system,
    hamiltonian_action_check,
    isotropy_check,
    moment_map,
)
from fieldtheory.services.telemetry import emit_plotdata, write_summary, write_telemetry

logger = logging.getLogger(__name__)

# catalogued model -> (levels, final kernel dimension)
CATALOGUE_ORACLES = {
    "free-particle": (0, 0),
    "regular": (1, 0),
    "two-level": (2, 3),
}


@dataclass
class Check:
    value: float
    tol: float
    passed: bool

    def as_dict(self) -> dict:
        return {"value": float(self.value), "tol": float(self.tol), "passed": bool(self.passed)}


@dataclass
class ScenarioResult:
    name: str
    checks: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    report: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())


def _below(value, tol) -> Check:
    value = float(value)
    return Check(value, float(tol), bool(value < tol))


def _exact(found, expected) -> Check:
    gap = abs(int(found) - int(expected))
    return Check(float(gap), 0.0, gap == 0)


def _relative(lhs, rhs) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def _algebra(config):
    return build_algebra(config["algebra"]["kind"], config["algebra"]["dim"])


def _mesh(config):
    m = config["mesh"]
    return build_mesh(m["sites"], m["length"], n_t=m["n_t"], dt=m["dt"])


def _dt(config, mesh) -> float:
    return config["run"]["dt"] or mesh.dt


# ------------------------------------------------------------------
# Config
# ------------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def build_run_config(scenario: str, file_data: dict = None, overrides: dict = None) -> dict:
    """
    settings.FIELDLAB defaults < config file < command-line overrides,
    validated by RunConfigSerializer. Raises serializers.ValidationError.
    """
    lab = settings.FIELDLAB
    defaults = _merge(
        {"algebra": {}, "mesh": {}, "run": {}, "dynamics": {}, "tolerances": {}},
        lab["scenarios"].get(scenario, {}),
    )
    defaults["tolerances"] = _merge(lab["tolerances"], defaults["tolerances"])
    defaults["seed"] = lab["default_seed"]
    data = _merge(defaults, file_data or {})
    data = _merge(data, overrides or {})
    if (file_data or {}).get("scenario", scenario) != scenario:
        raise serializers.ValidationError({"scenario": ["Config file names a different scenario."]})
    data["scenario"] = scenario
    ser = RunConfigSerializer(data=data)
    ser.is_valid(raise_exception=True)
    return json.loads(json.dumps(ser.validated_data))


# ------------------------------------------------------------------
# Evolution scenarios
# ------------------------------------------------------------------

def _energy_drift(records) -> float:
    h0 = records[0].hamiltonian
    drift = max(abs(r.hamiltonian - h0) for r in records)
    return drift / max(abs(h0), 1e-300) if h0 else drift


def ym_evolve(config) -> ScenarioResult:
    """Yang-Mills boundary flow from a seeded random state; energy must be conserved."""
    spec, mesh = _algebra(config), _mesh(config)
    lam = config["dynamics"]["coupling"]
    state = random_state(config["seed"], mesh, spec, config["dynamics"]["amplitude"])
    records = evolve(state, config["run"]["steps"], _dt(config, mesh), system=YangMillsBoundarySystem(lam))
    tol = config["tolerances"]
    result = ScenarioResult("ym-evolve", records=records)
    result.checks["energy_drift"] = _below(_energy_drift(records), tol["energy_drift"])
    result.report += [
        f"coupling: {lam:g}",
        f"H(start) = {records[0].hamiltonian:.12e}",
        f"H(end)   = {records[-1].hamiltonian:.12e}",
        f"gauss residual (end): {records[-1].constraint_residuals['gauss']:.3e}",
    ]
    return result


def palatini_evolve(config) -> ScenarioResult:
    """
    Palatini boundary flow from the flat vacuum. A nonzero amplitude perturbs
    the vacuum first and projects the perturbed state back onto the six
    constraints.
    """
    spec, mesh = _algebra(config), _mesh(config)
    tol = config["tolerances"]
    amplitude = config["dynamics"]["amplitude"]
    result = ScenarioResult("palatini-evolve")

    vacuum = flat_vacuum(mesh, spec)
    result.checks["vacuum_residual"] = _below(max(residual_norms(vacuum).values()), tol["residual"])
    start = vacuum
    if amplitude > 0:
        rng = np.random.default_rng(config["seed"])
        kicked = vacuum.with_vector(vacuum.to_vector() + amplitude * rng.standard_normal(vacuum.size))
        start = project_constraints(kicked, tol=tol["residual"])
        result.checks["projected_residual"] = _below(max(residual_norms(start).values()), tol["residual"])

    records = evolve(start, config["run"]["steps"], _dt(config, mesh), projection=config["run"]["projection"],
                     system=PalatiniBoundarySystem())
    result.records = records
    worst = max(max(r.constraint_residuals.values()) for r in records)
    result.checks["max_residual"] = _below(worst, tol["residual"])
    if amplitude > 0:
        result.checks["energy_drift"] = _below(_energy_drift(records), tol["energy_drift"])
    else:
        x0 = start.to_vector()
        drift = max(float(np.max(np.abs(r.state.to_vector() - x0))) for r in records)
        result.checks["state_drift"] = _below(drift, tol["residual"])
    result.report += [
        f"amplitude: {amplitude:g}",
        f"projection: {config['run']['projection']}",
        f"max residual over {len(records)} records: {worst:.3e}",
    ]
    return result


def lambda_sweep(config) -> ScenarioResult:
    """
    Yang-Mills flows at decreasing coupling from one Gauss-satisfying start;
    curvature and Gauss residuals must vanish linearly in lambda.
    """
    spec, mesh = _algebra(config), _mesh(config)
    tol = config["tolerances"]
    amplitude = config["dynamics"]["amplitude"]
    lambdas = sorted(config["dynamics"]["lambdas"], reverse=True)
    rng = np.random.default_rng(config["seed"])
    shapes = field_shapes(mesh, spec)
    base = zero_state(mesh, spec)
    beta = rng.standard_normal(shapes["beta"])
    p = gauss_projection(mesh, spec, base.a, amplitude * rng.standard_normal(shapes["p"]))
    start = base.replace(p=p, beta=0.5 * amplitude * (beta - np.swapaxes(beta, -2, -3)))

    dt = _dt(config, mesh)
    flat, gauss = [], []
    result = ScenarioResult("lambda-sweep")
    for lam in lambdas:
        end = evolve(start, config["run"]["steps"], dt, system=YangMillsBoundarySystem(lam))[-1].state
        res = lambda_limit_residuals(end, lam)
        flat.append(res["flatness"])
        gauss.append(res["gauss"])
        result.report.append(f"lambda {lam:g}: flatness {res['flatness']:.6e}, gauss {res['gauss']:.6e}")

    log_lam = np.log(lambdas)
    for name, values in (("flatness", flat), ("gauss", gauss)):
        if min(values) <= 0:
            result.checks[f"{name}_slope"] = Check(float("nan"), tol["slope"], False)
            continue
        slope = float(np.polyfit(log_lam, np.log(values), 1)[0])
        result.checks[f"{name}_slope"] = _below(abs(slope - 1.0), tol["slope"])
        result.report.append(f"{name} slope: {slope:.4f}")
        monotone = all(b < a for a, b in zip(values, values[1:]))
        result.checks[f"{name}_monotone"] = Check(float(not monotone), 0.0, monotone)
    return result


# ------------------------------------------------------------------
# Structural checks
# ------------------------------------------------------------------

def _directional(fn, state, field_name, direction, step) -> float:
    value = getattr(state, field_name)
    hi = fn(state.replace(**{field_name: value + step * direction}))
    lo = fn(state.replace(**{field_name: value - step * direction}))
    return (hi - lo) / (2 * step)


def _hamilton_gaps(state, hamiltonian, rhs, rng, step) -> list:
    """dH along (da, 0) against <p_dot, da> and along (0, dp) against -<a_dot, dp>."""
    mesh, spec = state.mesh, state.spec
    a_dot, p_dot = rhs(state)
    da = rng.standard_normal(state.a.shape)
    dp = rng.standard_normal(state.p.shape)
    return [
        _relative(_directional(hamiltonian, state, "a", da, step), pairing(mesh, spec, p_dot, da)),
        _relative(_directional(hamiltonian, state, "p", dp, step), -pairing(mesh, spec, a_dot, dp)),
    ]


def _moment_map_gap(mesh, spec, a, p, xi) -> float:
    return _relative(pairing(mesh, spec, moment_map(mesh, spec, a, p), xi), pairing(mesh, spec, p, d_a(mesh, spec, a, xi)))


def check_invariants(config) -> ScenarioResult:
    spec, mesh = _algebra(config), _mesh(config)
    tol = config["tolerances"]
    seed, samples = config["seed"], config["run"]["samples"]
    amplitude = config["dynamics"]["amplitude"]
    lam = config["dynamics"]["coupling"]
    rng = np.random.default_rng(seed)
    shapes = field_shapes(mesh, spec)
    result = ScenarioResult("check-invariants")

    result.checks["algebra"] = _below(max(algebra_residuals(spec).values()), tol["identity"])

    adjoint_gaps, moment_gaps = [], []
    for _ in range(samples):
        a = rng.standard_normal(shapes["a"])
        p = rng.standard_normal(shapes["p"])
        xi = rng.standard_normal(shapes["a0"])
        adjoint_gaps.append(_relative(pairing(mesh, spec, p, d_a(mesh, spec, a, xi)),
                                      -pairing(mesh, spec, d_a_star(mesh, spec, a, p), xi)))
        moment_gaps.append(_moment_map_gap(mesh, spec, a, p, xi))
    result.checks["adjointness"] = _below(max(adjoint_gaps), tol["identity"])
    result.checks["moment_map"] = _below(max(moment_gaps), tol["identity"])

    fundamental = []
    for i in range(samples):
        chi = random_bulk_field(seed + 2 * i, mesh, spec)
        U = random_bulk_field(seed + 2 * i + 1, mesh, spec)
        fundamental.append(fundamental_check(mesh, spec, chi, U, lam).relative_gap)
    result.checks["fundamental_formula"] = _below(max(fundamental), tol["variational"])

    so = build_algebra("so", mesh.d)
    ym_gaps, palatini_gaps = [], []
    for i in range(samples):
        state = random_state(seed + i, mesh, spec, amplitude)
        ym_gaps += _hamilton_gaps(
            state, lambda s: ym_boundary_hamiltonian(s, lam), lambda s: ym_evolution_rhs(s, lam), rng, 1e-5,
        )
        grav = random_state(seed + i, mesh, so, amplitude)
        palatini_gaps += _hamilton_gaps(grav, boundary_hamiltonian, evolution_rhs, rng, 1e-5)
        v = rng.standard_normal(grav.size)
        fd = (boundary_hamiltonian(grav.with_vector(grav.to_vector() + 1e-5 * v))
              - boundary_hamiltonian(grav.with_vector(grav.to_vector() - 1e-5 * v))) / 2e-5
        palatini_gaps.append(_relative(fd, float(palatini_gradient(grav) @ v)))
    result.checks["ym_variational"] = _below(max(ym_gaps), tol["variational"])
    result.checks["palatini_variational"] = _below(max(palatini_gaps), tol["variational"])

    result.report += [
        f"algebra: {spec!r}",
        f"samples: {samples}",
        f"max fundamental-formula gap: {max(fundamental):.3e}",
    ]
    return result


def pca_analyze(config) -> ScenarioResult:
    """Catalogued presymplectic models, Palatini first-level values and Lagrange criticality."""
    tol = config["tolerances"]
    rng = np.random.default_rng(config["seed"])
    result = ScenarioResult("pca-analyze")

    for name, factory in CATALOGUE.items():
        system = factory()
        expected_levels, expected_kernel = CATALOGUE_ORACLES[name]
        outcome = pca_run(system, 0.5 * rng.standard_normal(system.n))
        result.checks[f"{name}_levels"] = _exact(outcome.level_count, expected_levels)
        result.checks[f"{name}_kernel"] = _exact(outcome.final_kernel_dim, expected_kernel)
        result.checks[f"{name}_stabilized"] = Check(float(not outcome.stabilized), 0.0, outcome.stabilized)
        result.report.append(f"[{name}]")
        result.report += outcome.report_lines()

    spec, mesh = _algebra(config), _mesh(config)
    values = first_level_values(flat_vacuum(mesh, spec))
    result.checks["vacuum_first_level"] = _below(np.max(np.abs(values), initial=0.0), tol["residual"])

    surrogate = lagrange_surrogate_check(tol=tol["lagrange"])
    result.checks["lagrange_surrogate"] = _below(max(surrogate.block_norms.values()), tol["lagrange"])
    vacuum = lagrange_criticality_check(mesh, spec, *flat_vacuum_bulk(mesh, spec), tol=tol["lagrange"])
    result.checks["lagrange_vacuum"] = _below(max(vacuum.block_norms.values()), tol["lagrange"])
    result.checks["multiplier_identity"] = _below(vacuum.multiplier_identity, tol["identity"])
    result.report.append("[lagrange: flat vacuum]")
    result.report += vacuum.report_lines()
    return result


def _symplectic_control(size: int):
    """Zero set of one conjugate pair (a_0, p_0): a symplectic, hence not coisotropic, subspace."""
    half = size // 2
    rows = np.zeros((2, size))
    rows[0, 0] = rows[1, half] = 1.0
    return (lambda x: rows @ x), rows


def reduction_report(config) -> ScenarioResult:
    spec, mesh = _algebra(config), _mesh(config)
    tol = config["tolerances"]
    seed = config["seed"]
    rng = np.random.default_rng(seed)
    shapes = field_shapes(mesh, spec)
    result = ScenarioResult("reduction-report")

    a = config["dynamics"]["amplitude"] * rng.standard_normal(shapes["a"])
    p = rng.standard_normal(shapes["p"])
    xi = rng.standard_normal(shapes["a0"])
    result.checks["moment_map"] = _below(_moment_map_gap(mesh, spec, a, p, xi), tol["identity"])
    action = hamiltonian_action_check(mesh, spec, a, p, xi, seed=seed)
    result.checks["hamiltonian_action"] = _below(action.max_relative_gap, tol["variational"])

    abelian = build_algebra("abelian", 1)
    line = build_mesh([8], config["mesh"]["length"], n_t=config["mesh"]["n_t"])
    a_line = np.zeros(field_shapes(line, abelian)["a"])
    p_line = gauss_projection(line, abelian, a_line, rng.standard_normal(a_line.shape))
    constraints, omega, point = gauss_constraint_system(line, abelian, a_line, p_line)
    D = gauss_operator(line, abelian, a_line)
    gauss_report = coisotropy_check(constraints, omega, point, jacobian=np.hstack([np.zeros_like(D), D]))
    result.checks["gauss_coisotropic"] = Check(gauss_report.max_angle, 0.0, gauss_report.coisotropic)
    control_fn, control_jac = _symplectic_control(point.size)
    control = coisotropy_check(control_fn, omega, np.zeros_like(point), jacobian=control_jac)
    result.checks["control_rejected"] = Check(control.max_angle, 0.0, not control.coisotropic)
    result.report.append("[coisotropy: Gauss law, abelian, 8 sites]")
    result.report += gauss_report.report_lines()
    result.report.append("[coisotropy: planted symplectic control]")
    result.report += control.report_lines()

    iso = isotropy_check(line, abelian, n_samples=config["run"]["samples"], seed=seed)
    result.checks["isotropy"] = _below(iso.max_omega, tol["isotropy"])
    result.report.append(f"isotropy: max |omega| {iso.max_omega:.3e} (before gauge quotient {iso.raw_max_omega:.3e})")

    lam = config["dynamics"]["coupling"]
    chi = random_bulk_field(seed, mesh, spec)
    g = GaugeElement.constant(mesh, spec, rng.standard_normal(spec.dim))
    scale = max(abs(action_ym(mesh, spec, chi.A, chi.P, lam).total), 1e-300)
    result.checks["constant_gauge"] = _below(action_gauge_defect(mesh, spec, chi, g, lam) / scale, tol["gauge"])

    study = gauge_defect_order()
    result.checks["gauge_order"] = _below(abs(study.order - 2.0), tol["order"])
    result.report.append(
        "gauge defect: " + ", ".join(f"{n} sites {v:.3e}" for n, v in zip(study.sites, study.defects))
        + f"; fitted order {study.order:.3f}"
    )
    return result


SCENARIOS = {
    "ym-evolve": ym_evolve,
    "palatini-evolve": palatini_evolve,
    "pca-analyze": pca_analyze,
    "check-invariants": check_invariants,
    "lambda-sweep": lambda_sweep,
    "reduction-report": reduction_report,
}

EVOLUTION_SCENARIOS = ("ym-evolve", "palatini-evolve")


def summary_lines(config, result: ScenarioResult) -> list:
    shown = {k: v for k, v in config.items() if k != "out"}
    lines = [
        f"scenario: {result.name}",
        f"seed: {config['seed']}",
        "config: " + json.dumps(shown, sort_keys=True),
        "",
        "checks:",
    ]
    for name, check in result.checks.items():
        status = "PASS" if check.passed else "FAIL"
        lines.append(f"  {name}: {check.value:.6e} (tol {check.tol:.1e}) {status}")
    if result.report:
        lines += ["", "report:"] + [f"  {line}" for line in result.report]
    lines += ["", "result: " + ("PASSED" if result.passed else "FAILED")]
    return lines


def run(config, out_dir=None) -> ScenarioResult:
    """Execute the configured scenario and write telemetry.jsonl, plotdata.csv and summary.txt."""
    name = config["scenario"]
    out_dir = Path(out_dir or config.get("out") or Path(settings.FIELDLAB["output_dir"]) / name)
    logger.info(f"running {name} (seed {config['seed']}) into {out_dir}")
    result = SCENARIOS[name](config)
    write_telemetry(out_dir / "telemetry.jsonl", name, result.records, result.checks)
    if name in EVOLUTION_SCENARIOS and result.records:
        emit_plotdata(result.records, out_dir / "plotdata.csv")
    write_summary(out_dir / "summary.txt", summary_lines(config, result))
    failed = [n for n, c in result.checks.items() if not c.passed]
    if failed:
        logger.warning(f"{name}: failed checks {', '.join(failed)}")
    return result
