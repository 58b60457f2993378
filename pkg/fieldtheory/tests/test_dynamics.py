import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from fieldtheory.errors import DivergenceError, FieldShapeError
from fieldtheory.services.algebra import build_algebra, pair
from fieldtheory.services.dynamics import (
    PalatiniBoundarySystem,
    RESIDUAL_NAMES,
    YangMillsBoundarySystem,
    action_ym,
    boundary_hamiltonian,
    bulk_hamiltonian,
    curvature,
    evolution_rhs,
    evolve,
    extended_action,
    fundamental_check,
    lambda_limit_residuals,
    palatini_action,
    ym_boundary_hamiltonian,
    ym_evolution_rhs,
)
from fieldtheory.services.fields import (
    BulkField,
    field_shapes,
    flat_vacuum,
    palatini_bivector,
    random_bulk_field,
    random_state,
    zero_bulk_field,
    zero_state,
)
from fieldtheory.services.mesh import build_mesh, gradient, pairing, partial_k
from fieldtheory.services.reduction import gauss_projection


def directional(fn, state, name, direction, step=1e-5):
    value = getattr(state, name)
    return (fn(state.replace(**{name: value + step * direction}))
            - fn(state.replace(**{name: value - step * direction}))) / (2 * step)


class CurvatureTests(SimpleTestCase):
    def setUp(self):
        self.mesh = build_mesh([5, 4])
        self.rng = np.random.default_rng(0)

    def test_zero_connection(self):
        spec = build_algebra("su2")
        assert_allclose(curvature(self.mesh, spec, np.zeros((5, 4, 2, 3))), 0.0)

    def test_pure_gauge_abelian_is_flat(self):
        spec = build_algebra("abelian", 1)
        chi = self.rng.standard_normal((5, 4, 1))
        F = curvature(self.mesh, spec, gradient(self.mesh, chi))
        assert_allclose(F, 0.0, atol=1e-12)

    def test_su2_pointwise(self):
        spec = build_algebra("su2")
        a = self.rng.standard_normal((5, 4, 2, 3))
        F = curvature(self.mesh, spec, a)
        i, j = 1, 2
        d0a1 = partial_k(self.mesh, a[..., 1, :], 0)[i, j]
        d1a0 = partial_k(self.mesh, a[..., 0, :], 1)[i, j]
        expected = d0a1 - d1a0 + np.cross(a[i, j, 0], a[i, j, 1])
        assert_allclose(F[i, j, 0, 1], expected, atol=1e-13)
        assert_allclose(F, -np.swapaxes(F, -2, -3), atol=1e-13)


class BulkHamiltonianTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_vanishing_cases(self):
        su2 = build_algebra("su2")
        A = self.rng.standard_normal((4, 3, 3))
        assert_allclose(bulk_hamiltonian(su2, A, np.zeros((4, 3, 3, 3)), 1.0), 0.0)
        abelian = build_algebra("abelian", 2)
        P = self.rng.standard_normal((4, 3, 3, 2))
        assert_allclose(bulk_hamiltonian(abelian, self.rng.standard_normal((4, 3, 2)), P, 0.0), 0.0)

    def test_su2_loop_oracle(self):
        su2 = build_algebra("su2")
        A = self.rng.standard_normal((2, 3))
        raw = self.rng.standard_normal((2, 2, 3))
        P = raw - np.swapaxes(raw, 0, 1)
        eta = [-1.0, 1.0]
        expected = 0.0
        for mu in range(2):
            for nu in range(2):
                comm = np.cross(A[mu], A[nu])
                expected += 0.5 * P[mu, nu] @ su2.pairing @ comm
                expected += 0.25 * eta[mu] * eta[nu] * P[mu, nu] @ su2.pairing @ P[mu, nu]
        assert_allclose(bulk_hamiltonian(su2, A, P, 1.0), expected, rtol=1e-12)

    def test_negative_lambda(self):
        with self.assertRaises(FieldShapeError):
            bulk_hamiltonian(build_algebra("su2"), np.zeros((2, 3)), np.zeros((2, 2, 3)), -0.1)


class ActionTests(SimpleTestCase):
    def setUp(self):
        self.mesh = build_mesh([4], n_t=4)
        self.su2 = build_algebra("su2")

    def test_zero_fields(self):
        chi = zero_bulk_field(self.mesh, self.su2)
        self.assertEqual(action_ym(self.mesh, self.su2, chi.A, chi.P).total, 0.0)

    def test_flat_connection_any_momentum(self):
        chi = random_bulk_field(2, self.mesh, self.su2)
        self.assertEqual(action_ym(self.mesh, self.su2, np.zeros_like(chi.A), chi.P, 0.0).total, 0.0)

    def test_lambda_term_isolated(self):
        chi = random_bulk_field(3, self.mesh, self.su2)
        diff = (action_ym(self.mesh, self.su2, chi.A, chi.P, 1.0).total
                - action_ym(self.mesh, self.su2, chi.A, chi.P, 0.0).total)
        weights = np.outer([-1.0, 1.0], [-1.0, 1.0])[..., None]
        quad = np.sum(weights[..., 0] * pair(self.su2, chi.P, chi.P))
        expected = -0.25 * quad * self.mesh.dt * self.mesh.cell_volume
        assert_allclose(diff, expected, rtol=1e-12)

    def test_per_slice_sums_to_total(self):
        chi = random_bulk_field(4, self.mesh, self.su2)
        value = action_ym(self.mesh, self.su2, chi.A, chi.P, 0.3)
        assert_allclose(np.sum(value.per_slice) * self.mesh.dt, value.total, rtol=1e-13)

    def test_extended_action_on_constraint_surface(self):
        so = build_algebra("so", 1)
        rng = np.random.default_rng(5)
        E = np.eye(2) + 0.1 * rng.standard_normal((4, 4, 2, 2))
        A = rng.standard_normal((4, 4, 2, 1))
        Lam = rng.standard_normal((4, 4, 2, 2, 1))
        P = palatini_bivector(so, E)
        gap = extended_action(self.mesh, so, A, P, Lam, E).total - palatini_action(self.mesh, so, A, E).total
        self.assertLess(abs(gap), 1e-12)

    def test_palatini_action_vanishes_for_flat_identity(self):
        so = build_algebra("so", 1)
        E = np.broadcast_to(np.eye(2), (4, 4, 2, 2))
        self.assertEqual(palatini_action(self.mesh, so, np.zeros((4, 4, 2, 1)), E).total, 0.0)


class FundamentalFormulaTests(SimpleTestCase):
    def test_random_fields(self):
        mesh = build_mesh([8], n_t=8)
        for kind in ("su2", "abelian"):
            spec = build_algebra(kind, 1)
            for i in range(20):
                chi = random_bulk_field(10 + i, mesh, spec)
                U = random_bulk_field(100 + i, mesh, spec)
                check = fundamental_check(mesh, spec, chi, U, lam=0.5)
                self.assertLess(check.relative_gap, 1e-6, msg=f"{kind} sample {i}")

    def test_boundary_slice_variation(self):
        mesh = build_mesh([6], n_t=5)
        spec = build_algebra("su2")
        chi = random_bulk_field(1, mesh, spec)
        U = zero_bulk_field(mesh, spec)
        U.A[-1] = np.random.default_rng(2).standard_normal(U.A[-1].shape)
        check = fundamental_check(mesh, spec, chi, U)
        self.assertLess(check.relative_gap, 1e-6)
        self.assertNotEqual(check.boundary, 0.0)

    def test_trivial_solution(self):
        mesh = build_mesh([6], n_t=5)
        spec = build_algebra("su2")
        U = random_bulk_field(3, mesh, spec)
        U.A[-1] = 0.0
        check = fundamental_check(mesh, spec, zero_bulk_field(mesh, spec), U)
        self.assertLess(abs(check.el), 1e-8)
        self.assertLess(check.gap, 1e-8)


class BoundaryHamiltonianTests(SimpleTestCase):
    def setUp(self):
        self.mesh = build_mesh([3, 4])
        self.so = build_algebra("so", 2)
        self.rng = np.random.default_rng(8)

    def test_zero_state(self):
        self.assertEqual(boundary_hamiltonian(zero_state(self.mesh, self.so)), 0.0)

    def test_only_p_and_a0(self):
        shapes = field_shapes(self.mesh, self.so)
        p = self.rng.standard_normal(shapes["p"])
        a0 = self.rng.standard_normal(shapes["a0"])
        state = zero_state(self.mesh, self.so).replace(p=p, a0=a0)
        expected = -pairing(self.mesh, self.so, p, gradient(self.mesh, a0))
        assert_allclose(boundary_hamiltonian(state), expected, rtol=1e-12)

    def test_rhs_trivial_cases(self):
        state = random_state(1, self.mesh, self.so, 0.1)
        still = state.replace(a0=np.zeros_like(state.a0), Lam0=np.zeros_like(state.Lam0))
        assert_allclose(evolution_rhs(still)[0], 0.0)
        abelian = build_algebra("abelian", 1)
        plain = zero_state(self.mesh, abelian).replace(
            a=self.rng.standard_normal(field_shapes(self.mesh, abelian)["a"]),
            p=self.rng.standard_normal(field_shapes(self.mesh, abelian)["p"]),
        )
        assert_allclose(evolution_rhs(plain)[1], 0.0)

    def test_palatini_rhs_is_variational(self):
        for seed in range(3):
            state = random_state(seed, self.mesh, self.so, 0.2)
            a_dot, p_dot = evolution_rhs(state)
            da = self.rng.standard_normal(state.a.shape)
            dp = self.rng.standard_normal(state.p.shape)
            assert_allclose(directional(boundary_hamiltonian, state, "a", da),
                            pairing(self.mesh, self.so, p_dot, da), rtol=1e-6)
            assert_allclose(directional(boundary_hamiltonian, state, "p", dp),
                            -pairing(self.mesh, self.so, a_dot, dp), rtol=1e-6)

    def test_yang_mills_rhs_is_variational(self):
        su2 = build_algebra("su2")
        for lam in (0.0, 0.7):
            state = random_state(4, self.mesh, su2, 0.3)
            a_dot, p_dot = ym_evolution_rhs(state, lam)
            da = self.rng.standard_normal(state.a.shape)
            dp = self.rng.standard_normal(state.p.shape)
            H = lambda s: ym_boundary_hamiltonian(s, lam)  # noqa: E731
            assert_allclose(directional(H, state, "a", da), pairing(self.mesh, su2, p_dot, da), rtol=1e-6)
            assert_allclose(directional(H, state, "p", dp), -pairing(self.mesh, su2, a_dot, dp), rtol=1e-6)


class _RunawaySystem:
    name = "runaway"

    def hamiltonian(self, state):
        return 0.0

    def rhs(self, state):
        return np.full_like(state.a, 1e7), np.zeros_like(state.p)

    def residuals(self, state):
        return {}


class EvolveTests(SimpleTestCase):
    def test_flat_vacuum_is_stationary(self):
        mesh = build_mesh([3, 3])
        vacuum = flat_vacuum(mesh, build_algebra("so", 2))
        records = evolve(vacuum, 100, mesh.dt)
        self.assertEqual(len(records), 101)
        x0 = vacuum.to_vector()
        drift = max(np.max(np.abs(r.state.to_vector() - x0)) for r in records)
        self.assertLess(drift, 1e-12)
        self.assertEqual(set(records[-1].constraint_residuals), set(RESIDUAL_NAMES))
        self.assertLess(max(records[-1].constraint_residuals.values()), 1e-12)

    def test_abelian_linear_flow(self):
        mesh = build_mesh([6])
        spec = build_algebra("abelian", 1)
        rng = np.random.default_rng(3)
        shapes = field_shapes(mesh, spec)
        state = zero_state(mesh, spec).replace(
            a=rng.standard_normal(shapes["a"]), a0=rng.standard_normal(shapes["a0"]),
        )
        records = evolve(state, 10, 0.05, system=YangMillsBoundarySystem(0.0))
        expected = state.a + 0.5 * gradient(mesh, state.a0)
        assert_allclose(records[-1].state.a, expected, atol=1e-13)
        assert_allclose(records[-1].t, 0.5)

    def test_richardson_fourth_order(self):
        mesh = build_mesh([4])
        spec = build_algebra("su2")
        rng = np.random.default_rng(12)
        state = random_state(12, mesh, spec, 0.5).replace(a0=rng.standard_normal((4, 3)))
        system = YangMillsBoundarySystem(0.5)
        finals = []
        for dt in (0.05, 0.025, 0.0125):
            end = evolve(state, int(round(0.5 / dt)), dt, system=system)[-1].state
            finals.append(np.concatenate([end.a.ravel(), end.p.ravel()]))
        ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
        self.assertTrue(10 < ratio < 22, msg=f"ratio {ratio:.2f}")

    def test_energy_is_conserved(self):
        mesh = build_mesh([5, 5])
        spec = build_algebra("su2")
        state = random_state(2, mesh, spec, 0.1)
        records = evolve(state, 20, mesh.dt, system=YangMillsBoundarySystem(0.1))
        h0 = records[0].hamiltonian
        self.assertLess(max(abs(r.hamiltonian - h0) for r in records), 1e-7 * max(abs(h0), 1.0))

    def test_divergence_is_reported(self):
        mesh = build_mesh([3])
        state = zero_state(mesh, build_algebra("abelian", 1))
        with self.assertRaises(DivergenceError) as ctx:
            evolve(state, 5, 1.0, system=_RunawaySystem())
        self.assertEqual(ctx.exception.step, 1)

    def test_bad_step(self):
        mesh = build_mesh([3])
        with self.assertRaises(FieldShapeError):
            evolve(zero_state(mesh, build_algebra("abelian", 1)), 1, 0.0)

    def test_records_serialize(self):
        mesh = build_mesh([3])
        vacuum = flat_vacuum(mesh, build_algebra("so", 1))
        records = evolve(vacuum, 1, mesh.dt, system=PalatiniBoundarySystem())
        self.assertEqual(records[0].as_dict()["step"], 0)
        self.assertIn("torsion0", records[0].as_dict()["residuals"])


class LambdaLimitTests(SimpleTestCase):
    def test_residuals_scale_linearly(self):
        mesh = build_mesh([5, 5])
        spec = build_algebra("su2")
        rng = np.random.default_rng(6)
        shapes = field_shapes(mesh, spec)
        base = zero_state(mesh, spec)
        beta = rng.standard_normal(shapes["beta"])
        p = gauss_projection(mesh, spec, base.a, 0.1 * rng.standard_normal(shapes["p"]))
        start = base.replace(p=p, beta=0.05 * (beta - np.swapaxes(beta, -2, -3)))
        lambdas = (1.0, 0.1, 0.01)
        values = {}
        for lam in lambdas:
            end = evolve(start, 10, mesh.dt, system=YangMillsBoundarySystem(lam))[-1].state
            values[lam] = lambda_limit_residuals(end, lam)
        for name in ("flatness", "gauss"):
            logs = np.log([values[lam][name] for lam in lambdas])
            slope = np.polyfit(np.log(lambdas), logs, 1)[0]
            self.assertLess(abs(slope - 1.0), 0.2, msg=f"{name} slope {slope:.4f}")

    def test_bulk_field_shape_checked(self):
        mesh = build_mesh([4], n_t=3)
        spec = build_algebra("su2")
        wrong = BulkField(np.zeros((3, 4, 3, 3)), np.zeros((3, 4, 3, 3, 3)))
        with self.assertRaises(FieldShapeError):
            action_ym(mesh, spec, wrong.A, wrong.P)
