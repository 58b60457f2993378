import json

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from fieldtheory.errors import AlgebraError
from fieldtheory.services.algebra import (
    MinkowskiMetric,
    algebra_residuals,
    bracket,
    build_algebra,
    coadjoint,
    dump_algebra,
    exp_element,
    from_matrix,
    group_adjoint,
    load_algebra,
    lower_index,
    pair,
    raise_index,
    to_matrix,
)


class BuildAlgebraTests(SimpleTestCase):
    def test_abelian_one(self):
        spec = build_algebra("abelian", 1)
        self.assertEqual(spec.dim, 1)
        assert_allclose(spec.structure, 0.0)
        assert_allclose(spec.pairing, [[1.0]])
        self.assertTrue(spec.degenerate_killing)

    def test_su2_structure_is_levi_civita(self):
        spec = build_algebra("su2")
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        assert_allclose(spec.structure, eps, atol=1e-14)
        # pairing proportional to the identity
        k = spec.pairing[0, 0]
        assert_allclose(spec.pairing, k * np.eye(3), atol=1e-14)
        self.assertNotEqual(k, 0.0)

    def test_so13_dimension_and_bracket_oracle(self):
        spec = build_algebra("so", 3)
        self.assertEqual(spec.dim, 6)
        self.assertEqual(spec.rep_dim, 4)
        i01 = spec.index_pairs.index((0, 1))
        i12 = spec.index_pairs.index((1, 2))
        x = np.eye(6)[i01]
        y = np.eye(6)[i12]
        X, Y = to_matrix(spec, x), to_matrix(spec, y)
        assert_allclose(bracket(spec, x, y), from_matrix(spec, X @ Y - Y @ X), atol=1e-13)
        # the commutator lands on the (0, 2) generator only
        out = bracket(spec, x, y)
        i02 = spec.index_pairs.index((0, 2))
        self.assertGreater(abs(out[i02]), 0.5)
        assert_allclose(np.delete(out, i02), 0.0, atol=1e-13)

    def test_residuals_vanish_for_every_kind(self):
        for kind, d in (("abelian", 3), ("su2", 1), ("so", 1), ("so", 2), ("so", 3)):
            residuals = algebra_residuals(build_algebra(kind, d))
            self.assertLess(max(residuals.values()), 1e-10, msg=f"{kind}({d})")

    def test_unknown_kind_and_bad_parameter(self):
        with self.assertRaises(AlgebraError):
            build_algebra("e8")
        with self.assertRaises(AlgebraError):
            build_algebra("so", 0)


class AlgebraOperationTests(SimpleTestCase):
    def setUp(self):
        self.su2 = build_algebra("su2")
        self.rng = np.random.default_rng(7)

    def test_bracket_antisymmetric_and_su2_basis(self):
        x = self.rng.standard_normal(3)
        assert_allclose(bracket(self.su2, x, x), 0.0, atol=1e-15)
        assert_allclose(bracket(self.su2, np.eye(3)[0], np.eye(3)[1]), np.eye(3)[2], atol=1e-14)

    def test_abelian_bracket_vanishes(self):
        spec = build_algebra("abelian", 2)
        x, y = self.rng.standard_normal((2, 5, 2))
        assert_allclose(bracket(spec, x, y), 0.0)

    def test_pair_and_index_round_trip(self):
        x = self.rng.standard_normal(3)
        self.assertEqual(float(pair(self.su2, x, np.zeros(3))), 0.0)
        assert_allclose(raise_index(self.su2, lower_index(self.su2, x)), x, atol=1e-14)

    def test_lorentz_pairing_signs_differ(self):
        spec = build_algebra("so", 3)
        boost = np.eye(6)[spec.index_pairs.index((0, 1))]
        rotation = np.eye(6)[spec.index_pairs.index((1, 2))]
        self.assertLess(float(pair(spec, boost, boost)) * float(pair(spec, rotation, rotation)), 0.0)

    def test_coadjoint_is_minus_transpose(self):
        x, p, z = self.rng.standard_normal((3, 3))
        lhs = pair(self.su2, coadjoint(self.su2, x, p), z)
        rhs = -pair(self.su2, p, bracket(self.su2, x, z))
        assert_allclose(lhs, rhs, atol=1e-13)

    def test_wrong_dimension_raises(self):
        with self.assertRaises(AlgebraError):
            bracket(self.su2, np.zeros(2), np.zeros(3))

    def test_group_adjoint_of_identity(self):
        g = exp_element(self.su2, np.zeros(3))
        assert_allclose(group_adjoint(self.su2, g), np.eye(3), atol=1e-14)

    def test_group_adjoint_preserves_pairing(self):
        g = exp_element(self.su2, 0.3 * self.rng.standard_normal(3))
        R = group_adjoint(self.su2, g)
        assert_allclose(R.T @ self.su2.pairing @ R, self.su2.pairing, atol=1e-12)


class AlgebraFileTests(SimpleTestCase):
    def test_dump_and_load_preserve_structure(self):
        spec = build_algebra("so", 2)
        text = dump_algebra(spec)
        payload = json.loads(text)
        self.assertEqual(payload["kind"], "so")
        self.assertEqual(payload["dim"], 3)
        loaded = load_algebra(text)
        assert_allclose(loaded.structure, spec.structure)
        assert_allclose(loaded.pairing, spec.pairing)
        self.assertEqual(loaded.index_pairs, spec.index_pairs)

    def test_malformed_file(self):
        with self.assertRaises(AlgebraError):
            load_algebra('{"kind": "su2"}')


class MinkowskiMetricTests(SimpleTestCase):
    def test_signature(self):
        eta = MinkowskiMetric(4)
        assert_allclose(eta.diagonal, [-1, 1, 1, 1])
        self.assertEqual(eta.signature(), (1, 3))

    def test_too_small(self):
        with self.assertRaises(AlgebraError):
            MinkowskiMetric(1)
