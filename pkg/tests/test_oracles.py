import math

import numpy as np
import pytest

from coalbm.oracles import (ConeSpec, cone_exit_exponent,
                            expected_external_branch,
                            expected_interior_branch, expected_two_sided_exit,
                            phi_matrix, phi_transform)


class TestTwoSidedExit:
    def test_values(self):
        assert expected_two_sided_exit(1.0, 1.0) == 1.0
        assert expected_two_sided_exit(2.0, 3.0) == 6.0

    def test_vanishes_at_boundary(self):
        assert expected_two_sided_exit(1e-12, 5.0) == pytest.approx(0.0, abs=1e-11)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            expected_two_sided_exit(0.0, 1.0)
        with pytest.raises(ValueError):
            expected_two_sided_exit(1.0, -2.0)


class TestExternalBranch:
    def test_values(self):
        assert expected_external_branch(0.0, 1.0, 3.0) == 2.0
        assert expected_external_branch(0.0, 1.0, 1.0) == 0.0  # z == y
        assert expected_external_branch(1.0, 1.0, 3.0) == 0.0  # y == x

    def test_spacing_identity(self):
        # spacings 1/n and m/n give m/n^2
        n, m = 10, 3
        assert expected_external_branch(0.0, 1.0 / n, (1.0 + m) / n) == \
            pytest.approx(m / n**2)

    def test_agrees_with_two_sided_exit(self):
        # both formulas reduce to (z-y)(y-x)
        x, y, z = -0.4, 0.25, 1.1
        assert expected_external_branch(x, y, z) == pytest.approx(
            expected_two_sided_exit(y - x, z - y))

    def test_rejects_unordered(self):
        with pytest.raises(ValueError):
            expected_external_branch(1.0, 0.0, 2.0)
        with pytest.raises(ValueError):
            expected_external_branch(0.0, 2.0, 1.0)


class TestInteriorBranch:
    def test_values(self):
        assert expected_interior_branch(10, 1) == pytest.approx(0.01)
        assert expected_interior_branch(100, 5) == pytest.approx(1e-4)

    def test_requires_interior_index(self):
        with pytest.raises(ValueError):
            expected_interior_branch(3, 2)
        with pytest.raises(ValueError):
            expected_interior_branch(5, 0)


class TestConeExit:
    def test_exponents(self):
        assert cone_exit_exponent(ConeSpec(math.pi / 3)) == pytest.approx(1.5)
        assert cone_exit_exponent(ConeSpec(math.pi / 2)) == pytest.approx(1.0)
        assert cone_exit_exponent(ConeSpec(math.pi)) == pytest.approx(0.5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ConeSpec(0.0)
        with pytest.raises(ValueError):
            ConeSpec(2.0 * math.pi + 0.1)


class TestPhiTransform:
    def test_fixed_points(self):
        assert phi_transform(0.0, 0.0) == (0.0, 0.0)
        x, y = phi_transform(1.0, 0.0)
        assert x == pytest.approx(math.sqrt(2.0 / 3.0))
        assert y == 0.0

    def test_whitens_gap_covariance(self):
        # adjacent gaps: variance rate 2 each, covariance rate -1
        phi = np.array(phi_matrix())
        sigma = np.array([[2.0, -1.0], [-1.0, 2.0]])
        assert np.allclose(phi @ sigma @ phi.T, np.eye(2), atol=1e-12)

    def test_quadrant_maps_to_pi_third_cone(self):
        u = np.array(phi_transform(1.0, 0.0))
        v = np.array(phi_transform(0.0, 1.0))
        cosang = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
        assert math.acos(cosang) == pytest.approx(math.pi / 3.0, abs=1e-12)

    def test_linear(self):
        a = np.array(phi_transform(0.3, -0.7))
        b = np.array(phi_transform(0.3, 0.0)) + np.array(phi_transform(0.0, -0.7))
        assert np.allclose(a, b, atol=1e-15)
