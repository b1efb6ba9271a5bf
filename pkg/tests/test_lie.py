import numpy as np
import pytest
from scipy.linalg import expm

from cteskf import lie


def random_rotation(rng):
    return lie.so3_exp(rng.uniform(-np.pi * 0.9, np.pi * 0.9, 3))


def random_group_state(rng, vel_scale=10.0, pos_scale=100.0):
    return lie.GroupState(
        random_rotation(rng),
        rng.normal(scale=vel_scale, size=3),
        rng.normal(scale=pos_scale, size=3),
    )


class TestSkew:
    def test_zero(self):
        np.testing.assert_array_equal(lie.skew(np.zeros(3)), np.zeros((3, 3)))

    def test_basis_vector(self):
        expected = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(lie.skew(np.array([1.0, 0.0, 0.0])), expected)

    def test_matches_cross_product(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.normal(size=3), rng.normal(size=3)
            np.testing.assert_allclose(lie.skew(a) @ b, np.cross(a, b), atol=1e-15)

    def test_antisymmetric(self):
        m = lie.skew(np.array([0.3, -1.2, 2.0]))
        np.testing.assert_allclose(m, -m.T, atol=0.0)


class TestSo3ExpLog:
    def test_exp_zero_is_identity(self):
        np.testing.assert_array_equal(lie.so3_exp(np.zeros(3)), np.eye(3))

    def test_quarter_turn_about_z(self):
        r = lie.so3_exp(np.array([0.0, 0.0, np.pi / 2]))
        np.testing.assert_allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)

    def test_small_angle_matches_first_order(self):
        phi = np.array([1e-6, 2e-6, -1e-6])
        np.testing.assert_allclose(lie.so3_exp(phi), np.eye(3) + lie.skew(phi), atol=1e-11)

    def test_exp_is_orthonormal(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            r = lie.so3_exp(rng.uniform(-3.0, 3.0, 3))
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
            assert abs(np.linalg.det(r) - 1.0) < 1e-10

    def test_log_identity(self):
        np.testing.assert_array_equal(lie.so3_log(np.eye(3)), np.zeros(3))

    def test_log_round_trip(self):
        phi = np.array([0.3, -0.2, 0.1])
        np.testing.assert_allclose(lie.so3_log(lie.so3_exp(phi)), phi, atol=1e-12)

    def test_log_pi_about_x(self):
        r = lie.so3_exp(np.array([np.pi, 0.0, 0.0]))
        phi = lie.so3_log(r)
        np.testing.assert_allclose(phi, [np.pi, 0.0, 0.0], atol=1e-7)
        # sign convention: first nonzero axis component positive
        assert phi[0] > 0.0

    def test_log_near_pi_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            phi = (np.pi - 1e-9) * axis
            r = lie.so3_exp(phi)
            np.testing.assert_allclose(lie.so3_exp(lie.so3_log(r)), r, atol=1e-9)

    def test_log_exp_inverse_generic(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            phi = rng.uniform(-1.0, 1.0, 3) * 0.99 * np.pi / np.sqrt(3.0)
            back = lie.so3_log(lie.so3_exp(phi))
            np.testing.assert_allclose(back, phi, rtol=1e-9, atol=1e-12)


class TestJacobians:
    def test_left_jacobian_integral_oracle(self):
        # J_l(phi) = integral of exp(s phi) ds over [0, 1], by quadrature
        from scipy.integrate import simpson

        rng = np.random.default_rng(4)
        for _ in range(10):
            phi = rng.uniform(-2.0, 2.0, 3)
            s = np.linspace(0.0, 1.0, 401)
            samples = np.stack([lie.so3_exp(si * phi) for si in s])
            oracle = simpson(samples, x=s, axis=0)
            np.testing.assert_allclose(lie.so3_left_jacobian(phi), oracle, atol=1e-9)

    def test_jacobian_inverse(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            phi = rng.uniform(-2.0, 2.0, 3)
            prod = lie.so3_left_jacobian(phi) @ lie.so3_left_jacobian_inv(phi)
            np.testing.assert_allclose(prod, np.eye(3), atol=1e-12)

    def test_small_angle_consistency(self):
        phi = np.array([1e-9, -2e-9, 3e-9])
        np.testing.assert_allclose(lie.so3_left_jacobian(phi), np.eye(3) + 0.5 * lie.skew(phi), atol=1e-15)


class TestSe23HatVee:
    def test_zero(self):
        np.testing.assert_array_equal(lie.se23_hat(np.zeros(9)), np.zeros((5, 5)))

    def test_velocity_placement(self):
        xi = np.array([0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
        m = lie.se23_hat(xi)
        np.testing.assert_array_equal(m[:3, 3], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(m[:3, :3], np.zeros((3, 3)))
        np.testing.assert_array_equal(m[:3, 4], np.zeros(3))

    def test_vee_hat_round_trip_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            xi = rng.normal(size=9)
            np.testing.assert_array_equal(lie.se23_vee(lie.se23_hat(xi)), xi)

    def test_vee_rejects_bad_bottom_rows(self):
        m = np.zeros((5, 5))
        m[4, 0] = 1e-6
        with pytest.raises(ValueError):
            lie.se23_vee(m)


class TestSe23ExpLog:
    def test_zero_gives_identity(self):
        chi = lie.se23_exp(np.zeros(9))
        np.testing.assert_array_equal(chi.as_matrix(), np.eye(5))

    def test_pure_translation(self):
        xi = np.array([0.0, 0.0, 0.0, 1.0, -2.0, 3.0, 4.0, 5.0, -6.0])
        chi = lie.se23_exp(xi)
        np.testing.assert_array_equal(chi.rot, np.eye(3))
        np.testing.assert_array_equal(chi.nu, xi[3:6])
        np.testing.assert_array_equal(chi.rho, xi[6:9])

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            xi = rng.uniform(-1.0, 1.0, 9) * np.array([2, 2, 2, 5, 5, 5, 5, 5, 5])
            np.testing.assert_allclose(
                lie.se23_exp(xi).as_matrix(), expm(lie.se23_hat(xi)), atol=1e-10
            )

    def test_log_exp_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            xi = rng.uniform(-1.0, 1.0, 9) * np.array([1.5, 1.5, 1.5, 8, 8, 8, 50, 50, 50])
            back = lie.se23_log(lie.se23_exp(xi))
            np.testing.assert_allclose(back, xi, rtol=1e-9, atol=1e-12)


class TestComposeInverse:
    def test_identity_neutral(self):
        rng = np.random.default_rng(9)
        b = random_group_state(rng)
        c = lie.compose(lie.GroupState.identity(), b)
        np.testing.assert_array_equal(c.as_matrix(), b.as_matrix())

    def test_double_inverse(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            a = random_group_state(rng)
            back = lie.inverse(lie.inverse(a))
            np.testing.assert_allclose(back.as_matrix(), a.as_matrix(), atol=1e-13)

    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = random_group_state(rng)
            np.testing.assert_allclose(
                lie.compose(a, lie.inverse(a)).as_matrix(), np.eye(5), atol=1e-12
            )

    def test_compose_matches_dense_product(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            a, b = random_group_state(rng), random_group_state(rng)
            np.testing.assert_allclose(
                lie.compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-14
            )

    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(13)
        a = random_group_state(rng)
        b = lie.GroupState.from_matrix(a.as_matrix())
        np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())


class TestAdjoint:
    def test_identity(self):
        np.testing.assert_array_equal(lie.adjoint(lie.GroupState.identity()), np.eye(9))

    def test_velocity_block(self):
        chi = lie.GroupState(np.eye(3), np.array([1.0, 0.0, 0.0]), np.zeros(3))
        ad = lie.adjoint(chi)
        np.testing.assert_array_equal(ad[3:6, 0:3], lie.skew([1.0, 0.0, 0.0]))

    def test_conjugation_identity(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            chi = random_group_state(rng)
            xi = rng.normal(size=9)
            lhs = lie.se23_hat(lie.adjoint(chi) @ xi)
            rhs = chi.as_matrix() @ lie.se23_hat(xi) @ lie.inverse(chi).as_matrix()
            np.testing.assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))

    def test_adjoint_inverse(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            chi = random_group_state(rng)
            prod = lie.adjoint(chi) @ lie.adjoint_inv(chi)
            np.testing.assert_allclose(prod, np.eye(9), atol=1e-9)

    def test_homomorphism(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            a, b = random_group_state(rng, 5, 10), random_group_state(rng, 5, 10)
            lhs = lie.adjoint(lie.compose(a, b))
            rhs = lie.adjoint(a) @ lie.adjoint(b)
            assert np.linalg.norm(lhs - rhs) < 1e-10 * max(1.0, np.linalg.norm(rhs))


class TestRenormalization:
    def test_newton_step_restores_orthonormality(self):
        rng = np.random.default_rng(17)
        r = random_rotation(rng) + rng.normal(scale=1e-6, size=(3, 3))
        pre = np.linalg.norm(r.T @ r - np.eye(3))
        r2 = lie.renormalize(r)
        post = np.linalg.norm(r2.T @ r2 - np.eye(3))
        assert post < pre**2  # quadratic contraction
        assert post < 1e-10

    def test_svd_orthonormalize(self):
        rng = np.random.default_rng(18)
        r = random_rotation(rng) + rng.normal(scale=1e-3, size=(3, 3))
        r2 = lie.orthonormalize(r)
        np.testing.assert_allclose(r2.T @ r2, np.eye(3), atol=1e-14)
        assert np.linalg.det(r2) > 0.0

    def test_drift_over_many_compositions(self):
        # long composition chain with the filter-loop renormalization policy
        rng = np.random.default_rng(19)
        increments = [lie.so3_exp(rng.normal(scale=1e-3, size=3)) for _ in range(64)]
        r = np.eye(3)
        for k in range(1_000_000):
            r = r @ increments[k % 64]
            if k % 16 == 15:
                r = lie.renormalize(r)
        assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-9


class TestQuaternions:
    def test_round_trip(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            r = random_rotation(rng)
            np.testing.assert_allclose(lie.quat_to_rot(lie.rot_to_quat(r)), r, atol=1e-12)

    def test_identity(self):
        np.testing.assert_allclose(lie.rot_to_quat(np.eye(3)), [1.0, 0.0, 0.0, 0.0], atol=0.0)
