import numpy as np
import pytest

from heavyvar.exceptions import DimensionError, ParameterError
from heavyvar.model import (
    RegressionData,
    Trajectory,
    VarModel,
    VarxModel,
    build_companion,
    build_design,
    build_varx_companion,
    build_varx_design,
    stack_coeffs,
    stack_varx_coeffs,
)


def random_var(rng, p, d, scale=0.3):
    return VarModel(coeffs=tuple(scale * rng.standard_normal((p, p)) / np.sqrt(p) for _ in range(d)))


class TestCompanion:
    def test_lag_one_is_transposed_coefficient(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((3, 3))
        comp = build_companion(VarModel(coeffs=(B,)))
        np.testing.assert_array_equal(comp, B.T)

    def test_scalar_ar2(self):
        comp = build_companion(VarModel(coeffs=(np.array([[0.4]]), np.array([[0.2]]))))
        np.testing.assert_allclose(comp, [[0.4, 0.2], [1.0, 0.0]])

    def test_zero_coefficients_leave_shift_identities(self):
        comp = build_companion(VarModel(coeffs=(np.zeros((2, 2)), np.zeros((2, 2)))))
        expected = np.zeros((4, 4))
        expected[2:, :2] = np.eye(2)
        np.testing.assert_array_equal(comp, expected)

    def test_companion_recursion_matches_direct(self):
        rng = np.random.default_rng(1)
        model = random_var(rng, p=3, d=3)
        comp = build_companion(model)
        eps = rng.standard_normal((60, 3))
        # direct recursion
        z = np.zeros((60, 3))
        for t in range(60):
            acc = eps[t].copy()
            for k, B in enumerate(model.coeffs, start=1):
                if t - k >= 0:
                    acc += B.T @ z[t - k]
            z[t] = acc
        # companion recursion on the stacked state
        state = np.zeros(9)
        for t in range(60):
            u = np.zeros(9)
            u[:3] = eps[t]
            state = comp @ state + u
            np.testing.assert_allclose(state[:3], z[t], atol=1e-12)

    def test_mismatched_blocks_rejected(self):
        with pytest.raises(DimensionError):
            VarModel(coeffs=(np.zeros((2, 2)), np.zeros((3, 3))))


class TestVarxCompanion:
    def test_scalar_layout(self):
        model = VarxModel(
            base=VarModel(coeffs=(np.array([[0.3]]),)),
            exo_coeffs=(np.array([[0.7]]),),
        )
        np.testing.assert_allclose(build_varx_companion(model), [[0.3, 0.7], [0.0, 0.0]])

    def test_shift_blocks_for_higher_lags(self):
        p, da, db = 2, 3, 2
        rng = np.random.default_rng(2)
        model = VarxModel(
            base=random_var(rng, p, da),
            exo_coeffs=tuple(0.1 * rng.standard_normal((p, p)) for _ in range(db)),
        )
        comp = build_varx_companion(model)
        assert comp.shape == (p * (da + db), p * (da + db))
        for k in range(1, da):
            np.testing.assert_array_equal(comp[k * p:(k + 1) * p, (k - 1) * p:k * p], np.eye(p))
        # the z_t row is zero: the exogenous process is white noise
        np.testing.assert_array_equal(comp[da * p:(da + 1) * p], np.zeros((p, p * (da + db))))
        np.testing.assert_array_equal(
            comp[(da + 1) * p:(da + 2) * p, da * p:(da + 1) * p], np.eye(p)
        )

    def test_round_trip_against_direct_recursion(self):
        rng = np.random.default_rng(3)
        p, da, db = 3, 2, 3
        model = VarxModel(
            base=random_var(rng, p, da),
            exo_coeffs=tuple(0.2 * rng.standard_normal((p, p)) for _ in range(db)),
        )
        comp = build_varx_companion(model)
        eps = rng.standard_normal((100, p))
        eta = rng.standard_normal((100, p))
        x = np.zeros((100, p))
        for t in range(100):
            acc = eps[t].copy()
            for i, A in enumerate(model.base.coeffs, start=1):
                if t - i >= 0:
                    acc += A.T @ x[t - i]
            for j, B in enumerate(model.exo_coeffs, start=1):
                if t - j >= 0:
                    acc += B.T @ eta[t - j]
            x[t] = acc
        m = p * (da + db)
        state = np.zeros(m)
        for t in range(100):
            u = np.zeros(m)
            u[:p] = eps[t]
            u[da * p:(da + 1) * p] = eta[t]
            state = comp @ state + u
            assert np.max(np.abs(state[:p] - x[t])) < 1e-12

    def test_mismatched_exo_dimension_rejected(self):
        with pytest.raises(DimensionError):
            VarxModel(base=VarModel(coeffs=(np.zeros((2, 2)),)), exo_coeffs=(np.zeros((3, 3)),))


class TestDesign:
    def test_minimal_two_lag_design(self):
        Z = np.array([[1.0], [2.0], [3.0]])
        reg = build_design(Trajectory(data=Z), d=2)
        assert reg.n == 1
        np.testing.assert_array_equal(reg.X, [[2.0, 1.0]])
        np.testing.assert_array_equal(reg.Y, [[3.0]])

    def test_lag_blocks_are_newest_first(self):
        rng = np.random.default_rng(4)
        Z = rng.standard_normal((10, 2))
        reg = build_design(Trajectory(data=Z), d=3)
        assert reg.n == 7
        for i in range(reg.n):
            np.testing.assert_array_equal(reg.X[i], np.concatenate([Z[i + 2], Z[i + 1], Z[i]]))
            np.testing.assert_array_equal(reg.Y[i], Z[i + 3])

    def test_design_is_lossless_for_the_generating_model(self):
        from heavyvar.sampling import NoiseSpec, simulate_var

        rng = np.random.default_rng(5)
        model = random_var(rng, p=3, d=2)
        traj, eps = simulate_var(
            model, NoiseSpec(gamma2=1.0, scale=1.0, p=3), T=50, burn_in=0,
            rng=rng, return_innovations=True,
        )
        reg = build_design(traj, d=2)
        resid = reg.Y - reg.X @ stack_coeffs(model)
        np.testing.assert_allclose(resid, eps[2:], atol=1e-12)

    def test_too_short_trajectory_rejected(self):
        with pytest.raises(DimensionError):
            build_design(Trajectory(data=np.zeros((2, 3))), d=2)

    def test_varx_design_blocks(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((8, 2))
        z = rng.standard_normal((8, 2))
        reg = build_varx_design(Trajectory(data=x, exo=z), d_endo=2, d_exo=1)
        assert reg.n == 6
        for i in range(reg.n):
            t = i + 2
            np.testing.assert_array_equal(reg.X[i], np.concatenate([x[t - 1], x[t - 2], z[t - 1]]))
            np.testing.assert_array_equal(reg.Y[i], x[t])

    def test_varx_design_reconstructs_innovations(self):
        from heavyvar.sampling import NoiseSpec, simulate_var

        rng = np.random.default_rng(7)
        model = VarxModel(
            base=random_var(rng, p=2, d=2),
            exo_coeffs=(0.3 * rng.standard_normal((2, 2)),),
        )
        traj, eps = simulate_var(
            model, NoiseSpec(gamma2=2.0, scale=1.0, p=2), T=40, burn_in=0,
            rng=rng, return_innovations=True,
        )
        reg = build_varx_design(traj, d_endo=2, d_exo=1)
        resid = reg.Y - reg.X @ stack_varx_coeffs(model)
        np.testing.assert_allclose(resid, eps[2:], atol=1e-12)

    def test_regression_data_shape_guard(self):
        with pytest.raises(DimensionError):
            RegressionData(X=np.zeros((5, 4)), Y=np.zeros((5, 3)), d=1)


class TestTrajectory:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        traj = Trajectory(data=rng.standard_normal((12, 3)))
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "t,z1,z2,z3"
        back = Trajectory.from_csv(path)
        np.testing.assert_array_equal(back.data, traj.data)

    def test_nonfinite_rejected(self):
        with pytest.raises(ParameterError):
            Trajectory(data=np.array([[1.0, np.nan]]))

    def test_exo_length_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            Trajectory(data=np.zeros((5, 2)), exo=np.zeros((4, 2)))
