import numpy as np
import pytest

from modalstab.basis import boundary_gram, enumerate_modes
from modalstab.lifting import (BoundaryFunction, InsufficientDataError,
                               ResonanceError, commutation_check,
                               lifting_coefficients, lifting_h2_full,
                               lifting_h2_surrogate, xi_coefficients)
from modalstab.simulator import Trajectory


def dense_solve_oracle(gamma, c, modes):
    """Assemble the projected lifting operator as an explicit dense matrix
    and solve the linear system; independent of the closed-form path."""
    n_sim = len(modes)
    mu = np.array([m.mu for m in modes])
    n = int(np.sum(mu >= 0.0))
    # row n: (gamma -/+ mu_n) d_n = (beta c)_n, assembled densely
    a = np.zeros((n_sim, n_sim))
    for i in range(n_sim):
        a[i, i] = gamma - mu[i] if i < n else gamma + mu[i]
    rhs = boundary_gram(modes, modes[: len(c)]) @ np.asarray(c, dtype=float)
    return np.linalg.solve(a, rhs)


class TestLiftingCoefficients:
    def test_matches_dense_solve(self, disk_modes):
        modes, _ = disk_modes
        c = np.array([1.0, -0.3, 0.7, 0.0, 2.0])
        got = lifting_coefficients(9.0, BoundaryFunction(c), modes)
        oracle = dense_solve_oracle(9.0, c, modes)
        assert np.max(np.abs(got.d - oracle)) < 1e-12

    def test_single_trace_matches_resolvent_structure(self, disk_modes):
        modes, _ = disk_modes
        gamma = 8.5
        c = np.zeros(5)
        c[0] = 1.0
        got = lifting_coefficients(gamma, BoundaryFunction(c), modes)
        b11 = boundary_gram(modes[:1], modes[:1])[0, 0]
        assert got.d[0] == pytest.approx(b11 / (gamma - modes[0].mu),
                                         rel=1e-14)

    def test_zero_boundary_data(self, disk_modes):
        modes, _ = disk_modes
        got = lifting_coefficients(7.0, BoundaryFunction(np.zeros(5)), modes)
        assert np.all(got.d == 0.0)

    def test_linearity(self, disk_modes):
        modes, _ = disk_modes
        rng = np.random.default_rng(3)
        f = rng.standard_normal(5)
        g = rng.standard_normal(5)
        a, b = 1.7, -0.4
        lhs = lifting_coefficients(9.3, BoundaryFunction(a * f + b * g),
                                   modes).d
        rhs = (a * lifting_coefficients(9.3, BoundaryFunction(f), modes).d
               + b * lifting_coefficients(9.3, BoundaryFunction(g), modes).d)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_resonance_with_leading_eigenvalue(self, disk_modes):
        modes, _ = disk_modes
        with pytest.raises(ResonanceError):
            lifting_coefficients(modes[0].mu + 1e-9,
                                 BoundaryFunction(np.ones(5)), modes)

    def test_resonance_with_tail_eigenvalue(self, disk_modes):
        modes, _ = disk_modes
        gamma = -modes[5].mu + 1e-9    # mu_6 < 0, so -mu_6 > 0 resonates
        with pytest.raises(ResonanceError) as err:
            lifting_coefficients(gamma, BoundaryFunction(np.ones(5)), modes)
        assert "n=6" in str(err.value)

    def test_resonance_blowup_slope(self, disk_modes):
        # |d_1| grows like 1/(gamma - mu_1): slope -1 on a log-log plot
        modes, _ = disk_modes
        c = np.zeros(5)
        c[0] = 1.0
        eps = np.array([1e-2, 1e-3, 1e-4, 1e-5])
        d1 = [abs(lifting_coefficients(modes[0].mu + e, BoundaryFunction(c),
                                       modes).d[0]) for e in eps]
        slope = np.polyfit(np.log(eps), np.log(d1), 1)[0]
        assert abs(slope + 1.0) < 0.02


class TestXiCoefficients:
    def test_zero_state(self, disk_gains):
        got = xi_coefficients(disk_gains, np.zeros(5), 0)
        assert np.all(got.d == 0.0)

    def test_leading_consistency_identity(self, disk_gains):
        # (gamma_i - mu_n) <xi_i, phi_n> equals (B M_i A U)_n for n <= N
        gs = disk_gains
        rng = np.random.default_rng(5)
        U = rng.standard_normal(5)
        for i in range(5):
            got = xi_coefficients(gs, U, i)
            expected = gs.gram @ (gs.m_list[i] * (gs.a_gain @ U))
            lead = (gs.gammas[i] - gs.mu) * got.d[:5]
            assert np.max(np.abs(lead - expected)) < 1e-12 * max(
                1.0, np.max(np.abs(expected)))

    def test_single_mode_synthetic(self, synthetic_gain_set):
        gs = synthetic_gain_set
        U = np.array([2.0])
        got = xi_coefficients(gs, U, 0)
        g, mu1, b = gs.gammas[0], gs.mu[0], gs.gram[0, 0]
        expected = b * (1.0 / (g - mu1)) * (gs.a_gain[0, 0] * 2.0) / (g - mu1)
        assert got.d[0] == pytest.approx(expected, rel=1e-14)


@pytest.fixture(scope="module")
def synthetic_gain_set():
    from modalstab.basis import EigenMode
    from modalstab.controller import synthesize
    mode = EigenMode(n=1, angular=(0, "cos"), k=1, alpha=1.0, kappa=1.0,
                     mu=1.0, norm_const=1.0, trace_amp=1.0)
    return synthesize((mode,), (3.0,))


class TestSurrogates:
    def test_zero_coefficients(self, disk_modes):
        modes, _ = disk_modes
        from modalstab.lifting import LiftingCoefficients
        c = LiftingCoefficients(gamma=9.0, d=np.zeros(300))
        assert lifting_h2_surrogate(c, modes) == 0.0
        assert lifting_h2_full(c, modes) == 0.0

    def test_single_mode_value(self, disk_modes):
        modes, _ = disk_modes
        from modalstab.lifting import LiftingCoefficients
        d = np.zeros(300)
        d[0] = 1.0
        c = LiftingCoefficients(gamma=9.0, d=d)
        mu1 = modes[0].mu
        assert lifting_h2_surrogate(c, modes) == \
            pytest.approx(np.sqrt(1.0 + mu1 * mu1), rel=1e-14)
        k1 = modes[0].kappa
        assert lifting_h2_full(c, modes) == \
            pytest.approx(np.sqrt(1.0 + k1 + k1 * k1), rel=1e-14)

    def test_l2_part_stable_under_refinement(self, disk):
        # the plain coefficient norm of the lifting converges as the mode
        # table grows; only the boundary-trace-blind quadratic weights do not
        rng = np.random.default_rng(9)
        draws = [rng.standard_normal(5) for _ in range(5)]
        draws = [c / np.linalg.norm(c) for c in draws]
        norms = []
        for n_sim in (150, 300, 600):
            modes, _ = enumerate_modes(disk, 6.61, n_sim)
            sup = max(float(np.linalg.norm(
                lifting_coefficients(9.0, BoundaryFunction(c), modes).d))
                for c in draws)
            norms.append(sup)
        assert abs(norms[2] - norms[1]) < 0.05 * norms[1]

    @pytest.mark.xfail(reason="the (1 + mu^2)-weighted surrogate of a lifted "
                       "function with nonzero boundary trace gains mass under "
                       "mode-table refinement (the truncated sum grows like "
                       "sum kappa_n); only the L2 part stabilizes",
                       strict=True)
    def test_h2_surrogate_stable_under_refinement(self, disk):
        rng = np.random.default_rng(9)
        draws = [rng.standard_normal(5) for _ in range(5)]
        draws = [c / np.linalg.norm(c) for c in draws]
        sups = []
        for n_sim in (300, 600):
            modes, _ = enumerate_modes(disk, 6.61, n_sim)
            sup = max(lifting_h2_surrogate(
                lifting_coefficients(9.0, BoundaryFunction(c), modes), modes)
                for c in draws)
            sups.append(sup)
        assert abs(sups[1] - sups[0]) < 0.1 * sups[0]


class TestCommutation:
    def test_closed_loop_trajectory(self, disk_gains, disk_traj_seed1):
        for i in range(5):
            dev = commutation_check(disk_gains, disk_traj_seed1, i, 0.05)
            assert dev < 1e-10

    def test_constant_state(self, disk_gains):
        times = np.arange(5) * 0.05
        states = np.ones((5, 300))
        traj = Trajectory(times=times, states=states,
                          boundary_data=np.ones((5, 5)))
        assert commutation_check(disk_gains, traj, 0, 0.05) == 0.0

    def test_zero_trajectory(self, disk_gains):
        times = np.arange(4) * 0.05
        traj = Trajectory(times=times, states=np.zeros((4, 300)),
                          boundary_data=np.zeros((4, 5)))
        assert commutation_check(disk_gains, traj, 0, 0.05) == 0.0

    def test_too_few_samples(self, disk_gains):
        traj = Trajectory(times=np.array([0.0, 0.05]),
                          states=np.zeros((2, 300)),
                          boundary_data=np.zeros((2, 5)))
        with pytest.raises(InsufficientDataError):
            commutation_check(disk_gains, traj, 0, 0.05)
