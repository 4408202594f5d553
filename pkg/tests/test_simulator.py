import math
import struct

import numpy as np
import pytest
import scipy.linalg

from modalstab.simulator import (ClosedLoopSystem, ConsistencyError,
                                 InsufficientExcitationError, PolynomialSpec,
                                 Trajectory, assemble_closed_loop, integrate,
                                 lcg_uniform, open_loop,
                                 project_initial_condition,
                                 read_snapshots, reduced_dynamics_fit,
                                 tail_energy, write_snapshots,
                                 write_trajectory_csv)
from modalstab.diagnostics import decay_rate_fit

DISK_MU_1 = 5.1642035092633039


class TestAssemble:
    def test_open_loop_generator_is_diagonal(self, disk, disk_modes):
        modes, _ = disk_modes
        system = assemble_closed_loop(modes, None, disk)
        mu = np.array([m.mu for m in modes])
        assert np.array_equal(system.generator, np.diag(mu))

    def test_leading_block_matches_direct_generator(self, disk_system,
                                                    disk_gains):
        lead = disk_system.generator[:5, :5]
        assert np.max(np.abs(lead - disk_gains.a_direct)) < 1e-12

    def test_coupling_restricted_to_leading_columns(self, disk_system):
        mu = disk_system.mu
        coupling = disk_system.generator - np.diag(mu)
        assert np.all(coupling[:, 5:] == 0.0)

    def test_tail_rows_follow_angular_sparsity(self, disk_system, disk_modes):
        modes, _ = disk_modes
        heads = {m.angular for m in modes[:5]}
        coupling = disk_system.generator - np.diag(disk_system.mu)
        for n in range(5, 300):
            row_active = np.any(coupling[n, :5] != 0.0)
            assert row_active == (modes[n].angular in heads)

    def test_beta_equals_closed_form_rows(self, disk_system, disk_modes):
        from modalstab.basis import boundary_inner
        modes, _ = disk_modes
        for n in (0, 5, 17, 120):
            for j in range(5):
                assert disk_system.beta[n, j] == \
                    boundary_inner(modes[n], modes[j])

    def test_mode_table_mismatch_rejected(self, disk, disk_modes, disk_gains):
        modes, _ = disk_modes
        with pytest.raises(ConsistencyError):
            assemble_closed_loop(modes[:200], disk_gains, disk)


class TestIntegrate:
    def test_scalar_exponential(self):
        system = ClosedLoopSystem(generator=np.array([[-1.0]]),
                                  beta=np.zeros((1, 1)),
                                  coupling=np.zeros((1, 1)),
                                  mu=np.array([-1.0]), n_unstable=1)
        traj = integrate(system, [1.0], 0.05, 1.0)
        assert traj.states[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-9)

    def test_nilpotent_generator(self):
        system = ClosedLoopSystem(generator=np.array([[0.0, 1.0],
                                                      [0.0, 0.0]]),
                                  beta=np.zeros((2, 1)),
                                  coupling=np.zeros((1, 1)),
                                  mu=np.zeros(2), n_unstable=1)
        traj = integrate(system, [0.0, 1.0], 0.25, 1.0)
        assert np.allclose(traj.states[-1], [1.0, 1.0], atol=1e-14)

    def test_expm_vs_rk4_cross_check(self, disk_system, disk_u0_seed1):
        a = integrate(disk_system, disk_u0_seed1, 0.05, 4.0,
                      method="expm_step")
        b = integrate(disk_system, disk_u0_seed1, 0.05, 4.0, method="rk4")
        rel = np.linalg.norm(a.states[-1] - b.states[-1]) \
            / np.linalg.norm(a.states[-1])
        assert rel < 1e-6

    def test_dt_refinement_expm(self, disk_system, disk_u0_seed1):
        a = integrate(disk_system, disk_u0_seed1, 0.05, 4.0)
        b = integrate(disk_system, disk_u0_seed1, 0.025, 4.0)
        rel = np.linalg.norm(a.states[-1] - b.states[-1]) \
            / np.linalg.norm(a.states[-1])
        assert rel < 1e-8

    def test_semigroup_property(self, disk_system, disk_u0_seed1):
        full = integrate(disk_system, disk_u0_seed1, 0.05, 4.0)
        half = integrate(disk_system, disk_u0_seed1, 0.05, 2.0)
        rest = integrate(disk_system, half.states[-1], 0.05, 2.0)
        rel = np.linalg.norm(rest.states[-1] - full.states[-1]) \
            / np.linalg.norm(full.states[-1])
        assert rel < 1e-9

    def test_leading_block_restart_consistency(self, disk_system, disk_gains,
                                               disk_traj_seed1):
        prop = scipy.linalg.expm(disk_gains.a_direct * 0.05)
        U = disk_traj_seed1.states[:, :5]
        for k in range(U.shape[0] - 1):
            assert np.linalg.norm(prop @ U[k] - U[k + 1]) < 1e-8

    def test_overflow_truncation(self):
        system = ClosedLoopSystem(generator=np.array([[10.0]]),
                                  beta=np.zeros((1, 1)),
                                  coupling=np.zeros((1, 1)),
                                  mu=np.array([10.0]), n_unstable=1)
        traj = integrate(system, [1.0], 0.5, 10.0)
        assert traj.truncated
        assert traj.times.size < 21
        assert np.max(np.abs(traj.states)) <= 1e12

    def test_bad_step_rejected(self, disk_system):
        with pytest.raises(ValueError):
            integrate(disk_system, np.zeros(300), 0.0, 1.0)
        with pytest.raises(ValueError):
            integrate(disk_system, np.zeros(300), 0.5, 0.1)

    def test_tail_energy_bounded_and_decaying(self, disk_traj_seed1):
        energy = tail_energy(disk_traj_seed1)
        assert np.all(np.isfinite(energy))
        assert energy[-1] < energy[0]


class TestOpenLoop:
    def test_unstable_mode_growth_rate(self, disk_modes):
        modes, _ = disk_modes
        u0 = np.zeros(300)
        u0[0] = 1.0
        traj = open_loop(modes, u0, 0.05, 4.0)
        amp, rate, res = decay_rate_fit(traj.times,
                                        np.abs(traj.states[:, 0]),
                                        (0.0, 4.0))
        assert abs(-rate - DISK_MU_1) < 1e-10
        assert res < 1e-10

    def test_stable_mode_monotone_decay(self, disk_modes):
        modes, _ = disk_modes
        u0 = np.zeros(300)
        u0[10] = 1.0
        traj = open_loop(modes, u0, 0.05, 2.0)
        vals = np.abs(traj.states[:, 10])
        assert np.all(np.diff(vals) < 0)

    def test_zero_initial_data(self, disk_modes):
        modes, _ = disk_modes
        traj = open_loop(modes, np.zeros(300), 0.05, 1.0)
        assert np.all(traj.states == 0.0)
        assert not traj.truncated

    def test_overflow_truncates_with_flag(self, disk_modes):
        modes, _ = disk_modes
        u0 = np.full(300, 1e6)
        traj = open_loop(modes, u0, 0.5, 50.0)
        assert traj.truncated


class TestReducedFit:
    def test_recovers_synthetic_generator(self):
        gen = np.array([[-1.0, 0.3], [0.2, -0.5]])
        system = ClosedLoopSystem(generator=gen, beta=np.zeros((2, 2)),
                                  coupling=np.zeros((2, 2)),
                                  mu=np.diag(gen), n_unstable=2)
        traj = integrate(system, [1.0, -0.7], 0.01, 4.0)
        fit = reduced_dynamics_fit(traj)
        assert np.max(np.abs(fit.matrix - gen)) < 1e-4
        assert fit.residual < 1e-10

    def test_disk_run_identifies_direct_generator(self, disk_system,
                                                  disk_gains, disk_u0_seed1):
        traj = integrate(disk_system, disk_u0_seed1, 0.01, 4.0)
        fit = reduced_dynamics_fit(traj, disk_gains)
        assert fit.residual < 1e-4
        assert fit.dist_direct < 0.1
        assert fit.dist_direct < 1e-2 * fit.dist_minus_s

    def test_zero_trajectory_rejected(self, disk_gains):
        traj = Trajectory(times=np.arange(20) * 0.05,
                          states=np.zeros((20, 300)),
                          boundary_data=np.zeros((20, 5)))
        with pytest.raises(InsufficientExcitationError):
            reduced_dynamics_fit(traj, disk_gains)


class TestInitialCondition:
    def test_zero_polynomial(self, disk, disk_modes):
        modes, _ = disk_modes
        spec = PolynomialSpec(degree=3, coefficients=(0.0,) * 10)
        coeffs = project_initial_condition(disk, modes, spec, seed=1)
        assert np.all(coeffs == 0.0)

    def test_constant_polynomial_is_radial(self, disk, disk_modes):
        modes, _ = disk_modes
        spec = PolynomialSpec(degree=0, coefficients=(1.0,))
        coeffs = project_initial_condition(disk, modes, spec, seed=1)
        for mode, c in zip(modes, coeffs):
            if mode.angular[0] >= 1:
                assert abs(c) < 1e-12

    def test_constant_polynomial_self_convergence(self, disk, disk_modes):
        modes, _ = disk_modes
        spec = PolynomialSpec(degree=0, coefficients=(1.0,))
        coarse = project_initial_condition(disk, modes[:30], spec, seed=1)
        fine = project_initial_condition(disk, modes[:30], spec, seed=1,
                                         refine=2)
        idx = 0  # mode (0, 1)
        assert abs(coarse[idx] - fine[idx]) < 1e-8 * abs(fine[idx])

    def test_seed_determinism(self, disk, disk_modes):
        modes, _ = disk_modes
        a = project_initial_condition(disk, modes[:20], PolynomialSpec(), 7)
        b = project_initial_condition(disk, modes[:20], PolynomialSpec(), 7)
        assert np.array_equal(a, b)
        c = project_initial_condition(disk, modes[:20], PolynomialSpec(), 8)
        assert not np.array_equal(a, c)

    def test_degree_cap(self, disk, disk_modes):
        modes, _ = disk_modes
        with pytest.raises(ValueError):
            project_initial_condition(disk, modes[:5],
                                      PolynomialSpec(degree=4), seed=1)

    def test_lcg_is_reproducible_and_in_range(self):
        a = lcg_uniform(42, 64)
        b = lcg_uniform(42, 64)
        assert np.array_equal(a, b)
        assert np.all((a >= -1.0) & (a < 1.0))

    def test_lcg_matches_documented_recurrence(self):
        # independent re-derivation of the documented generator
        mult, inc, mask = 6364136223846793005, 1442695040888963407, 2**64 - 1
        state = (42 * mult + inc) & mask
        expected = []
        for _ in range(8):
            state = (state * mult + inc) & mask
            expected.append(2.0 * ((state >> 11) / float(2**53)) - 1.0)
        assert np.array_equal(lcg_uniform(42, 8), np.array(expected))


class TestArtifacts:
    def test_trajectory_csv_format(self, disk_traj_seed1, tmp_path):
        path = tmp_path / "traj.csv"
        write_trajectory_csv(disk_traj_seed1, path)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["t", "u_1", "u_2"]
        assert header[6] == "tail_energy"
        assert header[7:] == [f"v_coeff_{i}" for i in range(1, 6)]
        assert len(lines) == 1 + disk_traj_seed1.times.size
        row = lines[1].split(",")
        assert float(row[0]) == 0.0
        assert float(row[1]) == disk_traj_seed1.states[0, 0]

    def test_snapshot_round_trip(self, disk_traj_seed1, tmp_path):
        path = tmp_path / "snap.bin"
        write_snapshots(disk_traj_seed1, path)
        raw = path.read_bytes()
        magic, version, n_sim, count = struct.unpack("<4sIII", raw[:16])
        assert magic == b"MSTB" and version == 1
        assert n_sim == 300 and count == disk_traj_seed1.times.size
        assert len(raw) == 16 + 8 * n_sim * count
        _, states = read_snapshots(path)
        assert np.array_equal(states, disk_traj_seed1.states)
