"""Spectral Galerkin simulation of the boundary-controlled heat equation.

Projecting the PDE on the retained eigenfunctions through Green's identity
gives the exact modal ODE

    du_n/dt = mu_n u_n - <v, T_n(phi_n)>_boundary,

so the closed-loop generator is diag(mu) minus a rank-N coupling through the
extended boundary Gram matrix, acting on the leading N coordinates only.
The loop is LTI; one matrix exponential per run samples it exactly, with a
classical Runge-Kutta integrator retained as an independent cross-check.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import boundary_gram, count_unstable, project_function
from .controller import GainSet, control_map
from .special import quadrature_rule, normalized_legendre_table

OVERFLOW_LIMIT = 1e12
SNAPSHOT_MAGIC = b"MSTB"
SNAPSHOT_VERSION = 1


class ConsistencyError(ValueError):
    """Mode table and gain set were not built together."""


class InsufficientExcitationError(ValueError):
    """Trajectory carries no usable signal for system identification."""


@dataclass(frozen=True)
class ClosedLoopSystem:
    generator: np.ndarray     # n_sim x n_sim
    beta: np.ndarray          # n_sim x N extended boundary Gram
    coupling: np.ndarray      # N x N map from U to trace coefficients of v
    mu: np.ndarray
    n_unstable: int


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray        # (n_times, n_sim)
    boundary_data: np.ndarray  # (n_times, N) trace coefficients of v
    truncated: bool = False


@dataclass(frozen=True)
class PolynomialSpec:
    """Low-degree polynomial factor of the initial condition.

    With explicit coefficients, they apply to monomials x^i y^j (z^k)
    ordered by total degree then lexicographically by exponent tuple.
    Otherwise coefficients are drawn uniformly from [-1, 1] by the seeded
    generator below.
    """

    degree: int = 3
    coefficients: tuple = None


@dataclass(frozen=True)
class ReducedFit:
    matrix: np.ndarray
    residual: float
    dist_direct: float = None
    dist_minus_s: float = None


_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_LCG_MASK = (1 << 64) - 1


def lcg_uniform(seed: int, count: int) -> np.ndarray:
    """Deterministic uniforms in [-1, 1].

    64-bit linear congruential generator x <- (6364136223846793005 x +
    1442695040888963407) mod 2^64, state seeded with one warm-up step from
    the given integer; each draw maps the top 53 bits to [0, 1) and then
    affinely to [-1, 1].  Bit-reproducible across platforms.
    """
    state = (int(seed) * _LCG_MULT + _LCG_INC) & _LCG_MASK
    out = np.empty(count)
    for i in range(count):
        state = (state * _LCG_MULT + _LCG_INC) & _LCG_MASK
        out[i] = 2.0 * ((state >> 11) / float(1 << 53)) - 1.0
    return out


def _monomial_exponents(dim: int, degree: int):
    exps = []
    for total in range(degree + 1):
        combos = []
        if dim == 2:
            for i in range(total + 1):
                combos.append((i, total - i))
        else:
            for i in range(total + 1):
                for j in range(total - i + 1):
                    combos.append((i, j, total - i - j))
        exps.extend(sorted(combos))
    return exps


def initial_condition_field(domain, spec: PolynomialSpec, seed: int):
    """(R^2 - |x|^2) * p(x) with p the (possibly seeded random) polynomial.

    Returns a callable on Cartesian coordinate arrays.
    """
    if spec.degree > 3:
        raise ValueError("polynomial degree must be <= 3")
    exps = _monomial_exponents(domain.dim, spec.degree)
    if spec.coefficients is not None:
        coeffs = np.asarray(spec.coefficients, dtype=float)
        if coeffs.size != len(exps):
            raise ValueError(
                f"expected {len(exps)} coefficients, got {coeffs.size}")
    else:
        coeffs = lcg_uniform(seed, len(exps))
    r2 = domain.radius**2

    if domain.dim == 2:
        def field(x, y):
            poly = np.zeros_like(np.asarray(x, dtype=float))
            for c, (i, j) in zip(coeffs, exps):
                poly += c * x**i * y**j
            return (r2 - (x * x + y * y)) * poly
    else:
        def field(x, y, z):
            poly = np.zeros_like(np.asarray(x, dtype=float))
            for c, (i, j, k) in zip(coeffs, exps):
                poly += c * x**i * y**j * z**k
            return (r2 - (x * x + y * y + z * z)) * poly
    return field


def project_initial_condition(domain, modes, polynomial_spec: PolynomialSpec,
                              seed: int, refine: int = 1) -> np.ndarray:
    """Quadrature projection of the bump-times-polynomial initial state."""
    field = initial_condition_field(domain, polynomial_spec, seed)
    return project_function(field, modes, domain, refine=refine)


def _beta_quadrature_entry(modes, domain, row: int, col: int) -> float:
    """Surface quadrature of <T_n(phi_col), T_n(phi_row)> for cross-checks."""
    mi, mj = modes[row], modes[col]
    R = domain.radius
    if domain.shape == "disk":
        rule = quadrature_rule("periodic_trapezoid",
                               4 * max(mi.angular[0], mj.angular[0]) + 16,
                               (0.0, 2.0 * np.pi))
        th = rule.nodes

        def ang(mode):
            m, parity = mode.angular
            if m == 0:
                return np.full_like(th, 1.0 / np.sqrt(2.0 * np.pi * R))
            base = np.cos(m * th) if parity == "cos" else np.sin(m * th)
            return base / np.sqrt(np.pi * R)
        vals = (mi.trace_amp * ang(mi)) * (mj.trace_amp * ang(mj))
        return float(np.dot(rule.weights, vals) * R)
    l_max = max(mi.angular[0], mj.angular[0])
    polar = quadrature_rule("gauss_legendre", 2 * l_max + 16, (-1.0, 1.0))
    azim = quadrature_rule("periodic_trapezoid", 4 * l_max + 16,
                           (0.0, 2.0 * np.pi))
    ct = polar.nodes
    st = np.sqrt(1.0 - ct * ct)
    table = normalized_legendre_table(l_max, ct, st)

    def ang(mode):
        l, m = mode.angular
        plm = table[l, abs(m)][:, None]
        if m == 0:
            vals = np.broadcast_to(plm, (ct.size, azim.nodes.size)).copy()
        elif m > 0:
            vals = np.sqrt(2.0) * plm * np.cos(m * azim.nodes)[None, :]
        else:
            vals = np.sqrt(2.0) * plm * np.sin(-m * azim.nodes)[None, :]
        return vals / R
    integrand = (mi.trace_amp * ang(mi)) * (mj.trace_amp * ang(mj))
    w = np.outer(polar.weights, azim.weights)
    return float(np.sum(w * integrand) * R * R)


def assemble_closed_loop(modes, gain_set: GainSet, domain,
                         cross_check: bool = True) -> ClosedLoopSystem:
    """Generator diag(mu) - beta C acting on the leading N coordinates.

    With gain_set None the loop is open (v = 0) and the generator is
    diagonal.  A deterministic 5 percent sample of beta entries is
    cross-checked against surface quadrature when requested.
    """
    mu = np.array([m.mu for m in modes])
    n_sim = len(modes)
    if gain_set is None:
        n = count_unstable(modes)
        return ClosedLoopSystem(generator=np.diag(mu),
                                beta=np.zeros((n_sim, n)),
                                coupling=np.zeros((n, n)),
                                mu=mu, n_unstable=n)
    n = gain_set.n_unstable
    if len(gain_set.modes) != n_sim or any(
            gm != tm for gm, tm in zip(gain_set.modes[:n], modes[:n])):
        raise ConsistencyError("gain set was synthesized over a different "
                               "mode table")
    beta = boundary_gram(modes, modes[:n])
    if cross_check:
        total = n_sim * n
        sample = max(1, total // 20)
        picks = lcg_uniform(12345, 2 * sample)
        for s in range(sample):
            row = int((picks[2 * s] + 1.0) / 2.0 * n_sim) % n_sim
            col = int((picks[2 * s + 1] + 1.0) / 2.0 * n) % n
            quad = _beta_quadrature_entry(modes, domain, row, col)
            if abs(quad - beta[row, col]) > 1e-9 * max(1.0, abs(quad)):
                raise ConsistencyError(
                    f"closed-form Gram entry ({row},{col})={beta[row, col]} "
                    f"disagrees with quadrature {quad}")
    coupling = control_map(gain_set)
    generator = np.diag(mu)
    generator[:, :n] -= beta @ coupling
    return ClosedLoopSystem(generator=generator, beta=beta,
                            coupling=coupling, mu=mu, n_unstable=n)


def _finalize(times, states, coupling, n, truncated) -> Trajectory:
    states = np.asarray(states)
    boundary = states[:, :n] @ coupling.T if coupling.size else \
        np.zeros((states.shape[0], n))
    return Trajectory(times=np.asarray(times), states=states,
                      boundary_data=boundary, truncated=truncated)


def integrate(system: ClosedLoopSystem, u0_coeffs, dt: float, horizon: float,
              method: str = "expm_step") -> Trajectory:
    """Propagate the linear system from the projected initial state.

    expm_step samples the exact flow with one scaling-and-squaring matrix
    exponential reused across steps; rk4 runs classical fourth-order steps
    with internal substepping sized to the spectral radius, as an
    independent check.  On overflow past 1e12 the trajectory is truncated at
    the last valid sample and flagged.
    """
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n_steps = int(round(horizon / dt))
    times = np.arange(n_steps + 1) * dt
    u0 = np.asarray(u0_coeffs, dtype=float)
    gen = system.generator
    states = [u0]
    truncated = False
    if method == "expm_step":
        prop = scipy.linalg.expm(gen * dt)

        def step(u):
            return prop @ u
    elif method == "rk4":
        radius_bound = float(np.max(np.abs(system.mu))
                             + np.linalg.norm(gen - np.diag(system.mu), "fro"))
        n_sub = max(1, int(np.ceil(dt * radius_bound / 0.5)))
        h = dt / n_sub

        def step(u):
            for _ in range(n_sub):
                k1 = gen @ u
                k2 = gen @ (u + 0.5 * h * k1)
                k3 = gen @ (u + 0.5 * h * k2)
                k4 = gen @ (u + h * k3)
                u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            return u
    else:
        raise ValueError(f"unknown method {method!r}")
    for _ in range(n_steps):
        nxt = step(states[-1])
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > OVERFLOW_LIMIT:
            truncated = True
            break
        states.append(nxt)
    times = times[: len(states)]
    return _finalize(times, states, system.coupling, system.n_unstable,
                     truncated)


def open_loop(modes, u0_coeffs, dt: float, horizon: float) -> Trajectory:
    """Exact uncontrolled evolution u_n(t) = u_n(0) exp(mu_n t)."""
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    mu = np.array([m.mu for m in modes])
    n = count_unstable(modes)
    n_steps = int(round(horizon / dt))
    times = np.arange(n_steps + 1) * dt
    u0 = np.asarray(u0_coeffs, dtype=float)
    states = [u0]
    truncated = False
    for t in times[1:]:
        nxt = u0 * np.exp(mu * t)
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > OVERFLOW_LIMIT:
            truncated = True
            break
        states.append(nxt)
    times = times[: len(states)]
    return _finalize(times, states, np.zeros((n, n)), n, truncated)


def reduced_dynamics_fit(trajectory: Trajectory,
                         gain_set: GainSet = None) -> ReducedFit:
    """Least-squares identification of the reduced generator from central
    differences of the leading coordinates; with a gain set, also reports
    spectral distances to both generator candidates.

    Degenerate eigenvalue pairs make some directions of a single trajectory
    proportional, so the fit is minimum-norm and the candidate distances are
    measured on the excited subspace (the row space of the samples), where
    the generator is identifiable.
    """
    times = np.asarray(trajectory.times)
    if times.size < 10:
        raise ValueError("need at least 10 samples")
    n = trajectory.boundary_data.shape[1]
    U = np.asarray(trajectory.states)[:, :n]
    if np.max(np.abs(U)) < 1e-12:
        raise InsufficientExcitationError(
            "leading coordinates below 1e-12 throughout")
    dt = float(times[1] - times[0])
    diffs = (U[2:] - U[:-2]) / (2.0 * dt)
    mids = U[1:-1]
    sol, _, _, _ = np.linalg.lstsq(mids, diffs, rcond=None)
    g = sol.T
    residual = float(np.linalg.norm(mids @ sol - diffs)
                     / max(np.linalg.norm(diffs), 1e-300))
    dist_direct = dist_minus_s = None
    if gain_set is not None:
        _, svals, vt = np.linalg.svd(mids, full_matrices=False)
        rank = int(np.sum(svals > svals[0] * 1e-10))
        basis = vt[:rank].T                      # excited subspace
        dist_direct = float(np.linalg.norm((g - gain_set.a_direct) @ basis, 2))
        dist_minus_s = float(np.linalg.norm((g + gain_set.s_total) @ basis, 2))
    return ReducedFit(matrix=g, residual=residual, dist_direct=dist_direct,
                      dist_minus_s=dist_minus_s)


def tail_energy(trajectory: Trajectory) -> np.ndarray:
    n = trajectory.boundary_data.shape[1]
    return np.sum(trajectory.states[:, n:] ** 2, axis=1)


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """CSV with header t, u_1..u_N, tail_energy, v_coeff_1..v_coeff_N."""
    n = trajectory.boundary_data.shape[1]
    tail = tail_energy(trajectory)
    with open(path, "w", newline="") as fh:
        header = (["t"] + [f"u_{i + 1}" for i in range(n)] + ["tail_energy"]
                  + [f"v_coeff_{i + 1}" for i in range(n)])
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(trajectory.times):
            row = ([format(t, ".17g")]
                   + [format(v, ".17g") for v in trajectory.states[k, :n]]
                   + [format(tail[k], ".17g")]
                   + [format(v, ".17g") for v in trajectory.boundary_data[k]])
            fh.write(",".join(row) + "\n")


def write_snapshots(trajectory: Trajectory, path) -> None:
    """Binary snapshots: 16-byte header (magic MSTB, version, n_sim, count,
    little-endian uint32) followed by the per-time coefficient vectors as
    little-endian float64."""
    states = np.asarray(trajectory.states, dtype="<f8")
    header = struct.pack("<4sIII", SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                         states.shape[1], states.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(states.tobytes())


def read_snapshots(path):
    """Inverse of write_snapshots; returns (version, states)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, n_sim, count = struct.unpack("<4sIII", raw[:16])
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    states = np.frombuffer(raw[16:], dtype="<f8").reshape(count, n_sim)
    return version, states
