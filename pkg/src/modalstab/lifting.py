"""Boundary-data lifting in modal coordinates.

For boundary data f and shift gamma, the lifted interior function is
represented by its eigenfunction coefficients d_n, which satisfy the exact
modal relations

    (gamma - mu_n) d_n = <f, T_n(phi_n)>   for the leading (mu_n >= 0) modes,
    (gamma + mu_n) d_n = <f, T_n(phi_n)>   for the remaining modes,

truncated to the retained mode table.  Boundary data is always given by its
coefficients against the normal-trace family of the leading modes, so the
right-hand sides reduce to rows of the extended boundary Gram matrix.
"""

from dataclasses import dataclass

import numpy as np

from .basis import boundary_gram, count_unstable

RESONANCE_TOL = 1e-8


class ResonanceError(ValueError):
    """gamma too close to a shifted eigenvalue; the modal solve is singular."""


class InsufficientDataError(ValueError):
    """Too few trajectory samples for a finite-difference check."""


@dataclass(frozen=True)
class BoundaryFunction:
    """f = sum_j coefficients[j] * T_n(phi_j) over the leading modes."""

    coefficients: np.ndarray


@dataclass(frozen=True)
class LiftingCoefficients:
    gamma: float
    d: np.ndarray


def lifting_denominators(gamma: float, modes) -> np.ndarray:
    """Per-mode solve denominators, with resonance guarding."""
    mu = np.array([m.mu for m in modes])
    n_unstable = count_unstable(modes)
    denom = np.empty(mu.size)
    denom[:n_unstable] = gamma - mu[:n_unstable]
    denom[n_unstable:] = gamma + mu[n_unstable:]
    offenders = np.nonzero(np.abs(denom) <= RESONANCE_TOL)[0]
    if offenders.size:
        n = int(offenders[0]) + 1
        raise ResonanceError(
            f"gamma={gamma} resonates with mode n={n} (mu={mu[n - 1]})")
    return denom


def lifting_coefficients(gamma: float, f: BoundaryFunction, modes,
                         domain=None) -> LiftingCoefficients:
    """Modal coefficients of the lifting of f, truncated to the mode table."""
    c = np.asarray(f.coefficients, dtype=float)
    n_unstable = count_unstable(modes)
    if c.size > n_unstable:
        raise ValueError(
            f"boundary data has {c.size} trace coefficients but only "
            f"{n_unstable} leading modes are available")
    denom = lifting_denominators(gamma, modes)
    beta = boundary_gram(modes, modes[: c.size])
    return LiftingCoefficients(gamma=gamma, d=(beta @ c) / denom)


def xi_coefficients(gain_set, U, i: int) -> LiftingCoefficients:
    """Lifting coefficients of the i-th homogenization term for state U,
    whose boundary data has trace coefficients M_{gamma_i} A U."""
    U = np.asarray(U, dtype=float)
    c = gain_set.m_list[i] * (gain_set.a_gain @ U)
    return lifting_coefficients(gain_set.gammas[i], BoundaryFunction(c),
                                gain_set.modes)


def lifting_h2_surrogate(coeffs: LiftingCoefficients, modes) -> float:
    """sqrt(sum (1 + mu_n^2) d_n^2), the modal quadratic-weight surrogate."""
    mu = np.array([m.mu for m in modes])
    return float(np.sqrt(np.sum((1.0 + mu * mu) * coeffs.d**2)))


def lifting_h2_full(coeffs: LiftingCoefficients, modes) -> float:
    """sqrt(sum (1 + kappa_n + kappa_n^2) d_n^2); the full modal variant,
    exact only for trace-zero truncations."""
    kappa = np.array([m.kappa for m in modes])
    return float(np.sqrt(np.sum((1.0 + kappa + kappa * kappa) * coeffs.d**2)))


def commutation_check(gain_set, trajectory, i: int, h: float) -> float:
    """Max deviation between the central difference of the lifted
    coefficients and the lifting of the central difference of the boundary
    data; exact up to arithmetic noise."""
    times = np.asarray(trajectory.times)
    if times.size < 3:
        raise InsufficientDataError("need at least 3 samples")
    dt = float(times[1] - times[0])
    if dt > h + 1e-12:
        raise ValueError(f"trajectory step {dt} exceeds requested h={h}")
    n = gain_set.n_unstable
    U = np.asarray(trajectory.states)[:, :n]
    worst = 0.0
    for k in range(1, times.size - 1):
        lhs = (xi_coefficients(gain_set, U[k + 1], i).d
               - xi_coefficients(gain_set, U[k - 1], i).d) / (2.0 * dt)
        dU = (U[k + 1] - U[k - 1]) / (2.0 * dt)
        rhs = xi_coefficients(gain_set, dU, i).d
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
