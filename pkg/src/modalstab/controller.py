"""Finite-dimensional gain synthesis for the leading (unstable) modes.

From the boundary Gram matrix B of the leading normal traces and shifts
gamma_1 < ... < gamma_N, the synthesis builds M_i = diag(1/(gamma_i - mu_n)),
B_i = M_i B M_i, the gain matrix A = (sum B_i)^{-1}, and two reduced
closed-loop generator candidates:

  * s_total = sum gamma_i B_i A, whose negative is the generator obtained
    after the algebraic simplification used in the gain design;
  * a_direct = A_o - B (sum M_i A), the generator obtained by projecting the
    controlled PDE directly through Green's identity.

They satisfy a_direct = 2 A_o - s_total exactly.  The simulator integrates
the direct (physical) generator; stability validation gates on its margin
while both are reported.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import boundary_gram, boundary_angular_factor, count_unstable

GAMMA_SEPARATION = 1e-8
COLLISION_NUDGE = 1e-6
MAX_CONDITION = 1e12


class SynthesisError(ValueError):
    """Gain synthesis failed (ill-conditioned or invalid shifts)."""


class GainScalingError(ValueError):
    """No tested scaling of the shifts reached the target margin."""


@dataclass(frozen=True)
class GainSet:
    gammas: tuple
    mu: np.ndarray            # leading eigenvalues mu_1..mu_N
    gram: np.ndarray          # B, boundary Gram of the leading traces
    m_list: tuple             # diagonals of M_{gamma_i}, each length N
    b_list: tuple             # B_i = M_i B M_i
    a_gain: np.ndarray        # A = (sum B_i)^{-1}
    s_total: np.ndarray       # sum gamma_i B_i A
    a_direct: np.ndarray      # A_o - B sum(M_i A)
    a_o: np.ndarray           # diag(mu)
    cond_sum_b: float
    modes: tuple              # full mode table the synthesis was built on

    @property
    def n_unstable(self) -> int:
        return len(self.gammas)


@dataclass(frozen=True)
class StabilityReport:
    margin_s: float           # max real part of eig(-s_total)
    margin_direct: float      # max real part of eig(a_direct)
    hurwitz_s: bool
    hurwitz_direct: bool
    c1_hat: float             # empirical transient constant of the direct loop
    sigma_hat: float          # decay rate used for c1_hat (0.95 * |margin|)


def build_gram(modes, domain=None) -> np.ndarray:
    """Boundary Gram matrix of the normal traces of the given modes."""
    if len(modes) < 1:
        raise ValueError("need at least one mode")
    gram = boundary_gram(modes, modes)
    return 0.5 * (gram + gram.T)


def hurwitz_margin(matrix) -> float:
    """Largest real part over the eigenvalues (dense solve); < 0 is Hurwitz."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has non-finite entries")
    return float(np.max(np.linalg.eigvals(matrix).real))


def synthesize(modes, gammas) -> GainSet:
    """Build all gain-set matrices over the leading modes of the table."""
    gammas = tuple(float(g) for g in gammas)
    n = len(gammas)
    if n < 1:
        raise SynthesisError("need at least one gamma")
    n_unstable = count_unstable(modes)
    if n != n_unstable:
        raise SynthesisError(
            f"{n} gammas supplied but the mode table has {n_unstable} "
            "nonnegative eigenvalues")
    if any(g2 <= g1 for g1, g2 in zip(gammas, gammas[1:])):
        raise SynthesisError("gammas must be strictly increasing")
    head = modes[:n]
    mu = np.array([m.mu for m in head])
    for g in gammas:
        gap = np.min(np.abs(g - mu))
        if gap <= GAMMA_SEPARATION:
            raise SynthesisError(
                f"gamma={g} within {gap:.2e} of a leading eigenvalue")
    gram = build_gram(head)
    m_list = tuple(1.0 / (g - mu) for g in gammas)
    b_list = tuple(np.outer(m, m) * gram for m in m_list)
    sum_b = np.sum(b_list, axis=0)
    cond = float(np.linalg.cond(sum_b))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SynthesisError(
            f"sum of B_i numerically singular (cond={cond:.3e}); "
            "choose larger or better separated gammas")
    a_gain = np.linalg.solve(sum_b, np.eye(n))
    s_total = np.zeros((n, n))
    c_total = np.zeros((n, n))
    for g, m, b in zip(gammas, m_list, b_list):
        s_total += g * (b @ a_gain)
        c_total += m[:, None] * a_gain
    a_o = np.diag(mu)
    a_direct = a_o - gram @ c_total
    return GainSet(gammas=gammas, mu=mu, gram=gram, m_list=m_list,
                   b_list=b_list, a_gain=a_gain, s_total=s_total,
                   a_direct=a_direct, a_o=a_o, cond_sum_b=cond,
                   modes=tuple(modes))


def control_map(gain_set: GainSet) -> np.ndarray:
    """sum_i M_i A: maps the leading coefficient vector U to the trace-family
    coefficients of the boundary input."""
    c = np.zeros_like(gain_set.a_gain)
    for m in gain_set.m_list:
        c += m[:, None] * gain_set.a_gain
    return c


def validate_gains(gain_set: GainSet, horizon: float = 4.0,
                   samples: int = 81) -> StabilityReport:
    """Hurwitz margins of both candidates plus the empirical transient
    constant sup_t ||exp(G t)|| e^{sigma_hat t} of the direct generator."""
    margin_s = hurwitz_margin(-gain_set.s_total)
    margin_direct = hurwitz_margin(gain_set.a_direct)
    sigma_hat = -margin_direct * 0.95
    c1 = 1.0
    for t in np.linspace(0.0, horizon, samples):
        prop = scipy.linalg.expm(gain_set.a_direct * t)
        c1 = max(c1, float(np.linalg.norm(prop, 2) * math.exp(sigma_hat * t)))
    return StabilityReport(margin_s=margin_s, margin_direct=margin_direct,
                           hurwitz_s=margin_s < 0.0,
                           hurwitz_direct=margin_direct < 0.0,
                           c1_hat=c1, sigma_hat=sigma_hat)


def nudge_gammas(gammas, mu) -> tuple:
    """Shift any gamma colliding with a leading eigenvalue by +1e-6."""
    out = []
    for g in gammas:
        g = float(g)
        while np.min(np.abs(g - mu)) <= GAMMA_SEPARATION:
            g += COLLISION_NUDGE
        out.append(g)
    return tuple(out)


def auto_scale_gains(modes, gammas0, target_margin: float) -> tuple:
    """Smallest power-of-two scaling of gammas0 whose direct margin meets
    target_margin; colliding shifts are nudged, never dropped."""
    if not target_margin < 0:
        raise ValueError("target_margin must be negative")
    mu = np.array([m.mu for m in modes[: len(tuple(gammas0))]])
    margins = []
    for p in range(11):
        scale = 2.0**p
        gammas = nudge_gammas([scale * g for g in gammas0], mu)
        try:
            gain_set = synthesize(modes, gammas)
        except SynthesisError:
            margins.append((scale, math.nan))
            continue
        margin = hurwitz_margin(gain_set.a_direct)
        margins.append((scale, margin))
        if margin <= target_margin:
            return gammas
    raise GainScalingError(
        f"no scaling up to 2^10 reached margin {target_margin}; "
        f"observed margins {margins}")


def boundary_control_eval(gain_set: GainSet, U, domain, point) -> float:
    """Boundary input value v(point) = sum_j c_j T_n(phi_j)(point) with
    c = (sum_i M_i A) U."""
    U = np.asarray(U, dtype=float)
    c = control_map(gain_set) @ U
    head = gain_set.modes[: gain_set.n_unstable]
    return float(sum(
        cj * mode.trace_amp * boundary_angular_factor(mode, domain, point)
        for cj, mode in zip(c, head)))


def _matrix_strings(matrix) -> list:
    return [[format(v, ".17g") for v in row] for row in np.asarray(matrix)]


def gain_set_to_json(gain_set: GainSet, report: StabilityReport) -> str:
    """Serialize gammas, B, A, margins, and conditioning as JSON with
    17-significant-digit decimal strings, row-major matrices."""
    payload = {
        "gammas": [format(g, ".17g") for g in gain_set.gammas],
        "mu": [format(v, ".17g") for v in gain_set.mu],
        "B": _matrix_strings(gain_set.gram),
        "A": _matrix_strings(gain_set.a_gain),
        "margin_direct": format(report.margin_direct, ".17g"),
        "margin_reduced_s": format(report.margin_s, ".17g"),
        "hurwitz_direct": report.hurwitz_direct,
        "hurwitz_reduced_s": report.hurwitz_s,
        "c1_hat": format(report.c1_hat, ".17g"),
        "sigma_hat": format(report.sigma_hat, ".17g"),
        "cond_sum_b": format(gain_set.cond_sum_b, ".17g"),
    }
    return json.dumps(payload, indent=2)
