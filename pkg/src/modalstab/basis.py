"""Dirichlet eigenpairs of Delta + lambda on the disk and ball.

Modes are enumerated in descending eigenvalue order with deterministic
tie-breaking, L2-normalized with the radial factor positive near the origin,
and carry closed-form normal-trace amplitudes so that boundary Gram entries
reduce to products of per-mode constants.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .special import (
    MAX_ORDER,
    bessel_j_all,
    bessel_j_zeros,
    normalized_legendre_table,
    quadrature_rule,
    spherical_bessel_zeros,
    spherical_j_all,
)


class CapacityError(ValueError):
    """Mode enumeration would need Bessel orders above the supported cap."""


class DomainError(ValueError):
    """Point outside the closed domain / off the boundary."""


@dataclass(frozen=True)
class Domain:
    shape: str          # "disk" (2-D) or "ball" (3-D)
    radius: float

    def __post_init__(self):
        if self.shape not in ("disk", "ball"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return 2 if self.shape == "disk" else 3


@dataclass(frozen=True)
class EigenMode:
    """One Dirichlet eigenpair of Delta + lambda.

    angular is (m, parity) with parity in {"cos", "sin"} on the disk and
    (l, m) with |m| <= l on the ball; k is the radial zero rank; alpha the
    k-th positive zero of the radial Bessel factor; kappa = (alpha/R)^2 the
    Dirichlet Laplacian eigenvalue; mu = lambda - kappa; norm_const the
    L2(Omega) normalization; trace_amp the signed amplitude of the outward
    normal derivative against the boundary-orthonormal angular factor.
    """

    n: int
    angular: tuple
    k: int
    alpha: float
    kappa: float
    mu: float
    norm_const: float
    trace_amp: float


@dataclass(frozen=True)
class SpectrumSummary:
    n_unstable: int          # count of nonnegative mu
    n_sim: int
    eigenvalues: tuple


def _disk_candidates(n_sim: int):
    """All (alpha, angular, k) with the n_sim smallest alpha, deterministic
    order (alpha, m, cos before sin, k)."""
    cut = 2.0 * math.sqrt(n_sim) + 6.0
    while True:
        entries = []
        m = 0
        while True:
            if m > MAX_ORDER:
                raise CapacityError(
                    f"n_sim={n_sim} requires Bessel orders beyond {MAX_ORDER}")
            count = max(2, int(cut / math.pi - m / 2 + 2))
            zeros = bessel_j_zeros(m, count)
            while zeros[-1] <= cut:
                count *= 2
                zeros = bessel_j_zeros(m, count)
            zeros = zeros[zeros <= cut]
            if zeros.size == 0:
                break
            for k, z in enumerate(zeros, start=1):
                if m == 0:
                    entries.append((float(z), (0, "cos"), k))
                else:
                    entries.append((float(z), (m, "cos"), k))
                    entries.append((float(z), (m, "sin"), k))
            m += 1
        if len(entries) >= n_sim:
            entries.sort(key=lambda e: (e[0], e[1][0],
                                        0 if e[1][1] == "cos" else 1, e[2]))
            return entries[:n_sim]
        cut *= 1.25


def _ball_candidates(n_sim: int):
    """Ball analog; multiplicity 2l+1, order (alpha, l, m ascending, k)."""
    cut = (4.5 * math.pi * n_sim) ** (1.0 / 3.0) + 4.0
    while True:
        entries = []
        l = 0
        while True:
            if l > MAX_ORDER:
                raise CapacityError(
                    f"n_sim={n_sim} requires spherical degrees beyond {MAX_ORDER}")
            count = max(2, int(cut / math.pi - l / 2 + 2))
            zeros = spherical_bessel_zeros(l, count)
            while zeros[-1] <= cut:
                count *= 2
                zeros = spherical_bessel_zeros(l, count)
            zeros = zeros[zeros <= cut]
            if zeros.size == 0:
                break
            for k, z in enumerate(zeros, start=1):
                for m in range(-l, l + 1):
                    entries.append((float(z), (l, m), k))
            l += 1
        if len(entries) >= n_sim:
            entries.sort(key=lambda e: (e[0], e[1][0], e[1][1], e[2]))
            return entries[:n_sim]
        cut *= 1.25


def enumerate_modes(domain: Domain, lam: float, n_sim: int):
    """Leading n_sim eigenpairs sorted by descending mu = lambda - kappa.

    Returns (modes, SpectrumSummary).  The candidate pool always holds
    complete degenerate multiplets; the final cut keeps exactly n_sim modes
    in the deterministic tie-break order, so the trailing multiplet may be
    kept only partially.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    R = domain.radius
    if domain.shape == "disk":
        cands = _disk_candidates(n_sim)
    else:
        cands = _ball_candidates(n_sim)

    trace_scale = math.sqrt(2.0 / R**3)
    modes = []
    for n, (alpha, angular, k) in enumerate(cands, start=1):
        kappa = (alpha / R) ** 2
        mu = lam - kappa
        if domain.shape == "disk":
            m = angular[0]
            j_next = float(bessel_j_all(m + 1, alpha)[m + 1])
            if m == 0:
                norm_const = 1.0 / (math.sqrt(math.pi) * R * abs(j_next))
            else:
                norm_const = math.sqrt(2.0) / (math.sqrt(math.pi) * R * abs(j_next))
        else:
            l = angular[0]
            j_next = float(spherical_j_all(l + 1, alpha)[l + 1])
            norm_const = trace_scale / abs(j_next)
        trace_amp = (-1.0) ** k * alpha * trace_scale
        modes.append(EigenMode(n=n, angular=angular, k=k, alpha=alpha,
                               kappa=kappa, mu=mu, norm_const=norm_const,
                               trace_amp=trace_amp))
    mus = tuple(mode.mu for mode in modes)
    n_unstable = int(sum(1 for mu in mus if mu >= 0.0))
    return modes, SpectrumSummary(n_unstable=n_unstable, n_sim=n_sim,
                                  eigenvalues=mus)


def count_unstable(modes) -> int:
    return int(sum(1 for mode in modes if mode.mu >= 0.0))


def _disk_angular(mode: EigenMode, theta):
    m, parity = mode.angular
    if m == 0:
        return np.ones_like(np.asarray(theta, dtype=float))
    return np.cos(m * theta) if parity == "cos" else np.sin(m * theta)


def _disk_angular_scalar(mode: EigenMode, theta: float) -> float:
    m, parity = mode.angular
    if m == 0:
        return 1.0
    return math.cos(m * theta) if parity == "cos" else math.sin(m * theta)


def _ball_harmonic_scalar(mode: EigenMode, theta: float, phi: float) -> float:
    return float(np.ravel(_ball_harmonic(mode, theta, phi))[0])


def _ball_harmonic(mode: EigenMode, theta, phi):
    l, m = mode.angular
    table = normalized_legendre_table(l, np.cos(theta), np.sin(theta))
    plm = table[l, abs(m)]
    if m == 0:
        return plm
    if m > 0:
        return math.sqrt(2.0) * plm * np.cos(m * np.asarray(phi, dtype=float))
    return math.sqrt(2.0) * plm * np.sin(-m * np.asarray(phi, dtype=float))


def eval_mode(mode: EigenMode, domain: Domain, point) -> float:
    """Value of the L2-normalized eigenfunction at a point of the closure."""
    p = np.asarray(point, dtype=float)
    R = domain.radius
    r = float(np.linalg.norm(p))
    if r > R * (1.0 + 1e-12):
        raise DomainError(f"point at radius {r} outside closure (R={R})")
    if domain.shape == "disk":
        m = mode.angular[0]
        radial = float(bessel_j_all(m, mode.alpha * r / R)[m])
        theta = math.atan2(p[1], p[0])
        return mode.norm_const * radial * _disk_angular_scalar(mode, theta)
    l = mode.angular[0]
    radial = float(spherical_j_all(l, mode.alpha * r / R)[l])
    theta = math.acos(p[2] / r) if r > 0 else 0.0
    phi = math.atan2(p[1], p[0])
    return mode.norm_const * radial * _ball_harmonic_scalar(mode, theta, phi)


def boundary_angular_factor(mode: EigenMode, domain: Domain, point) -> float:
    """L2(boundary)-orthonormal angular factor of the mode at a boundary
    point; the normal trace is trace_amp times this value."""
    p = np.asarray(point, dtype=float)
    R = domain.radius
    r = float(np.linalg.norm(p))
    if abs(r - R) > 1e-9 * R:
        raise DomainError(f"point at radius {r} is not on the boundary (R={R})")
    if domain.shape == "disk":
        m = mode.angular[0]
        theta = math.atan2(p[1], p[0])
        scale = 1.0 / math.sqrt(2.0 * math.pi * R) if m == 0 \
            else 1.0 / math.sqrt(math.pi * R)
        return scale * _disk_angular_scalar(mode, theta)
    theta = math.acos(min(1.0, max(-1.0, p[2] / r)))
    phi = math.atan2(p[1], p[0])
    return _ball_harmonic_scalar(mode, theta, phi) / R


def normal_trace(mode: EigenMode, domain: Domain, point) -> float:
    """Outward normal derivative of the eigenfunction at a boundary point."""
    return mode.trace_amp * boundary_angular_factor(mode, domain, point)


def boundary_inner(mode_i: EigenMode, mode_j: EigenMode, domain: Domain = None) -> float:
    """L2(boundary) inner product of the two normal traces (closed form)."""
    if mode_i.angular != mode_j.angular:
        return 0.0
    return mode_i.trace_amp * mode_j.trace_amp


def boundary_gram(row_modes, col_modes, domain: Domain = None) -> np.ndarray:
    """Matrix of boundary_inner over row_modes x col_modes."""
    amps_r = np.array([m.trace_amp for m in row_modes])
    amps_c = np.array([m.trace_amp for m in col_modes])
    match = np.array([[mi.angular == mj.angular for mj in col_modes]
                      for mi in row_modes])
    return np.outer(amps_r, amps_c) * match


def interior_quadrature(domain: Domain, modes, refine: int = 1):
    """Tensor quadrature grids sized for the given mode table.

    Radial Gauss-Legendre with n = 8*k_max + 32 nodes and azimuthal
    trapezoid with n = 4*m_max + 16 nodes (polar Gauss-Legendre in cos(theta)
    with 2*l_max + 16 nodes on the ball); `refine` scales all sizes.
    """
    k_max = max(mode.k for mode in modes)
    ang_max = max(mode.angular[0] for mode in modes)
    R = domain.radius
    n_r = (8 * k_max + 32) * refine
    radial = quadrature_rule("gauss_legendre", n_r, (0.0, R))
    n_phi = (4 * ang_max + 16) * refine
    azimuth = quadrature_rule("periodic_trapezoid", n_phi, (0.0, 2.0 * math.pi))
    if domain.shape == "disk":
        return radial, azimuth
    polar = quadrature_rule("gauss_legendre", (2 * ang_max + 16) * refine,
                            (-1.0, 1.0))
    return radial, polar, azimuth


def _radial_values(modes, domain: Domain, r: np.ndarray) -> np.ndarray:
    """norm_const * (radial Bessel factor) for each mode at radii r."""
    R = domain.radius
    out = np.empty((len(modes), r.size))
    for i, mode in enumerate(modes):
        order = mode.angular[0]
        x = mode.alpha * r / R
        if domain.shape == "disk":
            out[i] = mode.norm_const * bessel_j_all(order, x)[order]
        else:
            out[i] = mode.norm_const * spherical_j_all(order, x)[order]
    return out


def mode_values(modes, domain: Domain, points: np.ndarray) -> np.ndarray:
    """Eigenfunction values at Cartesian points; shape (n_modes, n_points)."""
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=1)
    radial = _radial_values(modes, domain, r)
    if domain.shape == "disk":
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        ang_cache = {}
        for i, mode in enumerate(modes):
            key = mode.angular
            if key not in ang_cache:
                m, parity = key
                if m == 0:
                    ang_cache[key] = np.ones_like(theta)
                else:
                    ang_cache[key] = np.cos(m * theta) if parity == "cos" \
                        else np.sin(m * theta)
            radial[i] *= ang_cache[key]
        return radial
    with np.errstate(invalid="ignore", divide="ignore"):
        ct = np.where(r > 0, pts[:, 2] / np.where(r > 0, r, 1.0), 1.0)
    ct = np.clip(ct, -1.0, 1.0)
    st = np.sqrt(1.0 - ct * ct)
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    l_max = max(mode.angular[0] for mode in modes)
    table = normalized_legendre_table(l_max, ct, st)
    sqrt2 = math.sqrt(2.0)
    trig_cache = {}
    for i, mode in enumerate(modes):
        l, m = mode.angular
        if m == 0:
            radial[i] *= table[l, 0]
        else:
            if m not in trig_cache:
                trig_cache[m] = np.cos(m * phi) if m > 0 else np.sin(-m * phi)
            radial[i] *= sqrt2 * table[l, abs(m)] * trig_cache[m]
    return radial


def project_function(f, modes, domain: Domain, refine: int = 1) -> np.ndarray:
    """Coefficients <f, phi_n> over the mode table by tensor quadrature.

    f must be callable on Cartesian coordinate arrays: f(x, y) on the disk,
    f(x, y, z) on the ball.
    """
    R = domain.radius
    if domain.shape == "disk":
        radial, azimuth = interior_quadrature(domain, modes, refine)
        r = radial.nodes
        th = azimuth.nodes
        rr, tt = np.meshgrid(r, th, indexing="ij")
        fvals = np.asarray(f(rr * np.cos(tt), rr * np.sin(tt)), dtype=float)
        m_max = max(mode.angular[0] for mode in modes)
        orders = np.arange(m_max + 1)
        cos_t = np.cos(np.outer(orders, th)) * azimuth.weights  # (m_max+1, n_phi)
        sin_t = np.sin(np.outer(orders, th)) * azimuth.weights
        f_cos = fvals @ cos_t.T   # (n_r, m_max+1)
        f_sin = fvals @ sin_t.T
        rad_vals = _radial_values(modes, domain, r)
        w_r = radial.weights * r
        coeffs = np.empty(len(modes))
        for i, mode in enumerate(modes):
            m, parity = mode.angular
            ang_slice = f_cos[:, m] if parity == "cos" else f_sin[:, m]
            coeffs[i] = np.dot(rad_vals[i] * w_r, ang_slice)
        return coeffs

    radial, polar, azimuth = interior_quadrature(domain, modes, refine)
    r = radial.nodes
    ct = polar.nodes
    st = np.sqrt(1.0 - ct * ct)
    ph = azimuth.nodes
    rr = r[:, None, None]
    stt = st[None, :, None]
    ctt = ct[None, :, None]
    phh = ph[None, None, :]
    x = rr * stt * np.cos(phh)
    y = rr * stt * np.sin(phh)
    z = rr * ctt * np.ones_like(phh)
    fvals = np.asarray(f(x, y, z), dtype=float).reshape(r.size, -1)
    l_max = max(mode.angular[0] for mode in modes)
    harmonics, index = _harmonic_grid(l_max, ct, st, ph)
    w_ang = np.outer(polar.weights, azimuth.weights).ravel()
    f_ang = fvals @ (harmonics * w_ang).T   # (n_r, n_harmonics)
    rad_vals = _radial_values(modes, domain, r)
    w_r = radial.weights * r * r
    coeffs = np.empty(len(modes))
    for i, mode in enumerate(modes):
        coeffs[i] = np.dot(rad_vals[i] * w_r, f_ang[:, index[mode.angular]])
    return coeffs


def _harmonic_grid(l_max: int, ct: np.ndarray, st: np.ndarray, ph: np.ndarray):
    """Real harmonics on a (cos theta) x (phi) tensor grid, flattened."""
    table = normalized_legendre_table(l_max, ct, st)
    sqrt2 = math.sqrt(2.0)
    rows = []
    index = {}
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            plm = table[l, abs(m)][:, None]
            if m == 0:
                vals = np.broadcast_to(plm, (ct.size, ph.size))
            elif m > 0:
                vals = sqrt2 * plm * np.cos(m * ph)[None, :]
            else:
                vals = sqrt2 * plm * np.sin(-m * ph)[None, :]
            index[(l, m)] = len(rows)
            rows.append(vals.ravel())
    return np.array(rows), index


def export_mode_table(modes, path) -> None:
    """Write the mode table as CSV: n, ang1, ang2, k, alpha, kappa, mu,
    norm_const, trace_amp (ang1/ang2 are m/parity on the disk, l/m on the
    ball)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "ang1", "ang2", "k", "alpha", "kappa", "mu",
                         "norm_const", "trace_amp"])
        for mode in modes:
            writer.writerow([mode.n, mode.angular[0], mode.angular[1], mode.k,
                             format(mode.alpha, ".17g"),
                             format(mode.kappa, ".17g"),
                             format(mode.mu, ".17g"),
                             format(mode.norm_const, ".17g"),
                             format(mode.trace_amp, ".17g")])
