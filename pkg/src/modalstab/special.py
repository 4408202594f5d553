"""Cylindrical and spherical Bessel functions, their zeros, real spherical
harmonics, and quadrature rules.

Evaluators accept scalars or 1-D numpy arrays and are pure functions with no
global mutable state, so they are safe for concurrent use.

Bessel functions are computed by a short power series for very small
arguments and otherwise by backward (Miller) recurrence with on-the-fly
normalization: the Neumann sum J_0 + 2*sum J_{2k} = 1 for the cylindrical
family and sum (2l+1) j_l^2 = 1 for the spherical family.  Zeros are located
by a coarse sign-change scan followed by safeguarded Newton iterations.
"""

import math
from dataclasses import dataclass

import numpy as np

# Orders above this cap are outside the validated range of the recurrences.
MAX_ORDER = 60

_RESCALE = 1e-140
_SCAN_STEP = 0.5


class UnsupportedOrderError(ValueError):
    """Requested Bessel order / harmonic degree above the supported cap."""


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes (strictly increasing) and positive weights on a fixed interval."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))


def _check_order(order: int) -> None:
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    if order > MAX_ORDER:
        raise UnsupportedOrderError(
            f"order {order} exceeds the supported cap {MAX_ORDER}")


def _overflow_check_interval(n_start: int, x_min: float, decades: float) -> int:
    """Recurrence steps that can safely elapse between overflow checks.

    The unnormalized recurrence grows by at most ~2*n_start/x per step;
    `decades` is the headroom (in powers of ten) above the rescale threshold.
    """
    growth = 2.0 * n_start / max(x_min, 1e-6)
    return max(1, int(decades / math.log10(max(growth, 2.0))))


def bessel_j_all(m_max: int, x) -> np.ndarray:
    """All orders J_0(x) .. J_{m_max}(x); shape (m_max+1,) + shape of x."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).ravel()
    if (x < 0).any():
        raise ValueError("argument must be nonnegative")
    out = np.zeros((m_max + 1, x.size))
    tiny = x < 1e-6
    if tiny.any():
        xt = x[tiny]
        half = 0.5 * xt
        fact = 1.0
        for m in range(m_max + 1):
            if m > 0:
                fact *= m
            out[m, tiny] = half**m / fact * (1.0 - xt * xt / (4.0 * (m + 1)))
    big = ~tiny
    if big.any():
        xb = x[big]
        top = max(m_max, float(xb.max()))
        n_start = int(math.ceil(top)) + 20 + int(0.6 * top)
        check_every = _overflow_check_interval(n_start, float(xb.min()), 160.0)
        jp = np.zeros_like(xb)
        jc = np.full_like(xb, 1e-30)
        norm = np.zeros_like(xb)
        vals = np.zeros((m_max + 1, xb.size))
        for n in range(n_start, 0, -1):
            jm = (2.0 * n / xb) * jc - jp
            if n % check_every == 0:
                overflow = np.abs(jm) > 1.0 / _RESCALE
                if overflow.any():
                    jm = np.where(overflow, jm * _RESCALE, jm)
                    jc = np.where(overflow, jc * _RESCALE, jc)
                    norm = np.where(overflow, norm * _RESCALE, norm)
                    vals[:, overflow] *= _RESCALE
            jp = jc
            jc = jm
            if n - 1 <= m_max:
                vals[n - 1] = jc
            if (n - 1) % 2 == 0:
                norm += jc if n == 1 else 2.0 * jc
        vals /= norm
        out[:, big] = vals
    return out[:, 0] if scalar else out


def bessel_j(order: int, x):
    """Cylindrical Bessel function of the first kind J_order(x), x >= 0."""
    _check_order(order)
    return bessel_j_all(order, x)[order]


def spherical_j_all(l_max: int, x) -> np.ndarray:
    """All degrees j_0(x) .. j_{l_max}(x); shape (l_max+1,) + shape of x."""
    l_top = max(l_max, 1)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).ravel()
    if (x < 0).any():
        raise ValueError("argument must be nonnegative")
    out = np.zeros((l_top + 1, x.size))
    tiny = x < 1e-6
    if tiny.any():
        xt = x[tiny]
        dfact = 1.0
        for l in range(l_top + 1):
            dfact *= 2 * l + 1
            out[l, tiny] = xt**l / dfact * (1.0 - xt * xt / (2.0 * (2 * l + 3)))
    big = ~tiny
    if big.any():
        xb = x[big]
        top = max(l_top, float(xb.max()))
        n_start = int(math.ceil(top)) + 20 + int(0.6 * top)
        # the normalization sum is quadratic, so headroom is tighter here
        check_every = _overflow_check_interval(n_start, float(xb.min()), 12.0)
        jp = np.zeros_like(xb)
        jc = np.full_like(xb, 1e-30)
        norm = np.zeros_like(xb)
        vals = np.zeros((l_top + 1, xb.size))
        for n in range(n_start, 0, -1):
            jm = ((2.0 * n + 1.0) / xb) * jc - jp
            if n % check_every == 0:
                overflow = np.abs(jm) > 1.0 / _RESCALE
                if overflow.any():
                    jm = np.where(overflow, jm * _RESCALE, jm)
                    jc = np.where(overflow, jc * _RESCALE, jc)
                    norm = np.where(overflow, norm * _RESCALE**2, norm)
                    vals[:, overflow] *= _RESCALE
            jp = jc
            jc = jm
            if n - 1 <= l_top:
                vals[n - 1] = jc
            norm += (2 * (n - 1) + 1) * jc * jc
        vals /= np.sqrt(norm)
        # the quadratic normalization leaves the overall sign free; fix it
        # against whichever of j_0, j_1 is better conditioned at each point
        j0_ref = np.sin(xb) / xb
        j1_ref = np.sin(xb) / (xb * xb) - np.cos(xb) / xb
        use0 = np.abs(vals[0]) >= np.abs(vals[1])
        ref = np.where(use0, j0_ref, j1_ref)
        val = np.where(use0, vals[0], vals[1])
        vals *= np.where(ref * val >= 0.0, 1.0, -1.0)
        out[:, big] = vals
    out = out[: l_max + 1]
    return out[:, 0] if scalar else out


def spherical_bessel_j(degree: int, x):
    """Spherical Bessel function j_degree(x); j_0(0) = 1 (removable limit)."""
    _check_order(degree)
    return spherical_j_all(degree, x)[degree]


def _cyl_f_df(order: int, x: np.ndarray):
    vals = bessel_j_all(max(order, 1), x)
    f = vals[order]
    if order == 0:
        df = -vals[1]
    else:
        df = vals[order - 1] - (order / x) * f
    return f, df


def _sph_f_df(degree: int, x: np.ndarray):
    vals = spherical_j_all(max(degree, 1), x)
    f = vals[degree]
    if degree == 0:
        df = -vals[1]
    else:
        df = vals[degree - 1] - ((degree + 1) / x) * f
    return f, df


def _refine_zeros(f_df, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vector root refinement on sign-change brackets [lo, hi].

    Three bisection rounds shrink the brackets well inside the Newton basin
    of these simple oscillatory zeros; plain Newton then converges
    quadratically.  A bracketed bisection fallback guards the rare lane
    where Newton leaves its bracket.
    """
    a = lo.copy()
    b = hi.copy()
    fa, _ = f_df(a)
    for _ in range(3):
        x = 0.5 * (a + b)
        f, _ = f_df(x)
        neg_side = f * fa > 0
        a = np.where(neg_side, x, a)
        b = np.where(neg_side, b, x)
    x = 0.5 * (a + b)
    for _ in range(10):
        f, df = f_df(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / df
        x_new = x - step
        if np.all(np.abs(x_new - x) <= 1e-15 * np.maximum(1.0, x)):
            x = x_new
            break
        x = x_new
    stray = ~np.isfinite(x) | (x < lo) | (x > hi)
    if stray.any():
        aa, bb = lo[stray].copy(), hi[stray].copy()
        ffa, _ = f_df(aa)
        for _ in range(60):
            mid = 0.5 * (aa + bb)
            fm, _ = f_df(mid)
            neg_side = fm * ffa > 0
            aa = np.where(neg_side, mid, aa)
            bb = np.where(neg_side, bb, mid)
        x[stray] = 0.5 * (aa + bb)
    return x


def _zeros_by_scan(f_df, count: int, start: float) -> np.ndarray:
    """First `count` positive zeros of f, scanning upward from `start`."""
    zeros = []
    x_prev = start
    f_prev, _ = f_df(np.atleast_1d(x_prev))
    f_prev = float(f_prev[0])
    while len(zeros) < count:
        grid = x_prev + _SCAN_STEP * np.arange(1, 121)
        f_grid, _ = f_df(grid)
        f_all = np.concatenate([[f_prev], f_grid])
        x_all = np.concatenate([[x_prev], grid])
        change = np.nonzero(f_all[:-1] * f_all[1:] < 0)[0]
        if change.size:
            lo = x_all[change]
            hi = x_all[change + 1]
            zeros.extend(_refine_zeros(f_df, lo, hi).tolist())
        x_prev = float(grid[-1])
        f_prev = float(f_grid[-1])
    return np.array(zeros[:count])


def bessel_j_zeros(order: int, count: int) -> np.ndarray:
    """First `count` positive zeros of J_order, strictly increasing."""
    _check_order(order)
    if count < 1:
        raise ValueError("count must be >= 1")
    start = max(order, 1e-3)
    return _zeros_by_scan(lambda x: _cyl_f_df(order, x), count, start)


def bessel_j_zero(order: int, k: int) -> float:
    """k-th positive zero of J_order (k >= 1)."""
    return float(bessel_j_zeros(order, k)[k - 1])


def spherical_bessel_zeros(degree: int, count: int) -> np.ndarray:
    """First `count` positive zeros of j_degree, strictly increasing."""
    _check_order(degree)
    if count < 1:
        raise ValueError("count must be >= 1")
    start = max(degree, 1e-3)
    return _zeros_by_scan(lambda x: _sph_f_df(degree, x), count, start)


def spherical_bessel_zero(degree: int, k: int) -> float:
    """k-th positive zero of j_degree (k >= 1)."""
    return float(spherical_bessel_zeros(degree, k)[k - 1])


def normalized_legendre_table(l_max: int, cos_theta, sin_theta) -> np.ndarray:
    """Fully normalized associated Legendre values, no Condon-Shortley sign.

    Returns an array of shape (l_max+1, l_max+1) + shape of cos_theta with
    entry [l, m] = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(cos_theta) for
    m <= l, zero above the diagonal.
    """
    ct = np.atleast_1d(np.asarray(cos_theta, dtype=float))
    st = np.atleast_1d(np.asarray(sin_theta, dtype=float))
    p = np.zeros((l_max + 1, l_max + 1, ct.size))
    p[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, l_max + 1):
        p[m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * st * p[m - 1, m - 1]
    for m in range(l_max):
        p[m + 1, m] = math.sqrt(2 * m + 3.0) * ct * p[m, m]
    for m in range(l_max + 1):
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (ct * p[l - 1, m] - b * p[l - 2, m])
    return p


def real_spherical_harmonic(degree: int, order: int, theta, phi):
    """Real spherical harmonic Y_{l,m}(theta, phi), orthonormal on the unit
    sphere, Condon-Shortley-free.

    m > 0 pairs with cos(m phi), m < 0 with sin(|m| phi), m = 0 is zonal.
    """
    _check_order(degree)
    if abs(order) > degree:
        raise ValueError(f"|order| = {abs(order)} exceeds degree {degree}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    scalar = theta.ndim == 0 and phi.ndim == 0
    theta, phi = np.broadcast_arrays(np.atleast_1d(theta), np.atleast_1d(phi))
    table = normalized_legendre_table(degree, np.cos(theta).ravel(),
                                      np.sin(theta).ravel())
    plm = table[degree, abs(order)]
    if order == 0:
        val = plm
    elif order > 0:
        val = math.sqrt(2.0) * plm * np.cos(order * phi.ravel())
    else:
        val = math.sqrt(2.0) * plm * np.sin(-order * phi.ravel())
    val = val.reshape(theta.shape)
    return float(val[0]) if scalar else val


def quadrature_rule(kind: str, n: int, interval) -> QuadratureRule:
    """Quadrature rule on `interval`.

    gauss_legendre is exact for polynomials of degree <= 2n-1;
    periodic_trapezoid (n uniform nodes, right endpoint omitted) is exact
    for trigonometric polynomials of degree < n on a full period.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = float(interval[0]), float(interval[1])
    if kind == "gauss_legendre":
        x, w = np.polynomial.legendre.leggauss(n)
        nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
        weights = 0.5 * (b - a) * w
    elif kind == "periodic_trapezoid":
        nodes = a + (b - a) * np.arange(n) / n
        weights = np.full(n, (b - a) / n)
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    return QuadratureRule(nodes=nodes, weights=weights)
