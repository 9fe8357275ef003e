"""Independent reference computations used by the tests.

Nothing here imports the package's numerical kernels; each oracle is a
direct, slow evaluation of the defining formula.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def fractional_scalar(poly, omega, s, b, xi, dps=40):
    """``(a(xi) + omega)^s + b(xi)`` for scalar ``xi`` in high precision.

    ``poly`` and ``b`` map exponents to real coefficients (d = 1).
    """
    mpmath.mp.dps = dps
    x = mpmath.mpf(xi)
    a = sum(mpmath.mpf(cf) * x**k for k, cf in poly.items()) + omega
    out = mpmath.power(a, mpmath.mpf(s)) if a != 0 else mpmath.mpf(0)
    out += sum(mpmath.mpf(cf) * x**k for k, cf in b.items())
    return complex(out)


def minimal_omega_scan(coeffs, c, m, xi_samples):
    """``max_k (c |xi_k|^m - Re a(xi_k))`` by an explicit loop (d = 1)."""
    best = -math.inf
    for xi in xi_samples:
        a = sum(cf * xi**k for k, cf in coeffs.items())
        best = max(best, c * abs(xi) ** m - complex(a).real)
    return best


def direct_dft_1d(values, ell):
    """Continuum-normalized transform ``h sum_j f(x_j) e^{-i xi_k x_j}`` in FFT order."""
    n = len(values)
    h = ell / n
    x = np.arange(n) * h
    k = np.fft.fftfreq(n, d=1.0 / n)
    xi = 2 * np.pi * k / ell
    out = np.empty(n, complex)
    for i in range(n):
        out[i] = h * sum(values[j] * np.exp(-1j * xi[i] * x[j]) for j in range(n))
    return out


def gaussian_l2_norm(width=1.0, d=1):
    """``||exp(-|x|^2 / width^2)||_{L_2(R^d)}``."""
    return (math.pi * width**2 / 2) ** (d / 4)


def brute_force_intersections(mask, h, cube_cells):
    """Intersection counts of ``mask`` with every integer-cell box translate (periodic)."""
    mask = np.asarray(mask, bool)
    shape = mask.shape
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        total = 0
        for off in np.ndindex(*cube_cells):
            pos = tuple((i + o) % n for i, o, n in zip(idx, off, shape))
            total += mask[pos]
        out[idx] = total * h ** mask.ndim
    return out


def fractional_box_intersection_1d(mask, h, side):
    """Exact ``|E cap (x, x + side)|`` at grid translates ``x`` for a 1-D cell mask."""
    n = len(mask)
    out = np.zeros(n)
    for i in range(n):
        remaining = side
        j = 0
        total = 0.0
        while remaining > 1e-15:
            piece = min(h, remaining)
            total += piece * mask[(i + j) % n]
            remaining -= piece
            j += 1
        out[i] = total
    return out


def band_limited_c1_dense(mask, n, ell, lam):
    """``(1 - max eig of the band-limited compression of 1_{E^c})^{-1/2}`` by dense ``eigh``."""
    k = np.arange(-n // 2, n // 2)
    xi = 2 * np.pi * k / ell
    keep = k[np.abs(xi) <= lam]
    x = np.arange(n) * ell / n
    basis = np.exp(1j * np.outer(x, 2 * np.pi * keep / ell)) / math.sqrt(n)
    comp = ~np.asarray(mask, bool)
    gram = basis.conj().T @ (comp[:, None] * basis)
    mu = float(np.linalg.eigvalsh(gram).max())
    return 1.0 / math.sqrt(1.0 - mu)


def heat_remainder_norm(lam, t, n, ell, eta):
    """``max_k |(1 - eta(|xi_k|/lam)) e^{-t xi_k^2}|`` by an explicit loop."""
    best = 0.0
    for k in range(-n // 2, n // 2):
        xi = 2 * math.pi * k / ell
        val = abs((1 - eta(abs(xi) / lam)) * math.exp(-t * xi * xi))
        best = max(best, val)
    return best


def eta_reference(r):
    """Smooth step: 1 on ``[0, 1/2]``, 0 on ``[1, inf)``."""
    if r <= 0.5:
        return 1.0
    if r >= 1:
        return 0.0
    f = lambda t: math.exp(-1.0 / t) if t > 0 else 0.0  # noqa: E731
    return f(2 - 2 * r) / (f(2 - 2 * r) + f(2 * r - 1))


def exp_integral(a, b, rate):
    """``int_a^b exp(-rate t) dt``."""
    return (math.exp(-rate * a) - math.exp(-rate * b)) / rate


def exp_lr_norm(T0, rate, r):
    """``||exp(-rate t)||_{L_r(0, T0)}``."""
    return ((1 - math.exp(-rate * r * T0)) / (rate * r)) ** (1.0 / r)


def scalar_primal_l2(C, T):
    """``A = 0, B = 1``: ``min |1 + sum w_j u_j|`` over ``||u||_{L_2} <= C`` is ``max(0, 1 - C sqrt T)``."""
    return max(0.0, 1.0 - C * math.sqrt(T))


def scalar_primal_trapezoid(a, b, T, n_t, C):
    """``x' = -a x + b u`` on ``R``, ``r = 2``: ``max(0, e^{-aT} - C |b| (sum_j w_j e^{-2a(T - t_j)})^{1/2})``.

    The reachable set of the trapezoid-discretized control map under
    ``sum_j w_j u_j^2 <= C^2`` is an interval whose half-width follows from
    Cauchy-Schwarz in the weighted inner product.
    """
    t = np.linspace(0.0, T, n_t)
    w = np.full(n_t, T / (n_t - 1))
    w[[0, -1]] *= 0.5
    reach = C * abs(b) * math.sqrt(float(np.sum(w * np.exp(-2 * a * (T - t)))))
    return max(0.0, math.exp(-a * T) - reach)
