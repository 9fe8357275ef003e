"""Strongly elliptic polynomial symbols and their perturbed fractional powers.

A polynomial symbol ``a(xi) = sum_alpha a_alpha xi^alpha`` is certified to be
strongly elliptic, ``Re a(xi) >= c |xi|^m - omega``, by scanning a finite set
of frequencies (in practice the frequency lattice of the simulation grid).
The fractional symbol is ``a_{s,b} = (a + omega)^s + b`` with the principal
branch of ``z -> z^s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BranchCutError, PreconditionError

MultiIndex = tuple[int, ...]


def _graded_lex_key(alpha: MultiIndex) -> tuple:
    return (sum(alpha), tuple(-a for a in alpha))


def _normalize_coefficients(
    coefficients: Mapping[Sequence[int], complex], dimension: int
) -> dict[MultiIndex, complex]:
    out: dict[MultiIndex, complex] = {}
    for alpha, value in coefficients.items():
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        if len(alpha) != dimension or any(a < 0 for a in alpha):
            raise PreconditionError(f"bad multi-index {alpha} for dimension {dimension}")
        out[alpha] = out.get(alpha, 0j) + complex(value)
    return dict(sorted(out.items(), key=lambda kv: _graded_lex_key(kv[0])))


def _as_points(xi, dimension: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if dimension == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    if xi.shape[-1] != dimension:
        raise PreconditionError(f"frequency has {xi.shape[-1]} components, expected {dimension}")
    return xi


def _monomial_sum(coefficients: Mapping[MultiIndex, complex], xi: np.ndarray) -> np.ndarray:
    out = np.zeros(xi.shape[:-1], dtype=complex)
    for alpha, coeff in coefficients.items():
        if coeff == 0:
            continue
        term = np.full(xi.shape[:-1], coeff, dtype=complex)
        for axis, power in enumerate(alpha):
            if power:
                term = term * xi[..., axis] ** power
        out = out + term
    return out


def frequency_modulus(xi, dimension: int) -> np.ndarray:
    """Euclidean norm ``|xi|`` over the last axis."""
    xi = _as_points(xi, dimension)
    if dimension == 1:
        return np.abs(xi[..., 0])
    return np.sqrt(np.sum(xi * xi, axis=-1))


def _modulus_power(xi: np.ndarray, exponent: float) -> np.ndarray:
    # (sum xi^2)^(exponent/2) keeps even integer powers exact
    sq = np.sum(xi * xi, axis=-1)
    return sq ** (exponent / 2.0)


@dataclass(frozen=True)
class PolynomialSymbol:
    """Polynomial ``a(xi) = sum_{|alpha| <= m} a_alpha xi^alpha`` on ``R^d``.

    Coefficients are keyed by multi-index and kept in graded lexicographic
    order.
    """

    dimension: int
    degree: int
    coefficients: Mapping[MultiIndex, complex]

    def __post_init__(self):
        if self.dimension < 1 or self.degree < 1:
            raise PreconditionError("dimension and degree must be positive")
        coeffs = _normalize_coefficients(self.coefficients, self.dimension)
        top = max((sum(a) for a, v in coeffs.items() if v != 0), default=-1)
        if top != self.degree:
            raise PreconditionError(
                f"highest nonzero order is {top}, declared degree is {self.degree}"
            )
        object.__setattr__(self, "coefficients", coeffs)

    def evaluate(self, xi) -> np.ndarray:
        return _monomial_sum(self.coefficients, _as_points(xi, self.dimension))

    @classmethod
    def laplacian(cls, dimension: int = 1, sign: float = 1.0) -> "PolynomialSymbol":
        """The symbol ``sign * |xi|^2`` of ``-sign * Laplacian``."""
        coeffs = {}
        for axis in range(dimension):
            alpha = [0] * dimension
            alpha[axis] = 2
            coeffs[tuple(alpha)] = sign
        return cls(dimension, 2, coeffs)


@dataclass(frozen=True)
class EllipticityCertificate:
    c: float
    omega: float
    xi_max: float
    validated: bool
    violation: np.ndarray | None = field(default=None, compare=False)


def certify_ellipticity(
    sym: PolynomialSymbol, xi_samples, c: float, omega: float
) -> EllipticityCertificate:
    """Scan ``Re a(xi) >= c |xi|^m - omega`` over the given frequencies.

    On failure the certificate carries the first violating frequency.
    """
    if not c > 0:
        raise PreconditionError(f"ellipticity constant must be positive, got {c}")
    xi = _as_points(xi_samples, sym.dimension).reshape(-1, sym.dimension)
    if xi.shape[0] == 0:
        raise PreconditionError("empty frequency sample")
    lhs = sym.evaluate(xi).real
    rhs = c * _modulus_power(xi, sym.degree) - omega
    slack = 1e-12 * (np.abs(lhs) + np.abs(rhs) + 1.0)
    bad = np.flatnonzero(lhs + slack < rhs)
    xi_max = float(np.max(np.sqrt(np.sum(xi * xi, axis=-1))))
    if bad.size:
        return EllipticityCertificate(c, omega, xi_max, False, xi[bad[0]].copy())
    return EllipticityCertificate(c, omega, xi_max, True)


def minimal_omega(sym: PolynomialSymbol, xi_samples, c: float) -> float:
    """Smallest ``omega`` passing :func:`certify_ellipticity` on the samples."""
    xi = _as_points(xi_samples, sym.dimension).reshape(-1, sym.dimension)
    return float(np.max(c * _modulus_power(xi, sym.degree) - sym.evaluate(xi).real))


def default_ellipticity_constant(sym: PolynomialSymbol, n_directions: int = 4096) -> float:
    """Half the minimum of the principal part's real part over unit directions."""
    d = sym.dimension
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((n_directions, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = np.vstack([dirs, np.eye(d), -np.eye(d)])
    principal = {a: v for a, v in sym.coefficients.items() if sum(a) == sym.degree}
    value = float(np.min(_monomial_sum(principal, dirs).real))
    if value <= 0:
        raise PreconditionError("principal part is not strongly elliptic")
    return 0.5 * value


def largest_lower_order(s: float, m: int) -> int:
    """Largest integer strictly below ``s*m`` (the admissible degree of ``b``)."""
    return int(math.ceil(s * m) - 1)


@dataclass
class FractionalSymbol:
    """``a_{s,b}(xi) = (a(xi) + omega)^s + b(xi)`` for a certified ``a``.

    ``nu`` is filled in by :func:`compute_nu`.
    """

    base: PolynomialSymbol
    cert: EllipticityCertificate
    s: float = 1.0
    b: Mapping[MultiIndex, complex] = field(default_factory=dict)
    nu: float | None = None

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise PreconditionError(f"fractional power must lie in (0, 1], got {self.s}")
        self.b = _normalize_coefficients(self.b, self.base.dimension)
        m_tilde = largest_lower_order(self.s, self.base.degree)
        for alpha, value in self.b.items():
            if value != 0 and sum(alpha) > m_tilde:
                raise PreconditionError(
                    f"perturbation term {alpha} has order above {m_tilde} (< s*m = {self.s * self.base.degree})"
                )

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def order(self) -> float:
        """The product ``s*m``."""
        return self.s * self.base.degree

    @property
    def m_tilde(self) -> int:
        return largest_lower_order(self.s, self.base.degree)

    @property
    def nu_plus(self) -> float:
        if self.nu is None:
            raise PreconditionError("nu has not been computed for this symbol")
        return max(self.nu, 0.0)

    def evaluate(self, xi) -> np.ndarray:
        return evaluate_symbol(self, xi)


def evaluate_symbol(sym: FractionalSymbol, xi) -> np.ndarray | complex:
    """Evaluate ``(a(xi) + omega)^s + b(xi)`` with the principal branch, ``0^s = 0``."""
    scalar = np.ndim(xi) == 0 or (sym.dimension > 1 and np.ndim(xi) == 1)
    pts = _as_points(xi, sym.dimension)
    z = sym.base.evaluate(pts) + sym.cert.omega
    if sym.s == 1.0:
        out = z
    else:
        if np.any((z.imag == 0) & (z.real < 0)):
            raise BranchCutError("a(xi) + omega is a negative real; ellipticity certificate is invalid")
        out = np.zeros_like(z)
        nz = z != 0
        out[nz] = z[nz] ** sym.s
    if sym.b:
        out = out + _monomial_sum(sym.b, pts)
    return complex(out) if scalar else out


def compute_nu(sym: FractionalSymbol, xi_samples) -> float:
    """Smallest ``nu`` with ``Re a_{s,b}(xi) >= c^s |xi|^{sm} - nu`` on the samples.

    The value is stored on ``sym`` and returned.
    """
    if not sym.cert.validated:
        raise PreconditionError("ellipticity certificate is not validated")
    xi = _as_points(xi_samples, sym.dimension).reshape(-1, sym.dimension)
    lower = sym.cert.c ** sym.s * _modulus_power(xi, sym.order)
    nu = float(np.max(lower - evaluate_symbol(sym, xi).real))
    sym.nu = nu
    return nu


@dataclass(frozen=True)
class ConstantSymbol:
    """Frequency-independent multiplier symbol; ``value = 0`` gives ``S_t = I``."""

    dimension: int
    value: complex = 0.0

    def evaluate(self, xi) -> np.ndarray:
        pts = _as_points(xi, self.dimension)
        return np.full(pts.shape[:-1], complex(self.value))
