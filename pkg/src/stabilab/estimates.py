"""Uncertainty, dissipation and weak observability estimates.

Three layers are computed on the grid:

* the uncertainty constant ``c1`` with ``||f||_p <= c1 ||f||_{L_p(E)}`` for
  ``f`` with spectrum in ``[-lambda, lambda]^d``;
* the dissipation bound ``||(I - P_lambda) S_t|| <= K exp(-rate t)`` with
  ``rate = 2^{-sm-4} c^s lambda^{sm}``;
* the constants ``(C_obs, alpha)`` of the weak observability inequality
  ``||S_T x|| <= C_obs (int_0^T ||1_E S_t x||^r dt)^{1/r} + alpha ||x||``
  built from the two profiles, and an empirical check of that inequality.

For ``p = 2`` every operator norm is grid-exact; for other ``p`` the
uncertainty constant is an empirical lower bound and the dissipation norm an
upper bound through the kernel ``L_1`` norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import PreconditionError
from .lattice import (
    GridSpec,
    StateVector,
    check_band,
    kernel_l1_norm,
    lp_norm,
    projection_multiplier,
    sharp_band_mask,
    symbol_on_grid,
)
from .symbols import FractionalSymbol
from .thickset import ThickSet

Profile = Callable[[np.ndarray], np.ndarray]

N_MAX_SAMPLES = 1024
N_SIMPSON_PANELS = 1024


@dataclass
class UncertaintyEstimate:
    lam: float
    p: float
    c1_hat: float
    trials: int
    method: str
    iterations: int = 0
    empirical_lower_bound: bool = False


@dataclass
class UncertaintyFit:
    """Envelope ``log c1(lambda) <= log d0 + d1 lambda`` over a sweep."""

    d0: float
    d1: float
    lambdas: np.ndarray
    c1: np.ndarray

    def bound(self, lam) -> np.ndarray:
        return self.d0 * np.exp(self.d1 * np.asarray(lam, float))

    def violations(self) -> int:
        return int(np.sum(np.log(self.c1) > np.log(self.bound(self.lambdas)) + 1e-12))


@dataclass
class DissipationEstimate:
    lam: float
    p: float
    K: float
    rate: float
    lambda_threshold: float
    samples: list[tuple[float, float]] = field(default_factory=list)
    exact: bool = True

    def bound(self, t) -> np.ndarray:
        return self.K * np.exp(-self.rate * np.asarray(t, float))

    def fitted_slope(self) -> float:
        """Least-squares slope of ``log(measured norm)`` against ``t``."""
        t = np.array([s[0] for s in self.samples])
        y = np.log(np.array([s[1] for s in self.samples]))
        return float(np.polyfit(t, y, 1)[0])


@dataclass
class ObservabilityReport:
    T: float
    r: float
    delta: float
    C_obs: float
    alpha: float
    empirical_max_ratio: float = float("nan")
    violations: int = 0
    trials: int = 0
    quadrature_converged: bool = True
    alpha_sup: float = float("nan")

    @property
    def r_conjugate(self) -> float:
        return conjugate_exponent(self.r)

    @property
    def stabilizing(self) -> bool:
        return self.alpha < 1


def conjugate_exponent(r: float) -> float:
    if r == 1:
        return math.inf
    if r == math.inf:
        return 1.0
    return r / (r - 1.0)


# --- uncertainty -------------------------------------------------------------


def _random_band_state(grid: GridSpec, band: np.ndarray, rng: np.random.Generator) -> StateVector:
    spec = np.zeros(grid.shape, dtype=complex)
    k = int(band.sum())
    spec[band] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return StateVector(grid, np.fft.ifftn(spec))


def estimate_uncertainty(
    tset: ThickSet,
    lam: float,
    p: float = 2.0,
    trials: int = 200,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 200000,
) -> UncertaintyEstimate:
    """Best constant ``c1`` in ``||f||_p <= c1 ||f||_{L_p(E)}`` on band-limited ``f``.

    For ``p = 2`` the largest eigenvalue ``mu`` of ``f -> Pi 1_{E^c} Pi f`` on the
    band-limited subspace is found by power iteration and
    ``c1 = (1 - mu)^{-1/2}``. Otherwise ``c1`` is the largest ratio seen over
    ``trials`` random band-limited states.
    """
    grid = tset.grid
    check_band(lam, grid)
    if not tset.verified:
        raise PreconditionError("thick set is not verified")
    band = sharp_band_mask(lam, grid)
    rng = np.random.default_rng(seed)
    if p == 2:
        comp = ~tset.mask
        if not comp.any():
            return UncertaintyEstimate(lam, p, 1.0, 0, "power-iteration")
        if not tset.mask.any():
            return UncertaintyEstimate(lam, p, math.inf, 0, "power-iteration")
        spec = np.zeros(grid.shape, dtype=complex)
        k = int(band.sum())
        spec[band] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        spec /= np.linalg.norm(spec)
        mu = 0.0
        it = 0
        for it in range(1, max_iter + 1):
            f = np.fft.ifftn(spec)
            g = np.fft.fftn(np.where(comp, f, 0))
            g[~band] = 0
            mu = float(np.vdot(spec, g).real)
            residual = np.linalg.norm(g - mu * spec)
            ng = np.linalg.norm(g)
            if ng == 0:
                break
            spec = g / ng
            # Hermitian residual bound: mu is within residual of the spectrum
            if residual <= tol:
                break
        gap = 1.0 - mu
        c1 = math.inf if gap <= 1e-14 else 1.0 / math.sqrt(gap)
        return UncertaintyEstimate(lam, p, c1, 0, "power-iteration", iterations=it)
    best = 1.0
    for _ in range(trials):
        f = _random_band_state(grid, band, rng)
        num = lp_norm(f, p)
        den = lp_norm(StateVector(grid, np.where(tset.mask, f.values, 0)), p)
        if den == 0:
            best = math.inf
            break
        best = max(best, num / den)
    return UncertaintyEstimate(lam, p, best, trials, "random-max", empirical_lower_bound=True)


def fit_uncertainty(estimates: Sequence[UncertaintyEstimate]) -> UncertaintyFit:
    """Fit ``log c1 ~ log d0 + d1 lambda`` and lift the intercept to an envelope.

    The slope is the least-squares slope (floored at zero); ``d0`` is then the
    smallest value placing every finite sample on or below the line.
    """
    lam = np.array([e.lam for e in estimates], float)
    c1 = np.array([e.c1_hat for e in estimates], float)
    finite = np.isfinite(c1)
    if finite.sum() == 0:
        raise PreconditionError("no finite uncertainty constants to fit")
    y = np.log(c1[finite])
    x = lam[finite]
    d1 = float(np.polyfit(x, y, 1)[0]) if finite.sum() > 1 else 0.0
    d1 = max(d1, 0.0)
    log_d0 = float(np.max(y - d1 * x))
    return UncertaintyFit(math.exp(log_d0), d1, lam[finite], c1[finite])


# --- dissipation -------------------------------------------------------------


def dissipation_rate(sym: FractionalSymbol, lam: float) -> float:
    """``2^{-sm-4} c^s lambda^{sm}``."""
    sm = sym.order
    return 2.0 ** (-sm - 4) * sym.cert.c**sym.s * lam**sm


def dissipation_threshold(sym: FractionalSymbol) -> float:
    """``(2^{sm+4} nu_+ / c^s)^{1/(sm)}``."""
    sm = sym.order
    return (2.0 ** (sm + 4) * sym.nu_plus / sym.cert.c**sym.s) ** (1.0 / sm)


def high_frequency_norm(sym, lam: float, t: float, grid: GridSpec, p: float = 2.0, symbol_values=None) -> float:
    """``||(I - P_lambda) S_t||`` on the grid: exact for ``p = 2``, Young bound otherwise."""
    a = symbol_on_grid(sym, grid) if symbol_values is None else symbol_values
    mult = (1.0 - projection_multiplier(lam, grid)) * np.exp(-t * a)
    if p == 2:
        return float(np.max(np.abs(mult)))
    return kernel_l1_norm(mult, grid)


def verify_dissipation(
    sym: FractionalSymbol, lam: float, t_samples, grid: GridSpec, p: float = 2.0
) -> DissipationEstimate:
    """Measure ``||(I - P_lambda) S_t||`` at each sample and fit ``K``.

    ``K`` is the smallest constant with ``measured <= K exp(-rate t)`` on the
    samples.
    """
    check_band(lam, grid)
    threshold = dissipation_threshold(sym)
    if not lam > threshold:
        raise PreconditionError(
            f"lambda={lam} does not exceed the dissipation threshold {threshold:.6g}"
        )
    rate = dissipation_rate(sym, lam)
    a = symbol_on_grid(sym, grid)
    samples = []
    K = 0.0
    for t in np.asarray(t_samples, float):
        measured = high_frequency_norm(sym, lam, float(t), grid, p, symbol_values=a)
        samples.append((float(t), measured))
        K = max(K, measured * math.exp(rate * t))
    return DissipationEstimate(lam, p, K, rate, threshold, samples, exact=(p == 2))


# --- observability constants ---------------------------------------------------


def _profile_values(profile, t: np.ndarray) -> np.ndarray:
    if callable(profile):
        return np.broadcast_to(np.asarray(profile(t), float), t.shape)
    return np.full(t.shape, float(profile))


def _simpson(profile, a: float, b: float, panels: int) -> float:
    if b <= a:
        return 0.0
    t = np.linspace(a, b, panels + 1)
    return float(simpson(_profile_values(profile, t), x=t))


def observability_constants(
    c1_profile,
    c2_profile,
    M: float,
    omega: float,
    T: float,
    r: float,
    delta: float,
    norm_C: float = 1.0,
    panels: int = N_SIMPSON_PANELS,
) -> ObservabilityReport:
    """Constants of the weak observability inequality from the two profiles.

    ``C_obs = M e^{omega_+ T} / ((1-delta) T^{1/r}) max_{[delta T, T]} C1`` and
    ``alpha = M e^{omega_+ T} / ((1-delta) T) int_{delta T}^T (C1 ||C|| + 1) C2``.
    ``alpha_sup`` replaces the integral by the interval length times the
    sampled maximum of the integrand, the cruder bound behind closed forms.
    Profiles may be callables of a time array or constants.
    """
    if not 0 <= delta < 1:
        raise PreconditionError("delta must lie in [0, 1)")
    if not 1 <= r <= math.inf:
        raise PreconditionError("r must lie in [1, inf]")
    if not T > 0:
        raise PreconditionError("T must be positive")
    growth = M * math.exp(max(omega, 0.0) * T)
    t_max = np.linspace(delta * T, T, N_MAX_SAMPLES)
    c1_max = float(np.max(_profile_values(c1_profile, t_max)))
    t_root = 1.0 if r == math.inf else T ** (1.0 / r)
    C_obs = growth * c1_max / ((1 - delta) * t_root)

    def integrand(t):
        return (_profile_values(c1_profile, t) * norm_C + 1.0) * _profile_values(c2_profile, t)

    integral = _simpson(integrand, delta * T, T, panels)
    coarse = _simpson(integrand, delta * T, T, panels // 2)
    converged = abs(integral - coarse) <= 1e-6 * max(abs(integral), 1e-300)
    alpha = growth * integral / ((1 - delta) * T)
    alpha_sup = growth * float(np.max(integrand(t_max)))
    return ObservabilityReport(T, r, delta, C_obs, alpha, quadrature_converged=converged, alpha_sup=alpha_sup)


def observability_constants_T0(
    C1: float,
    c2_profile,
    M: float,
    omega: float,
    T: float,
    T0: float,
    r: float,
    norm_C: float = 1.0,
    panels: int = N_SIMPSON_PANELS,
) -> ObservabilityReport:
    """Constants when the uncertainty estimate is time-integrated up to ``T0``.

    ``C_obs = M e^{omega_+ T} 2^{1-1/r} C1`` and
    ``alpha = M e^{omega_+ T} (2^{1-1/r} C1 ||C|| ||C2||_{L_r(0,T0)} + C2(T0))``;
    the factor ``2^{1-1/r}`` is 1 for ``r = inf``.
    """
    if not 0 < T0 <= T:
        raise PreconditionError("need 0 < T0 <= T")
    growth = M * math.exp(max(omega, 0.0) * T)
    if r == math.inf:
        factor = 1.0
        t = np.linspace(0.0, T0, N_MAX_SAMPLES)
        c2_norm = float(np.max(np.abs(_profile_values(c2_profile, t))))
    else:
        factor = 2.0 ** (1.0 - 1.0 / r)
        c2_norm = _simpson(lambda t: np.abs(_profile_values(c2_profile, t)) ** r, 0.0, T0, panels) ** (1.0 / r)
    c2_T0 = float(_profile_values(c2_profile, np.array([T0]))[0])
    C_obs = growth * factor * C1
    alpha = growth * (factor * C1 * norm_C * c2_norm + c2_T0)
    return ObservabilityReport(T, r, 0.0, C_obs, alpha)


def exponential_alpha_bound(M: float, M_P: float, C: float, norm_B: float, omega_P: float, omega: float, T: float) -> float:
    """``M M_P (C ||B|| + 1) exp(-(omega_P - omega_+) T / 2)``."""
    return M * M_P * (C * norm_B + 1.0) * math.exp(-0.5 * (omega_P - max(omega, 0.0)) * T)


def balanced_delta(omega_P: float, omega: float) -> float:
    """``delta = (omega_P + omega_+) / (2 omega_P)``."""
    return (omega_P + max(omega, 0.0)) / (2.0 * omega_P)


# --- empirical weak observability --------------------------------------------


def _time_norm(values: np.ndarray, times: np.ndarray, r: float) -> np.ndarray:
    """``(int |v|^r dt)^{1/r}`` by the trapezoid rule along the last axis."""
    if r == math.inf:
        return np.max(values, axis=-1)
    return np.trapezoid(values**r, x=times, axis=-1) ** (1.0 / r)


def verify_weak_observability(
    sym,
    tset: ThickSet,
    T: float,
    r_prime: float,
    C_obs: float,
    alpha: float,
    trials: int = 1000,
    n_t: int = 64,
    p: float | None = None,
    seed: int = 0,
    bandwidth: float | None = None,
    batch: int = 64,
) -> ObservabilityReport:
    """Check ``||S_T x|| <= C_obs ||t -> 1_E S_t x||_{L_r'} + alpha ||x||`` on random ``x``.

    States have complex standard normal entries (or, with ``bandwidth``,
    spectra supported on ``|xi| <= bandwidth``) and are normalized. The time
    norm uses the trapezoid rule on ``n_t`` uniform points.
    """
    if n_t < 16:
        raise PreconditionError("n_t must be at least 16")
    if trials < 1:
        raise PreconditionError("trials must be at least 1")
    grid = tset.grid
    p = grid.p if p is None else p
    times = np.linspace(0.0, T, n_t)
    a = symbol_on_grid(sym, grid)
    axes = tuple(range(1, grid.d + 1))
    rng = np.random.default_rng(seed)
    band = None if bandwidth is None else grid.frequency_modulus <= bandwidth
    w = grid.cell_volume

    def norms(v):
        mod = np.abs(v)
        if p == math.inf:
            return mod.max(axis=axes)
        return (w * np.sum(mod**p, axis=axes)) ** (1.0 / p)

    worst = -math.inf
    violations = 0
    done = 0
    while done < trials:
        nb = min(batch, trials - done)
        shape = (nb,) + grid.shape
        if band is None:
            x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            xhat = np.fft.fftn(x, axes=axes)
        else:
            xhat = np.zeros(shape, dtype=complex)
            k = int(band.sum())
            xhat[:, band] = rng.standard_normal((nb, k)) + 1j * rng.standard_normal((nb, k))
            x = np.fft.ifftn(xhat, axes=axes)
        xn = norms(x)
        observed = np.empty((nb, n_t))
        for j, t in enumerate(times):
            st = np.fft.ifftn(xhat * np.exp(-t * a), axes=axes)
            observed[:, j] = norms(np.where(tset.mask, st, 0)) / xn
        final = norms(np.fft.ifftn(xhat * np.exp(-T * a), axes=axes)) / xn
        integral = _time_norm(observed, times, r_prime)
        rhs = C_obs * integral + alpha
        violations += int(np.sum(final > rhs * (1 + 1e-12) + 1e-15))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(integral > 0, (final - alpha) / integral, np.where(final > alpha, math.inf, -math.inf))
        worst = max(worst, float(np.max(ratio)))
        done += nb
    return ObservabilityReport(
        T, conjugate_exponent(r_prime), 0.0, C_obs, alpha,
        empirical_max_ratio=worst, violations=violations, trials=trials,
    )
