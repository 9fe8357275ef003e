"""Periodic lattice discretization of ``L_p(R^d)``.

The torus ``[0, ell)^d`` is sampled on ``n`` points per axis. Transforms are
normalized to approximate the continuum Fourier transform
``F f(xi) = int f(x) exp(-i xi.x) dx``, so that the transform of the constant
function 1 has the value ``ell^d`` at the zero frequency. Frequency arrays use
numpy's FFT ordering.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import PreconditionError

_HEADER = struct.Struct("<IIdd")


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    ell: float
    p: float = 2.0

    def __post_init__(self):
        if not 1 <= self.d <= 3:
            raise PreconditionError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 2 or self.n & (self.n - 1):
            raise PreconditionError(f"samples per axis must be a power of two, got {self.n}")
        if not self.ell > 0:
            raise PreconditionError("period must be positive")
        if not (1 <= self.p <= math.inf):
            raise PreconditionError(f"norm exponent must lie in [1, inf], got {self.p}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def spacing(self) -> float:
        return self.ell / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def nyquist(self) -> float:
        return math.pi * self.n / self.ell

    def with_p(self, p: float) -> "GridSpec":
        return GridSpec(self.d, self.n, self.ell, p)

    def coordinates(self) -> np.ndarray:
        """Sample points, shape ``shape + (d,)``."""
        x = np.arange(self.n) * self.spacing
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Lattice frequencies ``2 pi k / ell`` in FFT order, shape ``shape + (d,)``."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        xi = 2 * np.pi * k / self.ell
        mesh = np.meshgrid(*([xi] * self.d), indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.setflags(write=False)
        return out

    @cached_property
    def frequency_modulus(self) -> np.ndarray:
        out = np.sqrt(np.sum(self.frequencies**2, axis=-1))
        out.setflags(write=False)
        return out

    def frequency_samples(self) -> np.ndarray:
        """All lattice frequencies as an ``(n^d, d)`` array."""
        return self.frequencies.reshape(-1, self.d)

    def first_frequency(self) -> float:
        """Smallest nonzero lattice frequency modulus."""
        return 2 * np.pi / self.ell


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex grid function on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            if values.size != self.grid.n**self.grid.d:
                raise PreconditionError(
                    f"state has {values.size} samples, grid needs {self.grid.n ** self.grid.d}"
                )
            values = values.reshape(self.grid.shape)
        object.__setattr__(self, "values", values)

    def norm(self, p: float | None = None) -> float:
        return lp_norm(self, self.grid.p if p is None else p)

    def __add__(self, other: "StateVector") -> "StateVector":
        _check_same_grid(self, other)
        return StateVector(self.grid, self.values + other.values)

    def __sub__(self, other: "StateVector") -> "StateVector":
        _check_same_grid(self, other)
        return StateVector(self.grid, self.values - other.values)

    def __mul__(self, factor: complex) -> "StateVector":
        return StateVector(self.grid, self.values * factor)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: GridSpec) -> "StateVector":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "StateVector":
        x = grid.coordinates()
        return cls(grid, func(*np.moveaxis(x, -1, 0)))


def _check_same_grid(a: StateVector, b: StateVector):
    if a.grid != b.grid and a.grid.with_p(2) != b.grid.with_p(2):
        raise PreconditionError("states live on different grids")


def inner(x: StateVector, y: StateVector) -> complex:
    """Quadrature ``L_2`` inner product ``int x conj(y)``."""
    _check_same_grid(x, y)
    return complex(np.vdot(y.values, x.values) * x.grid.cell_volume)


def dft(state: StateVector) -> np.ndarray:
    """Continuum-normalized forward transform (FFT order)."""
    return np.fft.fftn(state.values) * state.grid.cell_volume


def idft(spectrum: np.ndarray, grid: GridSpec) -> StateVector:
    """Inverse of :func:`dft`."""
    spectrum = np.asarray(spectrum)
    if spectrum.shape != grid.shape:
        raise PreconditionError(f"spectrum shape {spectrum.shape} does not match grid {grid.shape}")
    return StateVector(grid, np.fft.ifftn(spectrum) / grid.cell_volume)


def lp_norm(state: StateVector, p: float) -> float:
    """``((ell/n)^d sum |v|^p)^(1/p)``, or the max modulus for ``p = inf``."""
    if not 1 <= p <= math.inf:
        raise PreconditionError(f"norm exponent must lie in [1, inf], got {p}")
    mod = np.abs(state.values)
    if p == math.inf:
        return float(mod.max(initial=0.0))
    if p == 2:
        return float(math.sqrt(state.grid.cell_volume * np.sum(mod * mod)))
    if p == 1:
        return float(state.grid.cell_volume * np.sum(mod))
    return float((state.grid.cell_volume * np.sum(mod**p)) ** (1.0 / p))


def symbol_on_grid(sym, grid: GridSpec) -> np.ndarray:
    """Values ``a(xi_k)`` on the lattice, shape ``grid.shape``."""
    return np.asarray(sym.evaluate(grid.frequencies.reshape(-1, grid.d))).reshape(grid.shape)


def semigroup_multiplier(sym, t: float, grid: GridSpec, symbol_values: np.ndarray | None = None) -> np.ndarray:
    """``exp(-t a(xi_k))`` on the lattice."""
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    a = symbol_on_grid(sym, grid) if symbol_values is None else symbol_values
    return np.exp(-t * a)


def apply_multiplier(multiplier: np.ndarray, state: StateVector) -> StateVector:
    return StateVector(state.grid, np.fft.ifftn(multiplier * np.fft.fftn(state.values)))


def semigroup_apply(sym, t: float, state: StateVector) -> StateVector:
    """``S_t x = F^{-1} exp(-t a) F x``; ``t = 0`` returns the input."""
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    if t == 0:
        return state
    return apply_multiplier(semigroup_multiplier(sym, t, state.grid), state)


def _phi(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff(r) -> np.ndarray:
    """Smooth step ``eta``: 1 on ``[0, 1/2]``, 0 on ``[1, inf)``."""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 0.5, 1.0, 0.0)
    band = (r > 0.5) & (r < 1.0)
    if np.any(band):
        rb = r[band]
        up = _phi(2.0 - 2.0 * rb)
        down = _phi(2.0 * rb - 1.0)
        out = out.copy()
        out[band] = up / (up + down)
    return out


def check_band(lam: float, grid: GridSpec):
    if not lam > 0:
        raise PreconditionError("spectral parameter must be positive")
    if lam > grid.nyquist * (1 + 1e-12):
        raise PreconditionError(
            f"spectral parameter {lam} exceeds the Nyquist frequency {grid.nyquist:.6g}"
        )


def projection_multiplier(lam: float, grid: GridSpec) -> np.ndarray:
    """``chi_lambda(xi_k) = eta(|xi_k| / lambda)``."""
    check_band(lam, grid)
    return cutoff(grid.frequency_modulus / lam)


def spectral_projection(lam: float, state: StateVector) -> StateVector:
    """Smooth spectral projection ``P_lambda``."""
    return apply_multiplier(projection_multiplier(lam, state.grid), state)


def sharp_band_mask(lam: float, grid: GridSpec) -> np.ndarray:
    """Indicator of ``[-lambda, lambda]^d`` on the lattice."""
    check_band(lam, grid)
    return np.all(np.abs(grid.frequencies) <= lam * (1 + 1e-12), axis=-1)


def multiplier_norm_l2(multiplier: np.ndarray) -> float:
    """Grid-exact ``L_2`` operator norm of a Fourier multiplier."""
    return float(np.max(np.abs(multiplier)))


def kernel_l1_norm(multiplier: np.ndarray, grid: GridSpec) -> float:
    """``L_1`` norm of the convolution kernel of a multiplier.

    Bounds the multiplier's operator norm on every ``L_p`` (Young).
    """
    kernel = np.fft.ifftn(multiplier) / grid.cell_volume
    return float(grid.cell_volume * np.sum(np.abs(kernel)))


def power_iteration_norm(apply, grid: GridSpec, rng: np.random.Generator, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Estimate ``||T||_{L_2 -> L_2}`` via power iteration on ``T* T``.

    ``apply(x, adjoint)`` applies ``T`` or its adjoint.
    """
    x = StateVector(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    x = x * (1.0 / x.norm(2))
    est = 0.0
    for _ in range(max_iter):
        y = apply(apply(x, False), True)
        ny = y.norm(2)
        if ny == 0:
            return 0.0
        new = math.sqrt(ny)
        x = y * (1.0 / ny)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


# --- persistence -----------------------------------------------------------


def write_states(path: str | Path, states: Iterable[StateVector]):
    """Write states as consecutive records: header then interleaved re/im doubles."""
    with open(path, "wb") as fh:
        for state in states:
            _write_record(fh, state)


def write_state(path: str | Path, state: StateVector):
    write_states(path, [state])


def _write_record(fh: BinaryIO, state: StateVector):
    g = state.grid
    fh.write(_HEADER.pack(g.d, g.n, g.ell, g.p))
    buf = np.empty(state.values.size * 2, dtype="<f8")
    flat = state.values.reshape(-1)
    buf[0::2] = flat.real
    buf[1::2] = flat.imag
    fh.write(buf.tobytes())


def read_states(path: str | Path) -> list[StateVector]:
    data = Path(path).read_bytes()
    out = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise PreconditionError(f"truncated state header in {path}")
        d, n, ell, p = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        grid = GridSpec(d, n, ell, p)
        count = 2 * n**d
        if len(data) - pos < 8 * count:
            raise PreconditionError(f"truncated state payload in {path}")
        buf = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        out.append(StateVector(grid, (buf[0::2] + 1j * buf[1::2]).reshape(grid.shape)))
    return out


def read_state(path: str | Path) -> StateVector:
    states = read_states(path)
    if len(states) != 1:
        raise PreconditionError(f"{path} holds {len(states)} records, expected 1")
    return states[0]


def state_to_csv(path: str | Path, state: StateVector):
    """CSV export ``x,re,im`` for one-dimensional states."""
    if state.grid.d != 1:
        raise PreconditionError("CSV export is only defined for d = 1")
    x = np.arange(state.grid.n) * state.grid.spacing
    with open(path, "w", newline="") as fh:
        fh.write("x,re,im\n")
        for xi, v in zip(x, state.values):
            fh.write(f"{float(xi)!r},{float(v.real)!r},{float(v.imag)!r}\n")
