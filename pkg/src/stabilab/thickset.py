"""Thick sets realized as grid masks.

A set ``E`` is thick with parameters ``(rho, L)`` if every translate of the box
``(0, L_1) x ... x (0, L_d)`` meets ``E`` in measure at least
``rho * prod(L)``. On the grid this is checked at every grid translate with
periodic wraparound. For a cell-wise constant mask the intersection measure is
multilinear between grid translates, so when every ``L_i`` is a whole number of
cells the grid check is exact; otherwise :attr:`ThicknessReport.rho_all_x`
subtracts a Lipschitz margin for translates within half a cell of the grid.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import PreconditionError
from .lattice import GridSpec, StateVector, _check_same_grid


@dataclass(frozen=True, eq=False)
class ThickSet:
    grid: GridSpec
    mask: np.ndarray
    rho: float
    cube: tuple[float, ...]
    verified: bool = False

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.grid.shape:
            raise PreconditionError(f"mask shape {mask.shape} does not match grid {self.grid.shape}")
        cube = tuple(float(c) for c in np.broadcast_to(np.asarray(self.cube, float), (self.grid.d,)))
        if any(c <= 0 for c in cube):
            raise PreconditionError("cube side lengths must be positive")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cube", cube)

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.grid.cell_volume

    @property
    def density(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True)
class ThicknessReport:
    ok: bool
    worst_translate: tuple[float, ...]
    min_measure: float
    rho_measured: float
    rho_all_x: float
    exact_on_grid: bool


def _axis_weights(side: float, h: float, n: int) -> np.ndarray:
    """Per-cell overlap lengths of ``(x, x + side)`` with cells, ``x`` on the grid."""
    q = side / h
    full = int(math.floor(q + 1e-9))
    frac = q - full
    if frac < 1e-9:
        frac = 0.0
    w = np.zeros(n)
    if full + (frac > 0) > n:
        raise PreconditionError("cube side exceeds the grid period")
    w[:full] = h
    if frac > 0:
        w[full] = frac * h
    return w


def intersection_measures(mask: np.ndarray, grid: GridSpec, cube) -> np.ndarray:
    """``|E cap (box + x)|`` for every grid translate ``x`` (periodic)."""
    cube = np.broadcast_to(np.asarray(cube, float), (grid.d,))
    h = grid.spacing
    spec = np.fft.fftn(np.asarray(mask, dtype=float))
    for axis in range(grid.d):
        w = _axis_weights(cube[axis], h, grid.n)
        shape = [1] * grid.d
        shape[axis] = grid.n
        # correlation: sum_y mask[x + y] w[y]
        spec = spec * np.conj(np.fft.fft(w)).reshape(shape)
    return np.fft.ifftn(spec).real


def verify_thickness(tset: ThickSet) -> ThicknessReport:
    """Exhaustive check over all grid translates."""
    grid = tset.grid
    if any(c > grid.ell * (1 + 1e-12) for c in tset.cube):
        raise PreconditionError("cube side exceeds the grid period")
    meas = intersection_measures(tset.mask, grid, tset.cube)
    vol = float(np.prod(tset.cube))
    idx = np.unravel_index(int(np.argmin(meas)), meas.shape)
    min_meas = max(float(meas[idx]), 0.0)
    exact = all(abs(c / grid.spacing - round(c / grid.spacing)) < 1e-9 for c in tset.cube)
    margin = 0.0
    if not exact:
        for i in range(grid.d):
            others = np.prod([c for j, c in enumerate(tset.cube) if j != i]) if grid.d > 1 else 1.0
            margin += 0.5 * grid.spacing * float(others)
    ok = min_meas >= tset.rho * vol - 1e-9 * vol
    return ThicknessReport(
        ok=bool(ok),
        worst_translate=tuple(float(i * grid.spacing) for i in idx),
        min_measure=min_meas,
        rho_measured=min_meas / vol,
        rho_all_x=max(min_meas - margin, 0.0) / vol,
        exact_on_grid=exact,
    )


def verified(tset: ThickSet) -> ThickSet:
    """Copy of ``tset`` with ``verified`` set from :func:`verify_thickness`."""
    return replace(tset, verified=verify_thickness(tset).ok)


def generate_periodic(grid: GridSpec, cell_pattern) -> ThickSet:
    """Tile the grid with ``cell_pattern`` (boolean array, one axis per dimension).

    A one-dimensional pattern on a higher-dimensional grid is used on every
    axis as a product set.

    The cube is one pattern period and ``rho`` is the minimal density found
    by the translate scan.
    """
    pattern = np.asarray(cell_pattern, dtype=bool)
    if pattern.ndim == 1 and grid.d > 1:
        # product pattern E_1 x ... x E_1
        axes = [pattern.reshape([-1 if i == j else 1 for j in range(grid.d)]) for i in range(grid.d)]
        pattern = functools.reduce(np.logical_and, axes)
    if pattern.ndim != grid.d:
        raise PreconditionError("pattern dimension does not match the grid")
    reps = []
    for q in pattern.shape:
        if q == 0 or grid.n % q:
            raise PreconditionError(f"pattern length {q} does not tile {grid.n} samples")
        reps.append(grid.n // q)
    mask = np.tile(pattern, reps)
    cube = tuple(q * grid.spacing for q in pattern.shape)
    meas = intersection_measures(mask, grid, cube)
    rho = max(float(meas.min()), 0.0) / float(np.prod(cube))
    tset = ThickSet(grid, mask, rho, cube)
    if rho <= 0:
        return tset
    return verified(tset)


def half_cells(grid: GridSpec, period: float = 1.0) -> ThickSet:
    """Alternating half cells: first half of every ``period``-cell is in the set."""
    q = period / grid.spacing
    if abs(q - round(q)) > 1e-9 or round(q) % 2:
        raise PreconditionError("period must span an even number of samples")
    q = int(round(q))
    pattern = np.zeros(q, dtype=bool)
    pattern[: q // 2] = True
    return generate_periodic(grid, pattern)


def full_set(grid: GridSpec, cube=1.0) -> ThickSet:
    return verified(ThickSet(grid, np.ones(grid.shape, bool), 1.0, cube))


def generate_random(grid: GridSpec, rho: float, cube, seed: int = 0) -> ThickSet:
    """Random mask whose every cube translate has density at least ``rho``.

    The grid is split into blocks of at most half a cube per axis; any cube
    translate contains a whole block, and each block receives enough randomly
    placed cells to carry measure ``rho * prod(cube)`` by itself.
    """
    if not 0 < rho <= 1:
        raise PreconditionError("rho must lie in (0, 1]")
    cube = tuple(float(c) for c in np.broadcast_to(np.asarray(cube, float), (grid.d,)))
    h = grid.spacing
    block = []
    for c in cube:
        b = int(math.floor(c / (2 * h) + 1e-9))
        while b > 1 and grid.n % b:
            b -= 1
        if b < 1:
            raise PreconditionError("cube is smaller than two cells")
        block.append(b)
    need = int(math.ceil(rho * float(np.prod(cube)) / grid.cell_volume - 1e-9))
    size = int(np.prod(block))
    if need > size:
        raise PreconditionError(
            f"rho={rho} is too large to guarantee with blocks of {size} cells (needs {need})"
        )
    rng = np.random.default_rng(seed)
    nblocks = [grid.n // b for b in block]
    mask = np.zeros(grid.shape, dtype=bool)
    for bidx in np.ndindex(*nblocks):
        cells = np.zeros(size, dtype=bool)
        cells[rng.choice(size, size=need, replace=False)] = True
        sl = tuple(slice(i * b, (i + 1) * b) for i, b in zip(bidx, block))
        mask[sl] = cells.reshape(block)
    return verified(ThickSet(grid, mask, rho, cube))


def restrict(state: StateVector, tset: ThickSet) -> StateVector:
    """Multiplication by the indicator ``1_E``."""
    _check_same_grid(state, StateVector.zeros(tset.grid))
    return StateVector(state.grid, np.where(tset.mask, state.values, 0))


def shifted(tset: ThickSet, shift) -> ThickSet:
    """Cyclic shift of the mask by whole cells."""
    return replace(
        tset,
        mask=np.roll(tset.mask, tuple(np.broadcast_to(shift, (tset.grid.d,))), axis=tuple(range(tset.grid.d))),
        verified=False,
    )
