import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_intersections, fractional_box_intersection_1d
from stabilab.errors import PreconditionError
from stabilab.lattice import GridSpec, StateVector, lp_norm
from stabilab.thickset import (
    ThickSet,
    full_set,
    generate_periodic,
    generate_random,
    half_cells,
    intersection_measures,
    restrict,
    shifted,
    verify_thickness,
)


def random_state(grid, seed=0):
    rng = np.random.default_rng(seed)
    return StateVector(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


def test_full_set_is_thick_for_every_cube():
    g = GridSpec(2, 16, 4.0)
    for cube in (0.25, 1.0, (0.5, 3.0), 4.0):
        tset = full_set(g, cube)
        assert tset.verified and tset.rho == 1.0
        rep = verify_thickness(tset)
        assert rep.ok and rep.rho_measured == pytest.approx(1.0)


def test_half_cells_have_density_one_half():
    g = GridSpec(1, 256, 32.0)
    tset = half_cells(g)
    assert tset.rho == pytest.approx(0.5, abs=1e-12)
    assert tset.cube == (1.0,)
    assert tset.verified


def test_half_cells_fail_above_one_half():
    g = GridSpec(1, 256, 32.0)
    base = half_cells(g)
    assert verify_thickness(ThickSet(g, base.mask, 0.5, 1.0)).ok
    assert not verify_thickness(ThickSet(g, base.mask, 0.51, 1.0)).ok


def test_empty_mask_fails():
    g = GridSpec(1, 64, 8.0)
    for rho in (1e-6, 0.1, 1.0):
        assert not verify_thickness(ThickSet(g, np.zeros(64, bool), rho, 1.0)).ok


def test_random_set_passes_own_verifier():
    g = GridSpec(1, 512, 32.0)
    mask = np.random.default_rng(0).random(512) < 0.3
    rep = verify_thickness(ThickSet(g, mask, 0.1, 1.0))
    meas = brute_force_intersections(mask, g.spacing, (16,))
    assert rep.min_measure == pytest.approx(meas.min(), abs=1e-12)
    assert rep.ok == (meas.min() >= 0.1 - 1e-12)
    assert rep.worst_translate[0] == pytest.approx(np.argmin(meas) * g.spacing)


@pytest.mark.parametrize("d, rho, cube", [(1, 0.1, 1.0), (1, 0.3, 2.0), (2, 0.25, (1.0, 2.0))])
def test_generated_random_sets_are_thick(d, rho, cube):
    g = GridSpec(d, 64 if d == 2 else 256, 8.0)
    tset = generate_random(g, rho, cube, seed=7)
    assert tset.verified
    assert verify_thickness(tset).rho_measured >= rho


def test_generate_random_rejects_impossible_density():
    g = GridSpec(1, 64, 8.0)
    with pytest.raises(PreconditionError):
        generate_random(g, 0.9, 1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_fft_scan_matches_brute_force(d):
    n = 32 if d == 1 else 16
    g = GridSpec(d, n, 4.0)
    mask = np.random.default_rng(d).random(g.shape) < 0.4
    cells = (5,) * d
    fast = intersection_measures(mask, g, tuple(c * g.spacing for c in cells))
    np.testing.assert_allclose(fast, brute_force_intersections(mask, g.spacing, cells), atol=1e-12)


def test_fractional_cube_scan_is_exact_at_grid_translates():
    g = GridSpec(1, 64, 8.0)
    mask = np.random.default_rng(2).random(64) < 0.5
    side = 2.3 * g.spacing
    fast = intersection_measures(mask, g, side)
    np.testing.assert_allclose(fast, fractional_box_intersection_1d(mask, g.spacing, side), atol=1e-12)
    rep = verify_thickness(ThickSet(g, mask, 0.01, side))
    assert not rep.exact_on_grid
    assert rep.rho_all_x <= rep.rho_measured


def test_all_x_margin_is_a_valid_lower_bound():
    g = GridSpec(1, 64, 8.0)
    mask = np.random.default_rng(3).random(64) < 0.5
    side = 3.4 * g.spacing
    rep = verify_thickness(ThickSet(g, mask, 0.01, side))
    # sweep off-grid translates with a fine sub-cell resolution
    fine = np.repeat(mask, 50)
    h = g.spacing / 50
    off_grid = fractional_box_intersection_1d(fine, h, side)
    assert off_grid.min() / side >= rep.rho_all_x - 1e-12


def test_cube_larger_than_period_rejected():
    g = GridSpec(1, 16, 2.0)
    with pytest.raises(PreconditionError):
        verify_thickness(ThickSet(g, np.ones(16, bool), 0.5, 3.0))


def test_non_tiling_pattern_rejected():
    g = GridSpec(1, 64, 8.0)
    with pytest.raises(PreconditionError):
        generate_periodic(g, np.array([1, 0, 0], bool))
    with pytest.raises(PreconditionError):
        half_cells(g, period=3 * g.spacing)


def test_two_dimensional_periodic_pattern():
    g = GridSpec(2, 32, 4.0)
    tset = generate_periodic(g, np.array([1, 1, 0, 0, 0, 0, 0, 0], bool))
    assert tset.verified
    assert tset.rho == pytest.approx(0.25**2)
    assert tset.cube == (1.0, 1.0)


def test_restrict_identity_and_zero():
    g = GridSpec(1, 32, 4.0)
    x = random_state(g)
    np.testing.assert_array_equal(restrict(x, full_set(g)).values, x.values)
    empty = ThickSet(g, np.zeros(32, bool), 0.5, 1.0)
    assert np.all(restrict(x, empty).values == 0)


def test_restrict_grid_mismatch():
    with pytest.raises(PreconditionError):
        restrict(random_state(GridSpec(1, 16, 1.0)), full_set(GridSpec(1, 32, 1.0), 0.5))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf]))
def test_restrict_is_idempotent_contraction(seed, p):
    g = GridSpec(1, 64, 8.0)
    rng = np.random.default_rng(seed)
    tset = ThickSet(g, rng.random(64) < 0.5, 0.1, 1.0)
    x = random_state(g, seed)
    once = restrict(x, tset)
    np.testing.assert_array_equal(restrict(once, tset).values, once.values)
    assert lp_norm(once, p) <= lp_norm(x, p)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.integers(-200, 200), rho=st.floats(0.05, 0.6))
def test_thickness_verdict_is_shift_invariant(seed, shift, rho):
    g = GridSpec(1, 128, 16.0)
    mask = np.random.default_rng(seed).random(128) < 0.45
    tset = ThickSet(g, mask, rho, 1.0)
    a, b = verify_thickness(tset), verify_thickness(shifted(tset, shift))
    assert a.ok == b.ok
    assert a.min_measure == pytest.approx(b.min_measure, abs=1e-12)


def test_measure_and_density():
    g = GridSpec(1, 256, 32.0)
    tset = half_cells(g)
    assert tset.measure == pytest.approx(16.0)
    assert tset.density == 0.5
