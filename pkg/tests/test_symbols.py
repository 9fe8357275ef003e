import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fractional_scalar, minimal_omega_scan
from stabilab.errors import BranchCutError, PreconditionError
from stabilab.lattice import GridSpec
from stabilab.symbols import (
    EllipticityCertificate,
    FractionalSymbol,
    PolynomialSymbol,
    certify_ellipticity,
    compute_nu,
    evaluate_symbol,
    largest_lower_order,
    minimal_omega,
)

XI = np.arange(-32, 32, dtype=float)


def frac(coeffs, s=1.0, b=None, c=1.0, omega=0.0, degree=None, samples=XI):
    degree = degree or max(k[0] for k in coeffs)
    base = PolynomialSymbol(1, degree, coeffs)
    cert = certify_ellipticity(base, samples, c, omega)
    return FractionalSymbol(base, cert, s=s, b=b or {})


def test_square_identity_case():
    sym = frac({(2,): 1.0})
    assert evaluate_symbol(sym, 3.0) == 9


def test_square_root_of_square_is_modulus():
    sym = frac({(2,): 1.0}, s=0.5)
    assert evaluate_symbol(sym, 4.0) == pytest.approx(4.0, rel=1e-15)


def test_quartic_half_power_matches_high_precision():
    sym = frac({(4,): 1.0, (2,): 1.0}, s=0.5)
    ref = fractional_scalar({4: 1, 2: 1}, 0, 0.5, {}, 1.0)
    assert abs(evaluate_symbol(sym, 1.0) - ref) < 1e-15
    assert ref.real == pytest.approx(math.sqrt(2), abs=1e-15)


def test_zero_to_fractional_power_is_zero():
    sym = frac({(2,): 1.0}, s=0.3)
    assert evaluate_symbol(sym, 0.0) == 0


def test_branch_cut_raises():
    base = PolynomialSymbol(1, 2, {(2,): -1.0})
    forged = EllipticityCertificate(c=1.0, omega=0.0, xi_max=1.0, validated=True)
    sym = FractionalSymbol(base, forged, s=0.5)
    with pytest.raises(BranchCutError):
        evaluate_symbol(sym, 1.0)


def test_certify_laplacian():
    cert = certify_ellipticity(PolynomialSymbol.laplacian(1), XI, 1.0, 0.0)
    assert cert.validated and cert.xi_max == 32


def test_certify_negative_laplacian_reports_violation():
    cert = certify_ellipticity(PolynomialSymbol.laplacian(1, sign=-1.0), XI, 1.0, 0.0)
    assert not cert.validated
    assert cert.violation[0] != 0


def test_certify_with_scanned_omega():
    base = PolynomialSymbol(1, 2, {(2,): 1.0, (1,): 10.0})
    omega = minimal_omega(base, XI, 0.5)
    ref = minimal_omega_scan({2: 1.0, 1: 10.0}, 0.5, 2, XI)
    assert omega == ref == 50.0
    assert certify_ellipticity(base, XI, 0.5, omega).validated
    assert not certify_ellipticity(base, XI, 0.5, omega - 1e-6).validated


def test_certify_rejects_nonpositive_c():
    with pytest.raises(PreconditionError):
        certify_ellipticity(PolynomialSymbol.laplacian(1), XI, 0.0, 0.0)


def test_nu_zero_for_half_laplacian():
    sym = frac({(2,): 1.0}, s=0.5)
    assert compute_nu(sym, XI) == 0.0
    assert sym.nu == 0.0


def test_nu_for_first_order_drift():
    xi = np.arange(-16, 17, dtype=float)
    sym = frac({(2,): 1.0}, s=1.0, b={(1,): -2.0}, samples=xi)
    assert compute_nu(sym, xi) == 2 * 16


def test_nu_for_constant_shift():
    plain = frac({(2,): 1.0}, s=0.5)
    shifted = frac({(2,): 1.0}, s=0.5, b={(0,): 5.0})
    assert compute_nu(shifted, XI) == compute_nu(plain, XI) - 5


def test_nu_requires_validated_certificate():
    base = PolynomialSymbol.laplacian(1, sign=-1.0)
    cert = certify_ellipticity(base, XI, 1.0, 0.0)
    sym = FractionalSymbol(base, cert, s=1.0)
    with pytest.raises(PreconditionError):
        compute_nu(sym, XI)


def test_perturbation_order_is_strictly_below_sm():
    assert largest_lower_order(0.5, 2) == 0
    assert largest_lower_order(1.0, 2) == 1
    assert largest_lower_order(0.75, 4) == 2
    assert largest_lower_order(0.3, 2) == 0
    with pytest.raises(PreconditionError):
        frac({(2,): 1.0}, s=0.5, b={(1,): 1.0})


def test_degree_must_be_exact():
    with pytest.raises(PreconditionError):
        PolynomialSymbol(1, 4, {(2,): 1.0})


def test_graded_lex_order():
    sym = PolynomialSymbol(2, 2, {(0, 0): 1, (0, 2): 1, (1, 0): 2, (2, 0): 1, (1, 1): 3})
    assert list(sym.coefficients) == [(0, 0), (1, 0), (2, 0), (1, 1), (0, 2)]


def test_two_dimensional_evaluation():
    grid = GridSpec(2, 8, 2 * np.pi)
    xi = grid.frequency_samples()
    sym = PolynomialSymbol.laplacian(2)
    np.testing.assert_allclose(sym.evaluate(xi).real, np.sum(xi**2, axis=1), rtol=0, atol=1e-12)
    frac_2d = FractionalSymbol(sym, certify_ellipticity(sym, xi, 1.0, 0.0))
    assert frac_2d.dimension == 2
    assert evaluate_symbol(frac_2d, [3.0, 4.0]) == 25


coeff = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    a1=coeff, a0=coeff, b0=coeff,
    s=st.sampled_from([0.25, 0.5, 0.75, 1.0]),
    top=st.floats(0.2, 4),
)
def test_lower_bound_holds_pointwise(a1, a0, b0, s, top):
    coeffs = {(2,): top, (1,): a1, (0,): a0}
    base = PolynomialSymbol(1, 2, coeffs)
    c = top / 2
    omega = minimal_omega(base, XI, c)
    sym = FractionalSymbol(base, certify_ellipticity(base, XI, c, omega), s=s, b={(0,): b0})
    nu = compute_nu(sym, XI)
    lhs = evaluate_symbol(sym, XI).real + nu
    rhs = c**s * np.abs(XI) ** (2 * s)
    assert np.all(lhs >= rhs - 1e-9 * (1 + np.abs(rhs)))


@settings(max_examples=40, deadline=None)
@given(a1=coeff, s=st.sampled_from([0.5, 1.0]), cut=st.integers(1, 30))
def test_nu_monotone_in_samples(a1, s, cut):
    base = PolynomialSymbol(1, 2, {(2,): 1.0, (1,): a1})
    omega = minimal_omega(base, XI, 0.5)
    sym = FractionalSymbol(base, certify_ellipticity(base, XI, 0.5, omega), s=s)
    small = compute_nu(sym, XI[np.abs(XI) <= cut])
    large = compute_nu(sym, XI)
    assert large >= small


@settings(max_examples=40, deadline=None)
@given(a2=st.floats(0.1, 5), a1=coeff, omega=st.floats(0, 20), xi=st.floats(-50, 50))
def test_unit_power_without_perturbation_is_shift(a2, a1, omega, xi):
    base = PolynomialSymbol(1, 2, {(2,): a2, (1,): a1})
    cert = EllipticityCertificate(c=a2 / 2, omega=omega, xi_max=50.0, validated=True)
    sym = FractionalSymbol(base, cert, s=1.0)
    assert evaluate_symbol(sym, xi) == complex(base.evaluate(xi)[()] + omega)
