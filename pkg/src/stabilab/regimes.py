"""Selection of admissible spectral parameter and horizon.

With uncertainty and dissipation profiles of the form
``C1 = d0 exp(d1 lambda^g1)`` and ``C2(t) = d2 exp(-d3 lambda^g2 t^g3)`` the
observability remainder satisfies

    alpha <= M d2 (d0 ||C|| + 1) exp(-d3 lambda^g2 (delta T)^g3 + d1 lambda^g1 + omega_+ T)

and the functions here pick ``(lambda, T)`` making the right-hand side less
than one. Case D (an ``alpha = 0`` construction) is not implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InfeasibleError, PreconditionError
from .symbols import FractionalSymbol

SAFETY = 1.01


@dataclass(frozen=True)
class RegimeParams:
    d0: float
    d1: float
    d2: float
    d3: float
    gamma1: float
    gamma2: float
    gamma3: float
    M: float = 1.0
    omega: float = 0.0
    norm_C: float = 1.0
    norm_B: float = 1.0
    delta: float = 0.5

    def __post_init__(self):
        for name in ("d0", "d1", "d2", "d3", "gamma1", "gamma2", "gamma3"):
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be positive")
        if self.M < 1:
            raise PreconditionError("M must be at least 1")
        if self.norm_C < 0 or self.norm_B < 0:
            raise PreconditionError("operator norms must be nonnegative")
        if not 0 < self.delta < 1:
            raise PreconditionError("delta must lie in (0, 1)")

    @property
    def omega_plus(self) -> float:
        return max(self.omega, 0.0)

    @property
    def log_prefactor(self) -> float:
        """``ln(M d2 (d0 ||C|| + 1))``."""
        return math.log(self.M * self.d2 * (self.d0 * self.norm_C + 1.0))


@dataclass(frozen=True)
class RegimeDecision:
    case_id: str
    lam: float | None
    T: float | None
    alpha: float
    justification: str

    @property
    def feasible(self) -> bool:
        return self.case_id != "infeasible"


def alpha_bound(params: RegimeParams, lam: float, T: float) -> float:
    """The closed-form remainder bound at ``(lambda, T)``."""
    q = params
    exponent = (
        -q.d3 * lam**q.gamma2 * (q.delta * T) ** q.gamma3
        + q.d1 * lam**q.gamma1
        + q.omega_plus * T
    )
    return q.M * q.d2 * (q.d0 * q.norm_C + 1.0) * math.exp(exponent)


def case_b_thresholds(params: RegimeParams) -> tuple[float, float]:
    """Horizon thresholds for equal exponents.

    Returns ``(delta (d1/d3)^{1/g3}, (d1/d3)^{1/g3} / delta)``; the second
    one is what keeps ``d3 (delta T)^g3 - d1`` positive.
    """
    base = (params.d1 / params.d3) ** (1.0 / params.gamma3)
    return params.delta * base, base / params.delta


def _bisect(pred, lo: float, hi: float, rtol: float = 1e-12, max_steps: int = 400) -> float:
    """Smallest ``x`` in ``(lo, hi]`` with ``pred(x)`` true; assumes monotone predicate."""
    for _ in range(max_steps):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _grow(pred, start: float, limit: float = 1e300) -> float:
    x = start
    while not pred(x):
        x *= 2.0
        if x > limit:
            raise InfeasibleError("no admissible value found before overflow")
    return x


def _finish(case_id: str, params: RegimeParams, lam: float, T: float, why: str) -> RegimeDecision:
    alpha = alpha_bound(params, lam, T)
    if not alpha < 1:
        return RegimeDecision("infeasible", lam, T, alpha, f"{why}; recomputed alpha={alpha:.6g} is not below 1")
    return RegimeDecision(case_id, lam, T, alpha, why)


def _case_a(q: RegimeParams, T_hint: float | None) -> RegimeDecision:
    g1, g2, g3 = q.gamma1, q.gamma2, q.gamma3
    k = g1 * g3 / (g1 - g2)
    coef = (q.d3 / (2 * q.d1)) ** (g2 / (g1 - g2)) * q.d3 / 2.0

    def lam_of(T):
        return (q.d3 * (q.delta * T) ** g3 / (2 * q.d1)) ** (1.0 / (g1 - g2))

    def holds(T):
        return q.log_prefactor < coef * (q.delta * T) ** k - q.omega_plus * T

    def ok(T):
        return holds(T) and alpha_bound(q, lam_of(T), T) < 1

    if q.log_prefactor < 0 and q.omega_plus == 0:
        T = T_hint if T_hint else 1.0
        return _finish("A", q, lam_of(T), T, "prefactor below one: every horizon is admissible")
    tiny = 1e-12
    if ok(tiny):
        T = tiny
    else:
        hi = _grow(ok, 1.0)
        T = _bisect(ok, tiny, hi, rtol=1e-13)
    why = (
        f"g1 > g2 and g3 > 1 - g2/g1: smallest T with "
        f"ln(M d2 (d0|C|+1)) < ({q.d3}/(2 {q.d1}))^(g2/(g1-g2)) d3/2 (delta T)^{k:.6g} - omega_+ T"
    )
    if T_hint is not None and T_hint > T:
        T = T_hint
        why += f"; using requested T={T_hint}"
    return _finish("A", q, lam_of(T), T, why)


def _case_b(q: RegimeParams, T_hint: float | None) -> RegimeDecision:
    display_T, positive_T = case_b_thresholds(q)
    T = T_hint if T_hint is not None else 2.0 * positive_T
    if not T > positive_T:
        return RegimeDecision(
            "infeasible", None, T, math.inf,
            f"g1 = g2 needs d3 (delta T)^g3 > d1, i.e. T > {positive_T:.6g} (delta-scaled display: T > {display_T:.6g})",
        )
    denom = q.d3 * (q.delta * T) ** q.gamma3 - q.d1
    num = q.log_prefactor + q.omega_plus * T
    base = (num / denom) ** (1.0 / q.gamma1) if num > 0 else 0.0
    lam = SAFETY * base if base > 0 else 1.0
    why = (
        f"g1 = g2: T={T:.6g} > {positive_T:.6g} (positivity) and > {display_T:.6g} (delta-scaled display); "
        f"lambda = {SAFETY} x {base:.6g}"
    )
    return _finish("B", q, lam, T, why)


def _case_c(q: RegimeParams, T_hint: float | None) -> RegimeDecision:
    T = T_hint if T_hint is not None else 1.0
    target = q.log_prefactor + q.omega_plus * T

    def ok(lam):
        return target < q.d3 * lam**q.gamma2 * (q.delta * T) ** q.gamma3 - q.d1 * lam**q.gamma1

    # past the zero of d3 lam^(g2-g1) (delta T)^g3 - d1 the gap is increasing
    floor = (q.d1 / (q.d3 * (q.delta * T) ** q.gamma3)) ** (1.0 / (q.gamma2 - q.gamma1))
    hi = _grow(ok, max(floor, 1e-12))
    lam = _bisect(ok, min(floor, hi / 2), hi)
    why = f"g1 < g2: for T={T:.6g}, lambda = {SAFETY} x smallest lambda with positive exponent gap"
    return _finish("C", q, SAFETY * lam, T, why)


def _case_e(q: RegimeParams, lam_hint: float | None) -> RegimeDecision:
    lam = lam_hint if lam_hint is not None else 1.0

    def ok(T):
        return alpha_bound(q, lam, T) < 1

    hi = _grow(ok, 1.0)
    T = _bisect(ok, 0.0, hi)
    why = f"omega_+ = 0: lambda={lam:.6g} fixed, T = {SAFETY} x smallest horizon with alpha < 1"
    return _finish("E", q, lam, SAFETY * T, why)


def select_regime(
    params: RegimeParams,
    T_hint: float | None = None,
    lambda_hint: float | None = None,
    case: str | None = None,
) -> RegimeDecision:
    """Pick ``(lambda, T)`` with ``alpha < 1`` following the exponent casework.

    ``case`` forces one of ``"A"``, ``"B"``, ``"C"``, ``"E"``; otherwise it is
    chosen by comparing ``gamma1`` with ``gamma2``, falling back to ``"E"``
    when the first case is inapplicable and ``omega_+ = 0``.
    """
    q = params
    if case is None:
        if q.gamma1 > q.gamma2:
            if q.gamma3 > 1 - q.gamma2 / q.gamma1:
                case = "A"
            elif q.omega_plus == 0:
                case = "E"
            else:
                return RegimeDecision(
                    "infeasible", None, None, math.inf,
                    "g1 > g2 with g3 <= 1 - g2/g1 and omega_+ > 0: no horizon is guaranteed "
                    "(the alpha = 0 route of case D is not implemented)",
                )
        elif q.gamma1 == q.gamma2:
            case = "B"
        else:
            case = "C"
    case = case.upper()
    if case == "A":
        if not (q.gamma1 > q.gamma2 and q.gamma3 > 1 - q.gamma2 / q.gamma1):
            raise PreconditionError("case A needs g1 > g2 and g3 > 1 - g2/g1")
        return _case_a(q, T_hint)
    if case == "B":
        return _case_b(q, T_hint)
    if case == "C":
        if not q.gamma1 < q.gamma2:
            raise PreconditionError("case C needs g1 < g2")
        return _case_c(q, T_hint)
    if case == "E":
        if q.omega_plus != 0:
            raise PreconditionError("case E needs omega_+ = 0")
        return _case_e(q, lambda_hint)
    if case == "D":
        raise PreconditionError("case D relies on an external alpha = 0 theorem and is not implemented")
    raise PreconditionError(f"unknown case {case!r}")


def fractional_schedule(
    sym: FractionalSymbol,
    set_fit: tuple[float, float],
    M: float = 1.0,
    omega: float | None = None,
    K: float = 1.0,
    delta: float = 0.5,
    T_hint: float | None = None,
    norm_C: float = 1.0,
) -> RegimeDecision:
    """Route a fractional symbol through the casework with ``g = (1, sm, 1)``.

    ``set_fit = (d0, d1)`` comes from an uncertainty sweep; the dissipation
    profile contributes ``d2 = K`` and ``d3 = 2^{-sm-4} c^s``. ``omega``
    defaults to ``nu`` (the ``L_2`` growth bound of the semigroup).
    """
    params = schedule_params(sym, set_fit, M=M, omega=omega, K=K, delta=delta, norm_C=norm_C)
    sm = sym.order
    decision = select_regime(params, T_hint=T_hint)
    if sm > 1:
        note = "; s*m > 1 also admits alpha = 0 by an external theorem (not constructed here)"
        decision = RegimeDecision(decision.case_id, decision.lam, decision.T, decision.alpha, decision.justification + note)
    return decision


def schedule_params(sym: FractionalSymbol, set_fit, M=1.0, omega=None, K=1.0, delta=0.5, norm_C=1.0) -> RegimeParams:
    d0, d1 = set_fit
    sm = sym.order
    if omega is None:
        omega = sym.nu if sym.nu is not None else 0.0
    return RegimeParams(
        d0=d0, d1=max(d1, 1e-12), d2=K, d3=2.0 ** (-sm - 4) * sym.cert.c**sym.s,
        gamma1=1.0, gamma2=sm, gamma3=1.0, M=M, omega=omega, norm_C=norm_C, delta=delta,
    )


def complete_stabilizability_sweep(
    M_k: Sequence[float], omega_k: Sequence[float], nu: float, omega_plus: float
) -> int:
    """Least index ``k`` with ``omega_k > omega_plus + nu``."""
    if len(M_k) != len(omega_k):
        raise PreconditionError("M_k and omega_k differ in length")
    if any(m < 1 for m in M_k):
        raise PreconditionError("every M_k must be at least 1")
    if any(b <= a for a, b in zip(omega_k, omega_k[1:])):
        raise PreconditionError("omega_k must be strictly increasing")
    for k, w in enumerate(omega_k):
        if w > omega_plus + nu:
            return k
    raise InfeasibleError(
        f"no omega_k exceeds omega_+ + nu = {omega_plus + nu:.6g} in the provided list"
    )
