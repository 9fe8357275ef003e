"""Brute-force check of controllability/observability duality for small systems.

For ``x' = -A x + B u`` on ``R^n`` the primal value of a direction ``x`` is the
best terminal ratio reachable with cost at most ``C ||x||``:

    primal(x) = inf { ||S_T x + L_T u|| / ||x|| : ||u||_{L_r} <= C ||x|| },

and the dual value of ``x'`` is the smallest ``alpha`` in
``||S_T' x'|| <= C ||t -> B' S_t' x'||_{L_r'} + alpha ||x'||``. The maxima of
the two over directions must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq, minimize

from .errors import PreconditionError
from .estimates import conjugate_exponent

N_LAGRANGE_STEPS = 200


def _vector_norm(v: np.ndarray, q: float) -> float:
    return float(np.linalg.norm(v, ord=q))


@dataclass(eq=False)
class FiniteSystem:
    """Finite-dimensional system with generator ``-A``, trapezoid nodes in time."""

    A: np.ndarray
    B: np.ndarray
    T: float = 1.0
    r: float = 2.0
    n_t: int = 128
    state_norm: float = 2.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise PreconditionError("A must be square and B must have as many rows as A")
        if n > 8 or self.B.shape[1] > 8:
            raise PreconditionError("state and control dimensions are limited to 8")
        if self.n_t < 64:
            raise PreconditionError("n_t must be at least 64")
        if not self.T > 0:
            raise PreconditionError("T must be positive")
        if self.state_norm not in (1.0, 2.0, math.inf):
            raise PreconditionError("state norm must be 1, 2 or inf")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_t, self.T / (self.n_t - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @cached_property
    def S_T(self) -> np.ndarray:
        return expm(-self.T * self.A)

    @cached_property
    def blocks(self) -> np.ndarray:
        """``S_{T - t_j} B`` for every node, shape ``(n_t, n, m)``.

        Built from powers of the one-step propagator, which keeps the whole
        node sequence within a few ulps of ``expm`` at each node.
        """
        step = expm(-(self.T / (self.n_t - 1)) * self.A)
        out = np.empty((self.n_t, self.n, self.m))
        cur = self.B.copy()
        for j in range(self.n_t - 1, -1, -1):
            out[j] = cur
            cur = step @ cur
        return out

    @cached_property
    def G(self) -> np.ndarray:
        """``L_T`` in the coordinates ``v_j = sqrt(w_j) u_j`` (so ``||u||_2 = |v|``)."""
        sw = np.sqrt(self.weights)[:, None, None]
        return np.concatenate(list(sw * self.blocks), axis=1)

    @cached_property
    def gram(self) -> np.ndarray:
        return self.G @ self.G.T

    @cached_property
    def gram_eig(self) -> tuple[np.ndarray, np.ndarray]:
        lam, Q = np.linalg.eigh(self.gram)
        return np.clip(lam, 0.0, None), Q

    def observed(self, x_prime: np.ndarray) -> np.ndarray:
        """``|B' S'_{T - t_j} x'|`` at every node."""
        return np.linalg.norm(np.einsum("jnm,n->jm", self.blocks, x_prime), axis=1)


def _time_norm(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    if q == math.inf:
        return float(values.max())
    return float(np.sum(weights * values**q) ** (1.0 / q))


def _primal_l2(sys: FiniteSystem, b: np.ndarray, R: float) -> float:
    """``min |b + G v|`` over ``|v| <= R`` through the Lagrange multiplier.

    For a multiplier ``mu`` the regularized least-squares solution is
    ``v = G' (G G' + mu)^{-1} (-b)``; its norm decreases in ``mu`` and the
    constrained optimum is where it equals ``R``. The root of
    ``1/|v(mu)| - 1/R`` is found by Newton steps safeguarded by bisection.
    """
    lam, Q = sys.gram_eig
    c = Q.T @ b
    pos = lam > lam.max() * 1e-14 if lam.size else np.zeros(0, bool)
    # ||v(mu)||^2 = sum lam c^2 / (lam + mu)^2 over the range of G
    lam_p, c2 = lam[pos], c[pos] ** 2
    unreachable = float(np.sum(c[~pos] ** 2))

    def v_norm(mu: float) -> float:
        return math.sqrt(float(np.sum(lam_p * c2 / (lam_p + mu) ** 2)))

    if v_norm(0.0) <= R:
        return math.sqrt(unreachable)
    if R == 0:
        return float(np.linalg.norm(b))
    hi = 1.0
    while v_norm(hi) > R:
        hi *= 4.0
    lo = hi
    while v_norm(lo) <= R:
        lo *= 0.25
    mu = lo
    for _ in range(N_LAGRANGE_STEPS):
        terms = lam_p * c2 / (lam_p + mu) ** 2
        vn = math.sqrt(float(np.sum(terms)))
        if vn > R:
            lo = mu
        else:
            hi = mu
        # d|v|/dmu = -sum(lam c^2 / (lam + mu)^3) / |v|
        dvn = -float(np.sum(terms / (lam_p + mu))) / vn
        step = (1.0 / vn - 1.0 / R) / (dvn / vn**2)
        nxt = mu + step
        if not lo < nxt < hi:
            nxt = math.sqrt(lo * hi)
        if abs(nxt - mu) <= 1e-15 * nxt or hi - lo <= 1e-15 * hi:
            mu = nxt
            break
        mu = nxt
    # residual b + G v = mu (G G' + mu)^{-1} b
    return float(mu * np.linalg.norm(np.linalg.solve(sys.gram + mu * np.eye(sys.n), b)))


def primal_value_svd(sys: FiniteSystem, x: np.ndarray, C: float) -> float:
    """Singular-value formula for the ``r = 2`` Euclidean primal value (oracle)."""
    x = np.asarray(x, float)
    xn = float(np.linalg.norm(x))
    if xn == 0:
        return 0.0
    b = sys.S_T @ x / xn
    R = C
    U, s, _ = np.linalg.svd(sys.G, full_matrices=False)
    keep = s > s.max() * 1e-14 if s.size else np.zeros(0, bool)
    U, s = U[:, keep], s[keep]
    c = U.T @ b
    perp2 = float(np.sum((b - U @ c) ** 2))

    def norm2(mu):
        return float(np.sum((s * c / (s**2 + mu)) ** 2))

    if norm2(0.0) <= R**2:
        return math.sqrt(perp2)
    if R == 0:
        return float(np.linalg.norm(b))
    hi = 1.0
    while norm2(hi) > R**2:
        hi *= 4.0
    mu = brentq(lambda m: norm2(m) - R**2, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return math.sqrt(float(np.sum((mu * c / (s**2 + mu)) ** 2)) + perp2)


def _primal_convex(sys: FiniteSystem, b: np.ndarray, R: float) -> float:
    import cvxpy as cp

    u = cp.Variable((sys.n_t, sys.m))
    terminal = b + sum(sys.blocks[j] @ u[j] * sys.weights[j] for j in range(sys.n_t))
    node = cp.norm(u, 2, axis=1)
    if sys.r == 1:
        cost = sys.weights @ node
    elif sys.r == math.inf:
        cost = cp.max(node)
    else:
        cost = cp.power(sys.weights @ cp.power(node, sys.r), 1.0 / sys.r)
    prob = cp.Problem(cp.Minimize(cp.norm(terminal, sys.state_norm)), [cost <= R])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"convex solver failed: {prob.status}")
    return float(prob.value)


def primal_value(sys: FiniteSystem, x, C: float) -> float:
    """Best ratio ``||S_T x + L_T u|| / ||x||`` over ``||u||_r <= C ||x||``."""
    x = np.asarray(x, float)
    xn = _vector_norm(x, sys.state_norm)
    if xn == 0:
        return 0.0
    if C < 0:
        raise PreconditionError("cost bound must be nonnegative")
    b = sys.S_T @ (x / xn)
    if sys.r == 2 and sys.state_norm == 2:
        return _primal_l2(sys, b, C)
    return _primal_convex(sys, b, C)


def dual_value(sys: FiniteSystem, x_prime, C: float) -> float:
    """``(||S_T' x'|| - C ||t -> B' S_t' x'||_{r'}) / ||x'||``; ``-inf`` for ``x' = 0``."""
    xp = np.asarray(x_prime, float)
    dual_state = conjugate_exponent(sys.state_norm)
    xn = _vector_norm(xp, dual_state)
    if xn == 0:
        return -math.inf
    xp = xp / xn
    lhs = _vector_norm(sys.S_T.T @ xp, dual_state)
    obs = _time_norm(sys.observed(xp), sys.weights, conjugate_exponent(sys.r))
    return lhs - C * obs


def _sphere_points(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5**0.5) * i
    rad = np.sqrt(1 - z * z)
    return np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)


def _maximize(func, dirs: np.ndarray, refine: int) -> tuple[float, np.ndarray]:
    vals = np.array([func(d) for d in dirs])
    order = np.argsort(vals)[::-1]
    best_val, best_dir = float(vals[order[0]]), dirs[order[0]]
    for k in order[:refine]:
        res = minimize(
            lambda z: -func(z) if np.linalg.norm(z) > 1e-12 else math.inf,
            dirs[k], method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 150 * len(dirs[k])},
        )
        if -res.fun > best_val:
            best_val, best_dir = float(-res.fun), res.x / np.linalg.norm(res.x)
    return best_val, best_dir


@dataclass
class DualityVerdict:
    passed: bool
    alpha_primal: float
    alpha_dual: float
    C: float
    alpha: float | None
    primal_holds: bool | None
    dual_holds: bool | None
    worst_primal_direction: list[float] = field(default_factory=list)
    worst_dual_direction: list[float] = field(default_factory=list)
    tolerance: float = 0.0

    def as_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "C": self.C,
            "alpha": self.alpha,
            "alpha_primal": self.alpha_primal,
            "alpha_dual": self.alpha_dual,
            "tolerance": self.tolerance,
            "statement_a_holds": self.primal_holds,
            "statement_b_holds": self.dual_holds,
            "worst_primal_direction": self.worst_primal_direction,
            "worst_dual_direction": self.worst_dual_direction,
        }


def extremal_values(sys: FiniteSystem, C: float, n_dirs: int = 200, seed: int = 0, refine: int = 4):
    """``(alpha_primal, alpha_dual, x_worst, x'_worst)`` by sampling plus local refinement."""
    if n_dirs < 100:
        raise PreconditionError("need at least 100 directions per side")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_dirs, sys.n))
    if sys.n <= 3 and sys.r == 2:
        dirs = np.vstack([dirs, _sphere_points(sys.n, 10_000)])
    eye = np.eye(sys.n)
    dirs = np.vstack([dirs, eye, -eye])
    ap, xp = _maximize(lambda z: primal_value(sys, z, C), dirs, refine)
    ad, xd = _maximize(lambda z: dual_value(sys, z, C), dirs, refine)
    return ap, max(ad, 0.0), xp, xd


def check_equivalence(
    sys: FiniteSystem,
    C: float,
    alpha: float | None = None,
    n_dirs: int = 200,
    seed: int = 0,
    refine: int = 4,
) -> DualityVerdict:
    """Compare the primal and dual extremal values at cost bound ``C``.

    PASS iff ``|alpha_primal - alpha_dual| <= 0.01 max(alpha_dual, 1e-6) + 1e-4``.
    With ``alpha`` given, also reports whether each statement holds at it.
    """
    ap, ad, xp, xd = extremal_values(sys, C, n_dirs, seed, refine)
    tol = 0.01 * max(ad, 1e-6) + 1e-4
    passed = abs(ap - ad) <= tol
    a_holds = b_holds = None
    if alpha is not None:
        a_holds = ap <= alpha
        b_holds = ad <= alpha
    return DualityVerdict(
        passed, ap, ad, C, alpha, a_holds, b_holds,
        [float(v) for v in xp], [float(v) for v in xd], tol,
    )


def random_stable_system(n: int, m: int, rng: np.random.Generator, T: float = 1.0, r: float = 2.0, n_t: int = 128) -> FiniteSystem:
    """Random ``A`` with spectrum in the right half plane (so ``-A`` is stable)."""
    X = rng.standard_normal((n, n))
    K = rng.standard_normal((n, n))
    A = X @ X.T / n + 0.1 * np.eye(n) + 0.5 * (K - K.T)
    B = rng.standard_normal((n, m))
    return FiniteSystem(A, B, T=T, r=r, n_t=n_t)
