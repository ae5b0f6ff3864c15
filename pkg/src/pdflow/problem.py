"""Convex problem descriptions, KKT machinery, and a brute-force active-set oracle.

The problem class handled throughout is

    minimize f(x)   subject to   h(x) = A x + b = 0,   g_i(x) <= 0,

with f strictly convex (positive definite Hessian), h affine, and each g_i
convex with positive semidefinite Hessian. Oracles expose value/gradient/
Hessian triples so the dynamics and the certificate checks can query exact
derivatives. All containers are frozen; oracles are pure functions of their
inputs, so problems are safe to share across concurrent simulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Quadratic",
    "AffineScalar",
    "QuadraticScalar",
    "SmoothScalar",
    "AffineMap",
    "ConvexProblem",
    "KktPoint",
    "KktResidual",
    "quadratic_problem",
    "lagrangian_gradient",
    "kkt_residual",
    "active_set_oracle",
    "quadratic_data",
    "InfeasibleProblemError",
    "OracleCapabilityError",
]


class InfeasibleProblemError(RuntimeError):
    """No candidate active set yields a valid KKT point."""


class OracleCapabilityError(ValueError):
    """Problem falls outside what the enumeration oracle can solve exactly."""


def _vec(a, name: str) -> np.ndarray:
    out = np.atleast_1d(np.asarray(a, dtype=float))
    if out.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {out.shape}")
    return out


def _mat(a, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class Quadratic:
    """f(x) = 0.5 x'Hx + c'x + const with H symmetric positive definite."""

    H: np.ndarray
    c: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        H = _mat(self.H, "H")
        c = _vec(self.c, "c")
        if H.shape != (c.size, c.size):
            raise ValueError(f"H shape {H.shape} incompatible with c size {c.size}")
        if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
            raise ValueError("H must be symmetric")
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise ValueError("H must be positive definite") from None
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "const", float(self.const))

    @property
    def n(self) -> int:
        return self.c.size

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.c @ x + self.const)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.H @ x + self.c

    def hess(self, x: np.ndarray) -> np.ndarray:
        return self.H


@dataclass(frozen=True)
class AffineScalar:
    """g(x) = a'x + b. Hessian is identically zero."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def n(self) -> int:
        return self.a.size

    def value(self, x: np.ndarray) -> float:
        return float(self.a @ x + self.b)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.a

    def hess(self, x: np.ndarray) -> np.ndarray:
        return np.zeros((self.a.size, self.a.size))


@dataclass(frozen=True)
class QuadraticScalar:
    """g(x) = 0.5 x'Px + q'x + r with P symmetric positive semidefinite."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        P = _mat(self.P, "P")
        q = _vec(self.q, "q")
        if P.shape != (q.size, q.size):
            raise ValueError("P shape incompatible with q")
        scale = max(1.0, np.abs(P).max(initial=0.0))
        if not np.allclose(P, P.T, atol=1e-12 * scale):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(P).min(initial=0.0) < -1e-10 * scale:
            raise ValueError("P must be positive semidefinite")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return self.q.size

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.r)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x + self.q

    def hess(self, x: np.ndarray) -> np.ndarray:
        return self.P


@dataclass(frozen=True)
class SmoothScalar:
    """Wrap user callables (value, grad, hess) as a scalar oracle.

    The callables must be pure; convexity is the caller's obligation and is
    only spot-checked by the property tests, never enforced here.
    """

    value_fn: object
    grad_fn: object
    hess_fn: object

    def value(self, x: np.ndarray) -> float:
        return float(self.value_fn(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.grad_fn(x), dtype=float)

    def hess(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.hess_fn(x), dtype=float)


@dataclass(frozen=True)
class AffineMap:
    """h(x) = A x + b, the equality-constraint block (m rows)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            A = A.reshape(0, 0) if A.size == 0 else np.atleast_2d(A)
        b = _vec(self.b, "b") if np.size(self.b) else np.zeros(0)
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def values(self, x: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return self.A @ x + self.b


def _stack_affine(constraints) -> tuple[np.ndarray, np.ndarray] | None:
    """Return stacked (G, d) if every constraint is affine, else None."""
    if not constraints:
        return None
    if not all(isinstance(c, AffineScalar) for c in constraints):
        return None
    G = np.vstack([c.a for c in constraints])
    d = np.array([c.b for c in constraints])
    return G, d


@dataclass(frozen=True)
class ConvexProblem:
    """Objective plus affine equalities and convex inequalities over R^n."""

    objective: object
    equality: AffineMap
    inequalities: tuple
    n: int
    _affine_ineq: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        if self.equality.m and self.equality.A.shape[1] != self.n:
            raise ValueError(
                f"equality block has {self.equality.A.shape[1]} columns, expected {self.n}"
            )
        for j, g in enumerate(self.inequalities):
            gn = getattr(g, "n", self.n)
            if gn != self.n:
                raise ValueError(f"inequality {j} has dimension {gn}, expected {self.n}")
        object.__setattr__(self, "_affine_ineq", _stack_affine(self.inequalities))

    @property
    def m(self) -> int:
        return self.equality.m

    @property
    def p(self) -> int:
        return len(self.inequalities)

    def eq_values(self, x: np.ndarray) -> np.ndarray:
        return self.equality.values(x)

    def ineq_values(self, x: np.ndarray) -> np.ndarray:
        if self._affine_ineq is not None:
            G, d = self._affine_ineq
            return G @ x + d
        return np.array([g.value(x) for g in self.inequalities])

    def ineq_grads(self, x: np.ndarray) -> np.ndarray:
        if self._affine_ineq is not None:
            return self._affine_ineq[0]
        if not self.inequalities:
            return np.zeros((0, self.n))
        return np.vstack([g.grad(x) for g in self.inequalities])

    def ineq_hessians(self, x: np.ndarray) -> np.ndarray:
        if not self.inequalities:
            return np.zeros((0, self.n, self.n))
        return np.stack([g.hess(x) for g in self.inequalities])

    def equality_part(self) -> "ConvexProblem":
        """The same objective and equalities with all inequalities dropped."""
        return ConvexProblem(self.objective, self.equality, (), self.n)


def quadratic_problem(H, c, const=0.0, A_eq=None, b_eq=None, G=None, d=None) -> ConvexProblem:
    """Assemble a quadratic/affine problem from raw arrays.

    Objective 0.5 x'Hx + c'x + const, equalities A_eq x + b_eq = 0 and
    inequality rows G_j x + d_j <= 0. This is the form the scenario files and
    the enumeration oracle work with.
    """
    obj = Quadratic(H, c, const)
    n = obj.n
    if A_eq is None or np.size(A_eq) == 0:
        eq = AffineMap(np.zeros((0, n)), np.zeros(0))
    else:
        if b_eq is None:
            raise ValueError("A_eq given without b_eq")
        eq = AffineMap(np.atleast_2d(np.asarray(A_eq, dtype=float)), b_eq)
    cons = ()
    if G is not None and np.size(G) > 0:
        Gm = np.atleast_2d(np.asarray(G, dtype=float))
        dv = _vec(d, "d")
        if Gm.shape[0] != dv.size:
            raise ValueError("G rows and d entries disagree")
        cons = tuple(AffineScalar(Gm[j], dv[j]) for j in range(Gm.shape[0]))
    return ConvexProblem(obj, eq, cons, n)


@dataclass(frozen=True)
class KktPoint:
    """Primal-dual triple (x, lam, mu) with mu >= 0 componentwise."""

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x, "x") if np.size(self.x) else np.zeros(0))
        object.__setattr__(self, "lam", _vec(self.lam, "lam") if np.size(self.lam) else np.zeros(0))
        object.__setattr__(self, "mu", _vec(self.mu, "mu") if np.size(self.mu) else np.zeros(0))


@dataclass(frozen=True)
class KktResidual:
    """Max-norm defects of the first-order optimality conditions."""

    stationarity: float
    equality: float
    inequality: float
    complementarity: float
    dual_negativity: float

    @property
    def max_defect(self) -> float:
        return max(
            self.stationarity,
            self.equality,
            self.inequality,
            self.complementarity,
            self.dual_negativity,
        )


def lagrangian_gradient(problem: ConvexProblem, x, lam, mu):
    """Evaluate (grad_x L, h(x), g(x)) with L = f + lam'h + mu'g.

    Raises ValueError on dimension mismatch; oracle failures propagate.
    """
    x = _vec(x, "x") if np.size(x) else np.zeros(0)
    lam = _vec(lam, "lam") if np.size(lam) else np.zeros(0)
    mu = _vec(mu, "mu") if np.size(mu) else np.zeros(0)
    if x.size != problem.n:
        raise ValueError(f"x has size {x.size}, expected {problem.n}")
    if lam.size != problem.m:
        raise ValueError(f"lam has size {lam.size}, expected {problem.m}")
    if mu.size != problem.p:
        raise ValueError(f"mu has size {mu.size}, expected {problem.p}")
    grad = problem.objective.grad(x)
    if problem.m:
        grad = grad + problem.equality.A.T @ lam
    if problem.p:
        grad = grad + mu @ problem.ineq_grads(x)
    return grad, problem.eq_values(x), problem.ineq_values(x)


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a), initial=0.0))


def kkt_residual(problem: ConvexProblem, point: KktPoint) -> KktResidual:
    """Max-norm KKT defects; all zero (up to tolerance) iff point is optimal."""
    grad, h, g = lagrangian_gradient(problem, point.x, point.lam, point.mu)
    return KktResidual(
        stationarity=_max_abs(grad),
        equality=_max_abs(h),
        inequality=_max_abs(np.maximum(g, 0.0)),
        complementarity=_max_abs(point.mu * g),
        dual_negativity=_max_abs(np.maximum(-point.mu, 0.0)),
    )


def quadratic_data(problem: ConvexProblem):
    """Extract (H, c, A, b, G, d) or raise OracleCapabilityError.

    Only problems with a Quadratic objective and purely affine constraints
    can be solved exactly by the enumeration oracle.
    """
    if not isinstance(problem.objective, Quadratic):
        raise OracleCapabilityError("objective is not quadratic")
    if problem.p and problem._affine_ineq is None:
        raise OracleCapabilityError("inequality constraints are not all affine")
    if problem._affine_ineq is not None:
        G, d = problem._affine_ineq
    else:
        G, d = np.zeros((0, problem.n)), np.zeros(0)
    return (
        problem.objective.H,
        problem.objective.c,
        problem.equality.A,
        problem.equality.b,
        G,
        d,
    )


def active_set_oracle(
    problem: ConvexProblem, *, tol: float = 1e-10, enumeration_limit: int = 20
) -> KktPoint:
    """Exhaustive active-set ground truth for quadratic/affine problems.

    Enumerates every subset of the p inequality constraints (empty set first,
    then by bitmask value), solves the stationarity plus active-constraint
    linear system for each, and returns the first candidate that is primal
    feasible with nonnegative multipliers on the active set. Singular
    candidate systems are skipped. The returned point always satisfies
    kkt_residual <= tol; if no subset qualifies the problem is infeasible.
    """
    H, c, A, b, G, d = quadratic_data(problem)
    n, m, p = problem.n, problem.m, problem.p
    if p > enumeration_limit:
        raise OracleCapabilityError(
            f"p={p} exceeds enumeration limit {enumeration_limit}"
        )
    for mask in range(1 << p):
        active = [i for i in range(p) if mask >> i & 1]
        k = len(active)
        Ga = G[active] if k else np.zeros((0, n))
        da = d[active] if k else np.zeros(0)
        size = n + m + k
        kkt = np.zeros((size, size))
        kkt[:n, :n] = H
        if m:
            kkt[n : n + m, :n] = A
            kkt[:n, n : n + m] = A.T
        if k:
            kkt[n + m :, :n] = Ga
            kkt[:n, n + m :] = Ga.T
        rhs = np.concatenate([-c, -b, -da])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x = sol[:n]
        lam = sol[n : n + m]
        mu_active = sol[n + m :]
        if k and mu_active.min(initial=0.0) < -tol:
            continue
        g_all = G @ x + d if p else np.zeros(0)
        inactive = [i for i in range(p) if not (mask >> i & 1)]
        if inactive and g_all[inactive].max(initial=-np.inf) > tol:
            continue
        mu = np.zeros(p)
        if k:
            mu[active] = np.maximum(mu_active, 0.0)
        point = KktPoint(x, lam, mu)
        if kkt_residual(problem, point).max_defect <= tol:
            return point
    raise InfeasibleProblemError("no active set yields a feasible KKT point")
