"""System, cost and driver definitions for the bilinear control problem.

A :class:`SlowFastSystem` stores the scale-free blocks of the drift, the
bilinear control channel and the noise matrix.  :func:`assemble` applies the
two-scale weights for a given ``eps`` and produces the full matrices used by
the simulator; a reduced (fast-free) system is simply an assembled system with
``n_f == 0``.  The backward-equation driver and the feedback law derived from
it live in :class:`QuadraticDriver`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    NonpositiveEps,
    RangeConditionViolated,
)


# ---------------------------------------------------------------------------
# Stopping domains


@dataclass(frozen=True)
class Box:
    """Axis-aligned open box; the slow process stops on first exit."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def contains(self, points):
        """Strict interior test for an (..., dim) array of slow states."""
        points = np.asarray(points, dtype=float)
        return np.all((points > self.lower) & (points < self.upper), axis=-1)

    @classmethod
    def centered(cls, dim, halfwidth, center=None):
        center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(center - halfwidth, center + halfwidth)


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball around a given center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.shape[0]

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        d2 = np.sum((points - self.center) ** 2, axis=-1)
        return d2 < self.radius**2


# ---------------------------------------------------------------------------
# System and cost containers


def _block(a, rows, cols, name):
    if a is None:
        return np.zeros((rows, cols))
    m = linalg.as_matrix(a, name)
    if m.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must have shape {(rows, cols)}, got {m.shape}")
    return m


@dataclass(frozen=True)
class SlowFastSystem:
    """Scale-free blocks of the two-time-scale bilinear system.

    All blocks are order-one matrices; the slow/fast weighting is applied only
    by :func:`assemble`.  Missing blocks default to zeros.  ``n_f == 0`` is
    allowed and describes a system without a fast subsystem (e.g. the output
    of the model reduction).
    """

    n_s: int
    n_f: int
    m: int
    A11: np.ndarray = None
    A12: np.ndarray = None
    A21: np.ndarray = None
    A22: np.ndarray = None
    N11: np.ndarray = None
    N12: np.ndarray = None
    N21: np.ndarray = None
    N22: np.ndarray = None
    B1: np.ndarray = None
    B2: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None
    k: int = 1

    def __post_init__(self):
        if self.n_s < 1 or self.n_f < 0 or self.m < 1 or self.k < 1:
            raise ValueError("need n_s >= 1, n_f >= 0, m >= 1, k >= 1")
        ns, nf, m, k = self.n_s, self.n_f, self.m, self.k
        object.__setattr__(self, "A11", _block(self.A11, ns, ns, "A11"))
        object.__setattr__(self, "A12", _block(self.A12, ns, nf, "A12"))
        object.__setattr__(self, "A21", _block(self.A21, nf, ns, "A21"))
        object.__setattr__(self, "A22", _block(self.A22, nf, nf, "A22"))
        object.__setattr__(self, "N11", _block(self.N11, ns, ns, "N11"))
        object.__setattr__(self, "N12", _block(self.N12, ns, nf, "N12"))
        object.__setattr__(self, "N21", _block(self.N21, nf, ns, "N21"))
        object.__setattr__(self, "N22", _block(self.N22, nf, nf, "N22"))
        object.__setattr__(self, "B1", _block(self.B1, ns, k, "B1"))
        object.__setattr__(self, "B2", _block(self.B2, nf, k, "B2"))
        object.__setattr__(self, "C1", _block(self.C1, ns, m, "C1"))
        object.__setattr__(self, "C2", _block(self.C2, nf, m, "C2"))

    @property
    def n(self):
        return self.n_s + self.n_f


@dataclass(frozen=True)
class QuadraticCost:
    """Quadratic running/terminal cost on the slow components plus domain."""

    Q0: np.ndarray
    Q1: np.ndarray
    horizon: float
    domain: object = None

    def __post_init__(self):
        q0 = linalg.as_matrix(self.Q0, "Q0")
        q1 = linalg.as_matrix(self.Q1, "Q1")
        n_s = q0.shape[0]
        if q0.shape != (n_s, n_s) or q1.shape != (n_s, n_s):
            raise DimensionMismatch("Q0 and Q1 must be square with equal shape")
        for name, q in (("Q0", q0), ("Q1", q1)):
            if not np.allclose(q, q.T, atol=1e-12 * max(1.0, np.abs(q).max())):
                raise ValueError(f"{name} must be symmetric")
            if q.size and np.linalg.eigvalsh(linalg.symmetrize(q)).min() < -1e-10 * max(
                1.0, np.abs(q).max()
            ):
                raise ValueError(f"{name} must be positive semidefinite")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.domain is not None and self.domain.dim != n_s:
            raise DimensionMismatch("domain dimension must equal n_s")
        object.__setattr__(self, "Q0", linalg.symmetrize(q0))
        object.__setattr__(self, "Q1", linalg.symmetrize(q1))

    @property
    def n_s(self):
        return self.Q0.shape[0]

    @property
    def q1_is_zero(self):
        return not np.any(self.Q1)

    def running(self, x1):
        """q0(x1) = x1' Q0 x1 / 2 for a single state or a batch."""
        x1 = np.asarray(x1, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x1, self.Q0, x1)

    def terminal(self, x1):
        """q1(x1) = x1' Q1 x1 / 2 for a single state or a batch."""
        x1 = np.asarray(x1, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x1, self.Q1, x1)


def running_cost_q0(cost, x1):
    return cost.running(x1)


def terminal_cost_q1(cost, x1):
    return cost.terminal(x1)


@dataclass(frozen=True)
class AssembledSystem:
    """Full matrices of the system at a fixed eps (or eps-free when None)."""

    A: np.ndarray
    N: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n_s: int
    n_f: int
    eps: float = None

    def __post_init__(self):
        n = self.n_s + self.n_f
        if self.A.shape != (n, n) or self.N.shape != (n, n):
            raise DimensionMismatch("A and N must be n x n")
        if self.B.shape[0] != n or self.C.shape[0] != n:
            raise DimensionMismatch("B and C must have n rows")

    @property
    def n(self):
        return self.n_s + self.n_f

    @property
    def m(self):
        return self.C.shape[1]

    @property
    def k(self):
        return self.B.shape[1]

    def slow(self, states):
        """Slow components of an (..., n) state array."""
        return np.asarray(states)[..., : self.n_s]


def assemble(sys, eps):
    """Apply the two-scale weights and return the full system matrices.

    The fast-fast drift block is weighted by 1/eps; the mixed drift blocks and
    every fast row of N, B and C by 1/sqrt(eps).  eps = 1 reproduces the plain
    block matrices.
    """
    if eps is None or eps <= 0:
        raise NonpositiveEps(f"eps must be > 0, got {eps}")
    r = 1.0 / np.sqrt(eps)
    a = np.block(
        [
            [sys.A11, r * sys.A12],
            [r * sys.A21, (1.0 / eps) * sys.A22],
        ]
    )
    n = np.block(
        [
            [sys.N11, sys.N12],
            [r * sys.N21, r * sys.N22],
        ]
    )
    b = np.vstack([sys.B1, r * sys.B2])
    c = np.vstack([sys.C1, r * sys.C2])
    return AssembledSystem(A=a, N=n, B=b, C=c, n_s=sys.n_s, n_f=sys.n_f, eps=float(eps))


# ---------------------------------------------------------------------------
# Driver of the backward equation


def _range_condition_points(n):
    """Origin plus the n canonical basis points: affinely independent."""
    return np.vstack([np.zeros((1, n)), np.eye(n)])


def range_condition_residual(N, B, C, points, proj=None):
    """Worst relative residual of (I - C C^+)(N x + B) over sample states."""
    if proj is None:
        proj = C @ linalg.pseudoinverse(C)
    worst = 0.0
    eye = np.eye(C.shape[0])
    for x in points:
        g = N @ x.reshape(-1, 1) + B
        resid = np.linalg.norm((eye - proj) @ g)
        worst = max(worst, resid / max(1.0, np.linalg.norm(g)))
    return worst


@dataclass(frozen=True)
class QuadraticDriver:
    """Driver f(x, y, z) = q0(x1) - |u*(x, z)|^2 / 2 + offset.

    ``u_star`` is the optimal feedback -(N x + B)' (C')^+ z expressed through
    the precomputed maps ``bilinear`` (n x m) and ``affine`` (k x m), so the
    same object serves the full system and the reduced one.  f never reads y.
    """

    q0: np.ndarray
    bilinear: np.ndarray
    affine: np.ndarray
    n_s: int
    offset: float = 0.0

    @property
    def k(self):
        return self.affine.shape[0]

    @property
    def m(self):
        return self.affine.shape[1]

    def u_star(self, x, z):
        """Optimal feedback for batched states x (..., n) and z (..., m)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        s = np.einsum("...i,im,...m->...", x, self.bilinear, z)
        return -(s[..., None] + z @ self.affine.T)

    def __call__(self, x, y, z):
        """Driver value; broadcasts over leading batch dimensions."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        x1 = x[..., : self.n_s]
        run = 0.5 * np.einsum("...i,ij,...j->...", x1, self.q0, x1)
        u = self.u_star(x, z)
        return run - 0.5 * np.sum(u**2, axis=-1) + self.offset


def make_driver(asys, cost, rtol=1e-9):
    """Build the driver for an assembled system, checking the range condition.

    The range condition (N x + B lies in range(C) for all x) is validated once
    here, at n + 1 affinely independent states; it guarantees that projecting
    the value gradient on range(C) loses nothing.
    """
    if cost.n_s != asys.n_s:
        raise DimensionMismatch("cost dimension must match the system's n_s")
    pinv_ct = linalg.pseudoinverse(asys.C.T)
    proj = asys.C @ linalg.pseudoinverse(asys.C)
    worst = range_condition_residual(
        asys.N, asys.B, asys.C, _range_condition_points(asys.n), proj=proj
    )
    if worst > rtol:
        raise RangeConditionViolated(
            f"(N x + B) leaves range(C): relative residual {worst:.3e} > {rtol:.1e}"
        )
    return QuadraticDriver(
        q0=cost.Q0,
        bilinear=asys.N.T @ pinv_ct,
        affine=asys.B.T @ pinv_ct,
        n_s=asys.n_s,
    )


def driver_f(asys, cost, x, y, z):
    """One-shot driver evaluation at a single point."""
    return float(make_driver(asys, cost)(np.asarray(x), y, np.asarray(z)))


# ---------------------------------------------------------------------------
# Structural validation


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    """Pass/fail summary of the structural requirements on (system, cost)."""

    checks: tuple
    q1_is_zero: bool = True

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        out = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            out.append(f"[{status}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        out.append(f"[info] terminal cost Q1 is {'zero' if self.q1_is_zero else 'nonzero'}")
        return out


def validate_condition_lq(sys, cost, rtol=1e-9):
    """Check controllability, the range condition and fast-block stability.

    Returns a report rather than raising, so a failing system can still be
    inspected.  The Q1 == 0 convention is reported as a flag, not a failure.
    """
    checks = []
    full = assemble(sys, 1.0)

    ok = linalg.kalman_controllable(full.A, full.C)
    checks.append(ConditionCheck("(A, C) controllable at eps=1", ok))

    worst = range_condition_residual(
        full.N, full.B, full.C, _range_condition_points(full.n)
    )
    checks.append(
        ConditionCheck(
            "range(N x + B) inside range(C)",
            worst <= rtol,
            f"max relative residual {worst:.3e}",
        )
    )

    checks.append(ConditionCheck("A22 Hurwitz", linalg.is_hurwitz(sys.A22)))
    checks.append(
        ConditionCheck("(A22, C2) controllable", linalg.kalman_controllable(sys.A22, sys.C2))
    )

    return ConditionReport(checks=tuple(checks), q1_is_zero=cost.q1_is_zero)
