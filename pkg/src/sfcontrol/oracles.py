"""Independent ground-truth routes for validating the regression solver.

Three oracles that never touch the backward regression: a matrix Riccati ODE
for the linear-quadratic case, the log-exponential (Feynman-Kac) identity for
the value of the linear problem with B = C, and Gaussian quadrature for the
invariant-measure average of the driver.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import (
    DegenerateExponential,
    DimensionMismatch,
    QuadratureFallbackWarning,
    StepTooCoarse,
)
from .rng import gaussian_block
from .sde import n_grid_steps

#: Tensor-product quadrature is refused above this many fast dimensions.
MAX_TENSOR_DIM = 6


# ---------------------------------------------------------------------------
# Riccati oracle


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward Riccati solution: V(t, x) = x' P(t) x / 2 + c(t)."""

    grid: np.ndarray
    P: np.ndarray  # (len(grid), n, n)
    c: np.ndarray  # (len(grid),)

    def value(self, t, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        p_t, c_t = self._interp(t)
        return 0.5 * float(x @ p_t @ x) + c_t

    def gain(self, t):
        """P(t), for forming the optimal feedback -B' P(t) x."""
        return self._interp(t)[0]

    def _interp(self, t):
        grid = self.grid
        if t < grid[0] - 1e-12 or t > grid[-1] + 1e-12:
            raise ValueError(f"t={t} outside the solved horizon")
        j = int(np.clip(np.searchsorted(grid, t), 0, len(grid) - 1))
        if abs(grid[j] - t) <= 1e-12:
            return self.P[j], float(self.c[j])
        if j > 0 and abs(grid[j - 1] - t) <= 1e-12:
            return self.P[j - 1], float(self.c[j - 1])
        j = max(1, j)
        w = (t - grid[j - 1]) / (grid[j] - grid[j - 1])
        return (1 - w) * self.P[j - 1] + w * self.P[j], float(
            (1 - w) * self.c[j - 1] + w * self.c[j]
        )


def _riccati_sweep(a, bc, cc_t, q, q1, horizon, n_steps):
    """Classic RK4 backward sweep; returns grid (forward time), P, c."""
    h = horizon / n_steps
    n = a.shape[0]
    p_grid = np.empty((n_steps + 1, n, n))
    c_grid = np.empty(n_steps + 1)
    p_grid[n_steps] = q1
    c_grid[n_steps] = 0.0

    def rhs_p(p):
        # dP/ds in backward time s = T - t
        return q + a.T @ p + p @ a - p @ bc @ bc.T @ p

    def rhs_c(p):
        return 0.5 * float(np.trace(cc_t @ p))

    p = q1.copy()
    c = 0.0
    for j in range(n_steps, 0, -1):
        k1 = rhs_p(p)
        k2 = rhs_p(p + 0.5 * h * k1)
        k3 = rhs_p(p + 0.5 * h * k2)
        k4 = rhs_p(p + h * k3)
        l1 = rhs_c(p)
        l2 = rhs_c(p + 0.5 * h * k1)
        l3 = rhs_c(p + 0.5 * h * k2)
        l4 = rhs_c(p + h * k3)
        p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = 0.5 * (p + p.T)
        c = c + (h / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4)
        p_grid[j - 1] = p
        c_grid[j - 1] = c
    grid = np.linspace(0.0, horizon, n_steps + 1)
    return grid, p_grid, c_grid


def riccati_solve(a, bc, c, q, q1, horizon, dt_ode, tol=1e-8):
    """Solve -dP/dt = Q + A'P + PA - P Bc Bc' P, -dc/dt = tr(C C' P)/2.

    Terminal data P(T) = q1, c(T) = 0.  The sweep is repeated with half the
    step; if P(0), c(0) move by more than ``tol`` the step is declared too
    coarse.  The half-step solution is returned.
    """
    a = np.asarray(a, dtype=float)
    bc = np.asarray(bc, dtype=float)
    if bc.ndim == 1:
        bc = bc.reshape(-1, 1)
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    q = np.asarray(q, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    n = a.shape[0]
    for name, mat in (("A", a), ("Q", q), ("Q1", q1)):
        if mat.shape != (n, n):
            raise DimensionMismatch(f"{name} must be {n}x{n}")
    if bc.shape[0] != n or c.shape[0] != n:
        raise DimensionMismatch("Bc and C must have n rows")

    n_steps = n_grid_steps(dt_ode, horizon)
    cc_t = c @ c.T
    _, p_coarse, c_coarse = _riccati_sweep(a, bc, cc_t, q, q1, horizon, n_steps)
    grid, p_fine, c_fine = _riccati_sweep(a, bc, cc_t, q, q1, horizon, 2 * n_steps)
    drift = np.linalg.norm(p_fine[0] - p_coarse[0]) + abs(c_fine[0] - c_coarse[0])
    if drift > tol:
        raise StepTooCoarse(
            f"halving dt_ode moved the t=0 Riccati data by {drift:.3e} > {tol:.1e}"
        )
    return RiccatiSolution(grid=grid, P=p_fine, c=c_fine)


# ---------------------------------------------------------------------------
# Log-exponential Monte Carlo value (linear case, B = C)


@dataclass(frozen=True)
class MonteCarloValue:
    value: float
    std_err: float


def feynman_kac_value(asys, cost, x0, dt, horizon, n_paths, seed, chunk_size=50_000):
    """Value of the linear problem as -log E[exp(-accumulated cost)].

    Valid for N = 0 and B = C (checked); the expectation runs over control-free
    paths with the same exit/freeze convention as the simulator.  The standard
    error is propagated through the log by the delta method.
    """
    if np.any(asys.N):
        raise ValueError("log-exponential identity requires N = 0")
    if asys.B.shape != asys.C.shape or not np.array_equal(asys.B, asys.C):
        raise ValueError("log-exponential identity requires B = C")
    n_steps = n_grid_steps(dt, horizon)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    domain = cost.domain
    if domain is not None and not bool(domain.contains(x0[: asys.n_s])):
        raise ValueError("x0's slow part must lie inside the domain")

    a_t = asys.A.T
    c_t = asys.C.T
    sqrt_dt = np.sqrt(dt)
    total_w = 0.0
    total_w2 = 0.0

    for start in range(0, n_paths, chunk_size):
        count = min(chunk_size, n_paths - start)
        paths = np.arange(start, start + count, dtype=np.uint64)
        x = np.broadcast_to(x0, (count, asys.n)).copy()
        active = np.ones(count, dtype=bool)
        acc = np.zeros(count)
        for step in range(n_steps):
            acc += dt * cost.running(x[:, : asys.n_s]) * active
            dw = sqrt_dt * gaussian_block(seed, paths, step, asys.m)
            x_next = x + dt * (x @ a_t) + dw @ c_t
            x_next[~active] = x[~active]
            if domain is not None:
                active &= domain.contains(x_next[:, : asys.n_s])
            x = x_next
        acc += cost.terminal(x[:, : asys.n_s])
        w = np.exp(-acc)
        total_w += float(np.sum(w))
        total_w2 += float(np.sum(w**2))

    mean_w = total_w / n_paths
    if mean_w <= 0.0 or not np.isfinite(mean_w):
        raise DegenerateExponential("all exponential weights underflowed")
    var_w = max(total_w2 / n_paths - mean_w**2, 0.0) * n_paths / max(n_paths - 1, 1)
    std_err = float(np.sqrt(var_w / n_paths) / mean_w)
    return MonteCarloValue(value=float(-np.log(mean_w)), std_err=std_err)


# ---------------------------------------------------------------------------
# Invariant-measure average of the driver


@dataclass(frozen=True)
class QuadratureResult:
    values: np.ndarray
    std_err: np.ndarray = None  # populated only by the Monte Carlo route
    method: str = "gauss_hermite"


def gauss_hermite_rule(order, dim):
    """Nodes/weights for E[g(Y)], Y ~ N(0, I_dim), exact to degree 2*order-1."""
    t, w = np.polynomial.hermite.hermgauss(order)
    nodes_1d = np.sqrt(2.0) * t
    weights_1d = w / np.sqrt(np.pi)
    grids = np.meshgrid(*([nodes_1d] * dim), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weight_grids = np.meshgrid(*([weights_1d] * dim), indexing="ij")
    weights = np.ones(nodes.shape[0])
    for g in weight_grids:
        weights = weights * g.reshape(-1)
    return nodes, weights


def gaussian_expectation(func, sigma, order=10):
    """E[func(X)] for X ~ N(0, sigma) by whitened tensor quadrature."""
    sigma = np.asarray(sigma, dtype=float)
    dim = sigma.shape[0]
    if dim == 0:
        return float(func(np.zeros((1, 0)))[0])
    chol = np.linalg.cholesky(sigma)
    nodes, weights = gauss_hermite_rule(order, dim)
    return float(weights @ np.asarray(func(nodes @ chol.T), dtype=float))


def quadrature_average_driver(
    sys,
    cost,
    sigma,
    probes,
    order=10,
    method="auto",
    mc_samples=1_000_000,
    mc_seed=0,
):
    """Average f((x1, .), y, z1) over the fast invariant law N(0, sigma).

    ``probes`` is a sequence of (x1, z1) pairs; z1 shorter than m is padded
    with zeros.  Above MAX_TENSOR_DIM fast dimensions the tensor grid is
    infeasible and a seeded Monte Carlo fallback (with reported standard
    errors) is used instead.
    """
    full = model.assemble(sys, 1.0)
    driver = model.make_driver(full, cost)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (sys.n_f, sys.n_f):
        raise DimensionMismatch("sigma must be n_f x n_f")

    if method == "auto":
        if sys.n_f > MAX_TENSOR_DIM:
            warnings.warn(
                f"n_f = {sys.n_f} > {MAX_TENSOR_DIM}: tensor quadrature infeasible, "
                "falling back to Monte Carlo",
                QuadratureFallbackWarning,
                stacklevel=2,
            )
            method = "monte_carlo"
        else:
            method = "gauss_hermite"

    def pad_z(z1):
        z1 = np.asarray(z1, dtype=float).reshape(-1)
        if z1.shape[0] > full.m:
            raise DimensionMismatch(f"probe z has length {z1.shape[0]} > m = {full.m}")
        z = np.zeros(full.m)
        z[: z1.shape[0]] = z1
        return z

    def batch_f(x1, z, x2_batch):
        n_pts = x2_batch.shape[0]
        states = np.empty((n_pts, sys.n_s + sys.n_f))
        states[:, : sys.n_s] = x1
        states[:, sys.n_s :] = x2_batch
        return driver(states, np.zeros(n_pts), np.broadcast_to(z, (n_pts, full.m)))

    values = np.empty(len(probes))
    errors = np.empty(len(probes)) if method == "monte_carlo" else None

    if method == "gauss_hermite":
        if sys.n_f == 0:
            x2_nodes = np.zeros((1, 0))
            weights = np.ones(1)
        else:
            chol = np.linalg.cholesky(sigma)
            nodes, weights = gauss_hermite_rule(order, sys.n_f)
            x2_nodes = nodes @ chol.T
        for i, (x1, z1) in enumerate(probes):
            values[i] = weights @ batch_f(np.asarray(x1, dtype=float), pad_z(z1), x2_nodes)
    elif method == "monte_carlo":
        if sys.n_f == 0:
            x2_samples = np.zeros((1, 0))
        else:
            chol = np.linalg.cholesky(sigma)
            g = gaussian_block(mc_seed, np.arange(mc_samples, dtype=np.uint64), 0, sys.n_f)
            x2_samples = g @ chol.T
        n_pts = x2_samples.shape[0]
        for i, (x1, z1) in enumerate(probes):
            f_vals = batch_f(np.asarray(x1, dtype=float), pad_z(z1), x2_samples)
            values[i] = np.mean(f_vals)
            errors[i] = np.std(f_vals, ddof=1) / np.sqrt(n_pts) if n_pts > 1 else 0.0
    else:
        raise ValueError(f"unknown method {method!r}")

    return QuadratureResult(values=values, std_err=errors, method=method)
