"""Least-squares Monte Carlo solver for the backward equation.

The value function is represented per time step as a linear combination of
Gaussian bumps whose centers ride on dedicated auxiliary forward trajectories.
The backward sweep regresses, at every step n, the one-step target
``Y_{n+1} + dt * f(X_n, Y_{n+1}, Z_n)`` onto the step-n basis, where ``Z_n``
is read off the closed-form gradient of the step-(n+1) fit.  Paths that left
the stopping domain keep their boundary value and contribute no driver term,
but their rows stay in the regression.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import linalg, sde
from .errors import DegenerateDesign, DimensionMismatch, InitialStateOutsideDomain
from .rng import gaussian_block

#: Ridge fallback weight relative to ||A_n||_F^2 when the design is singular.
RIDGE_FALLBACK_SCALE = 1e-8


@dataclass(frozen=True)
class BasisSet:
    """Moving Gaussian basis: centers (n_steps+1, K, d) and width delta."""

    centers: np.ndarray
    width: float
    dt: float

    def __post_init__(self):
        if self.centers.ndim != 3:
            raise DimensionMismatch("centers must have shape (n_steps+1, K, d)")
        if self.width <= 0:
            raise ValueError("basis width must be positive")
        # |mu|^2 per (step, center), for the gemm form of the distances
        object.__setattr__(self, "_center_sq", np.sum(self.centers**2, axis=2))

    @property
    def size(self):
        return self.centers.shape[1]

    @property
    def n_steps(self):
        return self.centers.shape[0] - 1

    @property
    def dim(self):
        return self.centers.shape[2]

    def design(self, x, n):
        """Kernel matrix phi_k(x_i) = exp(-|mu_k(n) - x_i|^2 / (2 width))."""
        x = np.asarray(x, dtype=float)
        d2 = self._center_sq[n][None, :] - 2.0 * (x @ self.centers[n].T)
        d2 += np.sum(x**2, axis=1)[:, None]
        np.maximum(d2, 0.0, out=d2)
        return np.exp(d2 / (-2.0 * self.width))

    def value(self, x, n, coeffs):
        return self.design(x, n) @ coeffs

    def gradient(self, x, n, coeffs, phi=None):
        """Closed-form gradient sum_k a_k phi_k(x) (mu_k - x) / width."""
        x = np.asarray(x, dtype=float)
        if phi is None:
            phi = self.design(x, n)
        weighted = phi * coeffs[None, :]
        return (weighted @ self.centers[n] - np.sum(weighted, axis=1)[:, None] * x) / self.width


def build_basis(asys, x0, dt, horizon, n_basis, width, seed, domain=None):
    """Simulate ``n_basis`` auxiliary trajectories and use them as centers.

    The seed must be disjoint from the regression ensemble's seed so that the
    design is independent of the data paths.
    """
    if n_basis < 1:
        raise ValueError("need at least one basis trajectory")
    aux = sde.simulate(asys, x0, dt, horizon, n_basis, seed, domain=domain)
    return BasisSet(centers=aux.states.transpose(1, 0, 2).copy(), width=float(width), dt=float(dt))


@dataclass(frozen=True)
class ValueField:
    """Per-step regression coefficients defining Y, its gradient and Z."""

    alpha: np.ndarray  # (n_steps+1, K)
    basis: BasisSet
    ridge_used: np.ndarray  # (n_steps+1,)
    rank_report: np.ndarray  # (n_steps+1,)
    dt: float

    @property
    def n_steps(self):
        return self.alpha.shape[0] - 1

    def value_batch(self, x, n):
        return self.basis.value(np.atleast_2d(x), n, self.alpha[n])

    def gradient_batch(self, x, n):
        return self.basis.gradient(np.atleast_2d(x), n, self.alpha[n])


def evaluate_value(vf, x, n):
    """Fitted value sum_k alpha_k(n) phi_k(x) at a single state."""
    return float(vf.value_batch(np.asarray(x, dtype=float), n)[0])


def evaluate_gradient(vf, x, n):
    """Closed-form gradient of the fitted value at a single state."""
    return vf.gradient_batch(np.asarray(x, dtype=float), n)[0]


def evaluate_Z(vf, x, n, noise):
    """Z(x) = C' grad Y(x) for noise matrix C."""
    return np.asarray(noise, dtype=float).T @ evaluate_gradient(vf, x, n)


def _regress(design, target, ridge, ridge_fallback, step):
    sol = linalg.solve_least_squares(design, target, ridge=ridge, warn_rank_deficient=False)
    used = ridge
    if sol.rank < design.shape[1] and ridge == 0.0 and ridge_fallback:
        used = RIDGE_FALLBACK_SCALE * float(np.sum(design**2))
        if used > 0.0:
            coeffs = linalg.ridge_lstsq(design, target, used)
            sol = linalg.LeastSquaresSolution(coeffs=coeffs, rank=sol.rank)
    if not np.all(np.isfinite(sol.coeffs)):
        raise DegenerateDesign(step, "regression produced non-finite coefficients")
    return sol, used


def backward_solve(
    ensemble,
    basis,
    driver,
    terminal,
    noise,
    ridge=0.0,
    ridge_fallback=True,
    access_log=None,
):
    """Backward regression sweep; returns the fitted ValueField.

    ``driver`` is called with batched arrays (X_n, Y_next, Z_n); ``terminal``
    maps a batch of full states to q1 values; ``noise`` is the C matrix of the
    simulated system.  ``access_log`` (if given) records every ensemble/alpha
    read as (solving_step, kind, accessed_step) for adaptedness checks.
    """
    n_steps = ensemble.n_steps
    if basis.n_steps != n_steps:
        raise DimensionMismatch("basis and ensemble disagree on the number of steps")
    if abs(basis.dt - ensemble.dt) > 1e-12 * max(1.0, ensemble.dt):
        raise DimensionMismatch("basis and ensemble disagree on dt")
    if basis.dim != ensemble.dim:
        raise DimensionMismatch("basis and ensemble disagree on the state dimension")
    noise = np.asarray(noise, dtype=float)
    if noise.shape[0] != ensemble.dim:
        raise DimensionMismatch("noise matrix must have one row per state dimension")

    n_basis = basis.size
    dt = ensemble.dt
    alpha = np.zeros((n_steps + 1, n_basis))
    ridge_used = np.zeros(n_steps + 1)
    rank_report = np.zeros(n_steps + 1, dtype=np.int64)

    current = n_steps

    def states_at(n):
        if access_log is not None:
            access_log.append((current, "states", n))
        return ensemble.states[:, n]

    def alpha_at(n):
        if access_log is not None:
            access_log.append((current, "alpha", n))
        return alpha[n]

    # Boundary values: q1 at the own exit state (terminal state if no exit).
    pinned = np.asarray(terminal(ensemble.exit_states()), dtype=float)

    y_terminal = np.asarray(terminal(states_at(n_steps)), dtype=float)
    design_next = basis.design(states_at(n_steps), n_steps)
    sol, used = _regress(design_next, y_terminal, ridge, ridge_fallback, n_steps)
    alpha[n_steps] = sol.coeffs
    ridge_used[n_steps] = used
    rank_report[n_steps] = sol.rank

    for n in range(n_steps - 1, -1, -1):
        current = n
        x_n = states_at(n)
        coeff_next = alpha_at(n + 1)

        if n + 1 == n_steps:
            # Terminal values enter the first backward step exactly.
            y_next = y_terminal
        else:
            # design_next was built at iteration n+1 from states_at(n+1).
            y_next = design_next @ coeff_next
        stopped_next = ensemble.stopped_before(n + 1)
        if np.any(stopped_next):
            y_next = np.where(stopped_next, pinned, y_next)

        z_n = basis.gradient(x_n, n + 1, coeff_next) @ noise
        f_vals = np.asarray(driver(x_n, y_next, z_n), dtype=float)
        running = ensemble.exit_index > n
        target = y_next + dt * np.where(running, f_vals, 0.0)

        design_n = basis.design(x_n, n)
        sol, used = _regress(design_n, target, ridge, ridge_fallback, n)
        alpha[n] = sol.coeffs
        ridge_used[n] = used
        rank_report[n] = sol.rank
        design_next = design_n

    return ValueField(
        alpha=alpha, basis=basis, ridge_used=ridge_used, rank_report=rank_report, dt=dt
    )


def extract_control(vf, asys, x, n):
    """Optimal feedback u = -(N x + B)' (C')^+ Z(x, n) at a single state."""
    x = np.asarray(x, dtype=float)
    z = evaluate_Z(vf, x, n, asys.C)
    w = linalg.pseudoinverse(asys.C.T) @ z
    return -((asys.N @ x)[:, None] + asys.B).T @ w


@dataclass(frozen=True)
class ControlledCostEstimate:
    """Monte Carlo estimate of the cost of a feedback law."""

    value: float
    std_err: float
    exit_fraction: float


def apply_control_and_cost(asys, cost, vf, vf_system, x0, dt, horizon, n_paths, seed):
    """Simulate the controlled dynamics under the fitted feedback; return J.

    ``vf`` was solved on ``vf_system`` (full or reduced).  When the value
    field lives on fewer dimensions than ``asys`` the feedback reads only the
    slow components of the simulated state.  ``vf=None`` applies zero control,
    which reproduces the uncontrolled expected cost.
    """
    n_steps = sde.n_grid_steps(dt, horizon)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != asys.n:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, system expects {asys.n}")
    domain = cost.domain
    if domain is not None and not bool(domain.contains(x0[: asys.n_s])):
        raise InitialStateOutsideDomain("x0's slow part must lie strictly inside the domain")

    if vf is not None:
        if vf.n_steps != n_steps:
            raise DimensionMismatch("value field was solved on a different grid")
        d_eval = vf_system.n
        if d_eval > asys.n:
            raise DimensionMismatch("feedback state dimension exceeds simulated system")
        pinv_ct = linalg.pseudoinverse(vf_system.C.T)
        fb_bilinear = vf_system.N.T @ pinv_ct  # (d_eval, m_vf)
        fb_affine = vf_system.B.T @ pinv_ct  # (k, m_vf)
        vf_noise = vf_system.C

    a_t = asys.A.T
    c_t = asys.C.T
    n_t = asys.N.T
    sqrt_dt = np.sqrt(dt)
    paths = np.arange(n_paths, dtype=np.uint64)

    x = np.broadcast_to(x0, (n_paths, asys.n)).copy()
    active = np.ones(n_paths, dtype=bool)
    total = np.zeros(n_paths)

    for step in range(n_steps):
        if vf is not None:
            x_eval = x[:, :d_eval]
            z = vf.gradient_batch(x_eval, step) @ vf_noise
            s = np.einsum("id,dm,im->i", x_eval, fb_bilinear, z)
            u = -(s[:, None] + z @ fb_affine.T)
        else:
            u = np.zeros((n_paths, asys.k))

        run = cost.running(x[:, : asys.n_s]) + 0.5 * np.sum(u**2, axis=1)
        total += dt * run * active

        dw = sqrt_dt * gaussian_block(seed, paths, step, asys.m)
        drift_control = (x @ n_t) * np.sum(u, axis=1)[:, None] + u @ asys.B.T
        x_next = x + dt * (x @ a_t + drift_control) + dw @ c_t
        x_next[~active] = x[~active]
        if domain is not None:
            inside = domain.contains(x_next[:, : asys.n_s])
            active &= inside
        x = x_next

    total += cost.terminal(x[:, : asys.n_s])
    value = float(np.mean(total))
    std_err = float(np.std(total, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return ControlledCostEstimate(
        value=value, std_err=std_err, exit_fraction=float(np.mean(~active))
    )


def value_field_to_csv(vf, fileobj):
    """One row per (step, basis index): coefficient plus center coordinates."""
    writer = csv.writer(fileobj)
    dim = vf.basis.dim
    writer.writerow(["step", "k", "alpha", "ridge", "rank", *[f"mu{j}" for j in range(dim)]])
    for n in range(vf.n_steps + 1):
        for k in range(vf.basis.size):
            row = [n, k, repr(float(vf.alpha[n, k]))]
            row.append(repr(float(vf.ridge_used[n])))
            row.append(int(vf.rank_report[n]))
            row.extend(repr(float(v)) for v in vf.basis.centers[n, k])
            writer.writerow(row)
