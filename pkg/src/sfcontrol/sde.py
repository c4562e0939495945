"""Euler-Maruyama ensembles of the control-free forward process.

Paths are advanced on a fixed grid, tested against the stopping domain after
every step (slow components only) and frozen at the first state outside the
domain.  All noise comes from the counter-based generator in :mod:`rng`, so an
ensemble is a pure function of (system, x0, dt, horizon, n_paths, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadGrid, InitialStateOutsideDomain
from .rng import gaussian_block

#: Relative tolerance for the "horizon is a multiple of dt" check.
GRID_RTOL = 1e-9


def n_grid_steps(dt, horizon):
    """Number of Euler steps; raises BadGrid if horizon/dt is not integral."""
    if dt <= 0 or horizon <= 0:
        raise BadGrid("dt and horizon must be positive")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > GRID_RTOL * max(1.0, horizon):
        raise BadGrid(f"horizon {horizon} is not an integer multiple of dt {dt}")
    return n


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated trajectories with exit bookkeeping.

    ``states`` has shape (n_paths, n_steps + 1, n); ``increments`` the raw
    Brownian increments (n_paths, n_steps, m).  ``exit_index[i]`` is the first
    grid index at which path i sat outside the domain (states are frozen from
    there on) or n_steps if the path never left.
    """

    states: np.ndarray
    increments: np.ndarray
    exit_index: np.ndarray
    dt: float
    seed: int
    n_s: int

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def n_steps(self):
        return self.states.shape[1] - 1

    @property
    def dim(self):
        return self.states.shape[2]

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def stopped_before(self, n):
        """Boolean mask of paths whose exit index is <= n."""
        return self.exit_index <= n

    def exit_states(self):
        """State of each path at its own exit index (terminal if no exit)."""
        return self.states[np.arange(self.n_paths), self.exit_index]


def simulate(asys, x0, dt, horizon, n_paths, seed, domain=None):
    """Simulate the control-free forward SDE dX = A X dt + C dW.

    The exit test applies to the slow components against ``domain`` (no test
    when domain is None).  Identical arguments produce bit-identical output.
    """
    n_steps = n_grid_steps(dt, horizon)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != asys.n:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, system expects {asys.n}")
    if domain is not None and not bool(domain.contains(x0[: asys.n_s])):
        raise InitialStateOutsideDomain("x0's slow part must lie strictly inside the domain")

    m = asys.m
    a_t = np.ascontiguousarray(asys.A.T)
    c_t = np.ascontiguousarray(asys.C.T)
    sqrt_dt = np.sqrt(dt)
    paths = np.arange(n_paths, dtype=np.uint64)

    states = np.empty((n_paths, n_steps + 1, asys.n))
    increments = np.empty((n_paths, n_steps, m))
    exit_index = np.full(n_paths, n_steps, dtype=np.int64)
    states[:, 0] = x0
    frozen = np.zeros(n_paths, dtype=bool)

    x = np.broadcast_to(x0, (n_paths, asys.n)).copy()
    for step in range(n_steps):
        dw = sqrt_dt * gaussian_block(seed, paths, step, m)
        increments[:, step] = dw
        x_next = x + dt * (x @ a_t) + dw @ c_t
        if np.any(frozen):
            x_next[frozen] = x[frozen]
        if domain is not None:
            inside = domain.contains(x_next[:, : asys.n_s])
            newly_exited = ~frozen & ~inside
            if np.any(newly_exited):
                exit_index[newly_exited] = step + 1
                frozen |= newly_exited
        states[:, step + 1] = x_next
        x = x_next

    return PathEnsemble(
        states=states,
        increments=increments,
        exit_index=exit_index,
        dt=float(dt),
        seed=int(seed),
        n_s=asys.n_s,
    )


def ensemble_to_csv(ensemble, fileobj):
    """Write one row per (path, step): path, step, time, state..., exit_flag."""
    writer = csv.writer(fileobj)
    dim = ensemble.dim
    writer.writerow(["path", "step", "time", *[f"x{j}" for j in range(dim)], "exited"])
    times = ensemble.times
    for i in range(ensemble.n_paths):
        e = ensemble.exit_index[i]
        for s in range(ensemble.n_steps + 1):
            row = [i, s, repr(float(times[s]))]
            row.extend(repr(float(v)) for v in ensemble.states[i, s])
            row.append(int(s >= e))
            writer.writerow(row)
