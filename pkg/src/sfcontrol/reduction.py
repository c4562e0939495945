"""Homogenized (eps -> 0) reduction of the slow/fast control problem.

The fast subsystem relaxes to a Gaussian invariant law N(0, Sigma); the slow
forward dynamics gets Schur-complement coefficients; and the backward driver
is averaged over the invariant law.  The averaged driver coefficients are
derived in closed form from the defining integral and then verified against
the quadrature oracle, which remains authoritative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, model
from .errors import NotHurwitz, NotRepresentable, SingularA22


def invariant_covariance(sys):
    """Stationary covariance of the fast subsystem: A22 S + S A22' = -C2 C2'."""
    if sys.n_f and not linalg.is_hurwitz(sys.A22):
        raise NotHurwitz("fast drift block A22 must be Hurwitz")
    return linalg.solve_lyapunov(sys.A22, sys.C2 @ sys.C2.T, check_hurwitz=False)


def reduced_forward(sys):
    """Effective slow coefficients (Abar, Cbar) via the Schur complement."""
    if sys.n_f == 0:
        return sys.A11.copy(), sys.C1.copy()
    try:
        inv_a22_a21 = np.linalg.solve(sys.A22, sys.A21)
        inv_a22_c2 = np.linalg.solve(sys.A22, sys.C2)
    except np.linalg.LinAlgError as exc:
        raise SingularA22("fast drift block A22 is singular") from exc
    abar = sys.A11 - sys.A12 @ inv_a22_a21
    cbar = sys.C1 - sys.A12 @ inv_a22_c2
    return abar, cbar


@dataclass(frozen=True)
class AveragedDriverCoefficients:
    """Coefficients of the averaged driver q0bar-quadratic - control^2/2 + k0."""

    q0bar: np.ndarray
    nbar: np.ndarray  # (m, n_s)
    bbar: np.ndarray  # (m, k)
    k0: float


def averaged_driver(
    sys,
    cost,
    sigma,
    check=True,
    n_probes=20,
    rel_tol=1e-6,
    probe_seed=2024,
):
    """Average the driver over the fast invariant law N(0, sigma).

    For the bilinear class with the range condition, the average is again of
    quadratic-minus-control form with an additive constant; the closed-form
    coefficients are checked against the quadrature oracle at ``n_probes``
    random (x1, z1) points.  If the average picks up a term quadratic in z1
    (which happens exactly when the control channel couples to the fast
    state), no such representation exists and NotRepresentable is raised.
    """
    from . import oracles

    full = model.assemble(sys, 1.0)
    driver = model.make_driver(full, cost)

    pinv_ct = linalg.pseudoinverse(full.C.T)
    n_fast_cols = full.N[:, sys.n_s :]
    fast_gain = n_fast_cols.T @ pinv_ct  # c(z) = fast_gain' ... nonzero -> z-quadratic
    gain_scale = max(1.0, np.linalg.norm(n_fast_cols) * np.linalg.norm(pinv_ct))
    if np.linalg.norm(fast_gain) > 1e-10 * gain_scale:
        raise NotRepresentable(
            "averaged driver has a pure z-quadratic term because the control "
            "channel couples to the fast state (N12/N22 nonzero)"
        )

    nbar = pinv_ct.T @ full.N[:, : sys.n_s]
    bbar = pinv_ct.T @ full.B

    k0 = float(
        oracles.quadrature_average_driver(
            sys, cost, sigma, [(np.zeros(sys.n_s), np.zeros(full.m))]
        ).values[0]
    )
    coeffs = AveragedDriverCoefficients(q0bar=cost.Q0.copy(), nbar=nbar, bbar=bbar, k0=k0)

    if check:
        rng = np.random.default_rng(probe_seed)
        probes = [
            (rng.standard_normal(sys.n_s), rng.standard_normal(full.m))
            for _ in range(n_probes)
        ]
        reference = oracles.quadrature_average_driver(sys, cost, sigma, probes).values
        candidate = np.array(
            [_evaluate_averaged(coeffs, x1, z1) for x1, z1 in probes]
        )
        err = np.abs(candidate - reference) / np.maximum(1.0, np.abs(reference))
        if np.max(err) > rel_tol:
            raise NotRepresentable(
                f"closed-form averaged driver disagrees with quadrature oracle "
                f"(max relative error {np.max(err):.3e} > {rel_tol:.1e})"
            )
    return coeffs


def _evaluate_averaged(coeffs, x1, z1):
    run = 0.5 * float(x1 @ coeffs.q0bar @ x1)
    u = (coeffs.nbar @ x1) @ z1 + coeffs.bbar.T @ z1
    return run - 0.5 * float(np.sum(np.atleast_1d(u) ** 2)) + coeffs.k0


@dataclass(frozen=True)
class ReducedSystem:
    """Homogenized system: slow forward coefficients plus averaged driver."""

    abar: np.ndarray
    cbar: np.ndarray
    sigma: np.ndarray
    nbar: np.ndarray
    bbar: np.ndarray
    k0: float
    q0bar: np.ndarray
    q1bar: np.ndarray

    @property
    def n_s(self):
        return self.abar.shape[0]

    @property
    def m(self):
        return self.cbar.shape[1]

    @property
    def k(self):
        return self.bbar.shape[1]

    @property
    def mbar(self):
        """Reduced bilinear control channel Cbar Nbar."""
        return self.cbar @ self.nbar

    @property
    def dbar(self):
        """Reduced constant control channel Cbar Bbar."""
        return self.cbar @ self.bbar


def reduce_system(sys, cost, **avg_kwargs):
    """Full reduction pipeline: invariant law, slow coefficients, driver."""
    sigma = invariant_covariance(sys)
    if sys.n_f and np.linalg.eigvalsh(sigma).min() <= 0:
        raise NotHurwitz("invariant covariance is not positive definite")
    abar, cbar = reduced_forward(sys)
    coeffs = averaged_driver(sys, cost, sigma, **avg_kwargs)
    return ReducedSystem(
        abar=abar,
        cbar=cbar,
        sigma=sigma,
        nbar=coeffs.nbar,
        bbar=coeffs.bbar,
        k0=coeffs.k0,
        q0bar=coeffs.q0bar,
        q1bar=cost.Q1.copy(),
    )


def reduced_control_system(red):
    """Assembled eps-free system with channel Mbar x + Dbar and noise Cbar."""
    return model.AssembledSystem(
        A=red.abar.copy(),
        N=red.mbar,
        B=red.dbar,
        C=red.cbar.copy(),
        n_s=red.n_s,
        n_f=0,
        eps=None,
    )


def reduced_slowfast(red):
    """ReducedSystem as a fast-free SlowFastSystem (for configs and reuse)."""
    return model.SlowFastSystem(
        n_s=red.n_s,
        n_f=0,
        m=red.m,
        k=red.k,
        A11=red.abar,
        N11=red.mbar,
        B1=red.dbar,
        C1=red.cbar,
    )


def reduced_driver(red, cost):
    """Averaged driver as a QuadraticDriver over the slow state."""
    if cost.n_s != red.n_s:
        raise ValueError("cost dimension must match the reduced system")
    return model.QuadraticDriver(
        q0=red.q0bar,
        bilinear=red.nbar.T.copy(),
        affine=red.bbar.T.copy(),
        n_s=red.n_s,
        offset=red.k0,
    )
