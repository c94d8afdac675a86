"""Closed-form linearized leave-one-out solves around a trained base model.

Linearizing the network at theta0 turns each leave-one-out refit into a
ridge problem in the parameter correction Delta, whose minimizer has the
dual form

    Delta = J^T (J J^T + lambda I)^{-1} r,

with J the (n-1) x M per-example parameter Jacobian at theta0 and
r = Y - f(X; theta0) the base residuals on the retained rows. The
(n-1) x (n-1) Gram system is the cheap direction whenever M >> n, so one
Jacobian pass plus n small Cholesky solves replaces n network trainings.
The primal form (J^T J + lambda I)^{-1} J^T r is kept alongside as the
equivalence oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg as sla

from .nn import (
    MlpArchitecture,
    ParamVector,
    RegressionDataset,
    batch_forward,
    batch_forward_many,
    forward,
    param_jacobian,
)

TrainerFn = Callable[[RegressionDataset, int], ParamVector]


@dataclass(frozen=True)
class LazyConfig:
    """Ridge penalty lambda > 0 and whether per-j solves reuse one shared
    full-data Jacobian (drop row j per solve) or recompute it from scratch."""

    ridge_lambda: float
    jacobian_reuse: bool = True

    def __post_init__(self):
        if self.ridge_lambda <= 0.0:
            raise ValueError(f"ridge_lambda must be positive, got {self.ridge_lambda}")


@dataclass(frozen=True)
class GramSystem:
    """Symmetrized Jacobian Gram matrix with its ridge and residual right side."""

    gram: np.ndarray
    ridge: float
    residual_rhs: np.ndarray

    def solve(self):
        """Dual coefficients (gram + ridge I)^{-1} rhs via Cholesky."""
        A = self.gram.copy()
        A[np.diag_indices_from(A)] += self.ridge
        try:
            factor = sla.cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - depends on data
            raise np.linalg.LinAlgError(
                f"Gram Cholesky failed (lambda={self.ridge} too small for the "
                f"symmetrization error of this system)"
            ) from exc
        return sla.cho_solve(factor, self.residual_rhs)


@dataclass(frozen=True)
class LooFit:
    """Per-index lazy parameters, nonnegative residuals, and the base model."""

    loo_params: tuple
    loo_residuals: np.ndarray
    base_params: ParamVector

    def __post_init__(self):
        res = np.asarray(self.loo_residuals, dtype=np.float64)
        if len(self.loo_params) != res.size:
            raise ValueError("one residual per leave-one-out parameter vector required")
        if np.any(res < 0.0):
            raise ValueError("leave-one-out residuals must be nonnegative")
        object.__setattr__(self, "loo_params", tuple(self.loo_params))
        object.__setattr__(self, "loo_residuals", res)

    @property
    def n(self):
        return len(self.loo_params)


def build_gram_system(J, residuals, ridge_lambda) -> GramSystem:
    """Gram matrix J J^T symmetrized as (G + G^T)/2 against float drift."""
    G = J @ J.T
    G = 0.5 * (G + G.T)
    return GramSystem(G, ridge_lambda, np.asarray(residuals, dtype=np.float64))


def dual_ridge_correction(J, residuals, ridge_lambda) -> np.ndarray:
    """Delta = J^T (J J^T + lambda I)^{-1} r, the default solve path."""
    a = build_gram_system(J, residuals, ridge_lambda).solve()
    return J.T @ a


def primal_ridge_correction(J, residuals, ridge_lambda) -> np.ndarray:
    """Delta = (J^T J + lambda I)^{-1} J^T r; algebraically equal to the dual
    form, retained as the equivalence oracle (O(M^3), only for small M)."""
    M = J.shape[1]
    A = J.T @ J + ridge_lambda * np.eye(M)
    return np.linalg.solve(A, J.T @ residuals)


def lazy_solve(
    theta0: ParamVector, arch: MlpArchitecture, data_minus_j: RegressionDataset, cfg: LazyConfig
) -> ParamVector:
    """One linearized ridge refit: theta0 plus the dual correction computed
    from the Jacobian and base residuals on the given rows."""
    if data_minus_j.n < 1:
        raise ValueError("dataset must be nonempty")
    J = param_jacobian(theta0, arch, data_minus_j.features)
    r = data_minus_j.responses - batch_forward(theta0, arch, data_minus_j.features)
    delta = dual_ridge_correction(J, r, cfg.ridge_lambda)
    return ParamVector(theta0.values + delta, theta0.arch_fingerprint)


def fit_all_loo(
    theta0: ParamVector, arch: MlpArchitecture, data: RegressionDataset, cfg: LazyConfig
) -> LooFit:
    """Lazy refit for every leave-one-out subset, plus residuals
    R_j = |Y_j - f(X_j; theta_j)| evaluated with the full network.

    With jacobian_reuse the full n x M Jacobian and n x n Gram matrix are
    computed once and row/column j dropped per solve; the recompute path
    calls lazy_solve per j. Both agree to 1e-10. The n per-j solves touch
    only shared read-only inputs, so they are safe to run concurrently.
    """
    n = data.n
    if n < 2:
        raise ValueError(f"need at least 2 rows for leave-one-out fits, got {n}")

    loo_params = []
    if cfg.jacobian_reuse:
        J = param_jacobian(theta0, arch, data.features)
        base_preds = batch_forward(theta0, arch, data.features)
        r_full = data.responses - base_preds
        G_full = J @ J.T
        G_full = 0.5 * (G_full + G_full.T)
        indices = np.arange(n)
        coef = np.zeros(n)
        for j in range(n):
            keep = indices != j
            system = GramSystem(G_full[np.ix_(keep, keep)], cfg.ridge_lambda, r_full[keep])
            # Scatter the (n-1) dual coefficients into an n-vector with a
            # zero at j so the correction is one matvec against the shared
            # Jacobian instead of an (n-1) x M slice copy per solve.
            coef[keep] = system.solve()
            coef[j] = 0.0
            delta = J.T @ coef
            loo_params.append(ParamVector(theta0.values + delta, theta0.arch_fingerprint))
    else:
        for j in range(n):
            loo_params.append(lazy_solve(theta0, arch, data.drop_row(j), cfg))

    fitted = np.array(
        [forward(loo_params[j], arch, data.features[j]) for j in range(n)]
    )
    residuals = np.abs(data.responses - fitted)
    return LooFit(tuple(loo_params), residuals, theta0)


def loo_predictions(fit: LooFit, arch: MlpArchitecture, X) -> np.ndarray:
    """Predictions of every LOO model at every row of X, shape (n_rows, n)."""
    return batch_forward_many(fit.loo_params, arch, X).T


def lazy_solve_deleted_init(
    data: RegressionDataset,
    j: int,
    arch: MlpArchitecture,
    cfg: LazyConfig,
    trainer: TrainerFn,
    seed: int = 0,
) -> ParamVector:
    """Lazy refit on the deleted dataset around an initializer that was also
    trained without row j.

    This is the reference estimate for stability measurement only: it costs a
    fresh training per index and never sits on the prediction path.
    """
    data_minus_j = data.drop_row(j)
    theta_minus_j = trainer(data_minus_j, seed)
    return lazy_solve(theta_minus_j, arch, data_minus_j, cfg)


def estimate_stability(
    data: RegressionDataset,
    test_points,
    arch: MlpArchitecture,
    cfg: LazyConfig,
    trainer: TrainerFn,
    nu: float,
    trials: int,
    seed: int = 0,
) -> float:
    """Monte-Carlo estimate of the out-of-sample instability frequency.

    Samples (deleted index j, test point, trial) triples and returns the
    fraction where the full-data-initialized and deleted-data-initialized
    lazy refits disagree at the test point by more than nu/2. The trainer is
    called as trainer(dataset, seed) with fresh seeds per trial.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if nu < 0.0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    X_test = np.atleast_2d(np.asarray(test_points, dtype=np.float64))
    if X_test.shape[0] < 1:
        raise ValueError("need at least one test point")
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        j = int(rng.integers(data.n))
        i = int(rng.integers(X_test.shape[0]))
        seed_full, seed_deleted = (int(s) for s in rng.integers(2**63, size=2))
        theta_full = trainer(data, seed_full)
        theta_n_minus_j = lazy_solve(theta_full, arch, data.drop_row(j), cfg)
        theta_deleted = lazy_solve_deleted_init(data, j, arch, cfg, trainer, seed=seed_deleted)
        gap = abs(forward(theta_n_minus_j, arch, X_test[i]) - forward(theta_deleted, arch, X_test[i]))
        hits += gap > nu / 2.0
    return hits / trials
