"""Sparse Bayesian learning solvers (spatial and wavelet-domain).

Type-II objective tr(C_Z Σ_Z⁻¹) + ln det Σ_Z with Σ_Z = I + AΓAᵀ,
minimized over per-coefficient prior variances γ ≥ 0 by majorize-minimize
updates (EM or convex-bounding), so the objective never increases.  Zero
γ entries are exact fixed points of both rules; pruning exploits that by
freezing negligible entries at 0, and is only accepted when it does not
push the objective up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericsError
from .forward import WhitenedProblem
from .mesh import _freeze
from .solvers import SolverConfig, SourceEstimate, _mne_coefficients, resolve_lambda


@dataclass(frozen=True)
class SBLState:
    """Hyper-parameters γ with the induced posterior data covariance.

    objective_trace[k] is the type-II objective after k accepted updates.
    """

    gamma: np.ndarray
    Sigma_Z: np.ndarray
    C_Z: np.ndarray
    objective_trace: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, float)
        if g.ndim != 1 or np.any(g < 0) or not np.all(np.isfinite(g)):
            raise NumericsError("gamma must be a finite nonnegative vector")
        s = np.asarray(self.Sigma_Z, float)
        if np.max(np.abs(s - s.T)) > 1e-10 * max(np.max(np.abs(s)), 1.0):
            raise NumericsError("Sigma_Z lost symmetry")
        object.__setattr__(self, "gamma", _freeze(g))
        object.__setattr__(self, "Sigma_Z", _freeze(s))
        object.__setattr__(self, "C_Z", _freeze(np.asarray(self.C_Z, float)))
        object.__setattr__(
            self, "objective_trace", _freeze(np.asarray(self.objective_trace, float))
        )

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.gamma))


def _sigma_z(gamma: np.ndarray, A: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(gamma)
    j = A.shape[0]
    if idx.size == 0:
        return np.eye(j)
    a = A[:, idx]
    s = np.eye(j) + (a * gamma[idx]) @ a.T
    return 0.5 * (s + s.T)  # resymmetrize rounding noise


def _objective(Sigma_Z: np.ndarray, C_Z: np.ndarray) -> float:
    cho = scipy.linalg.cho_factor(Sigma_Z, lower=True)
    trace_term = float(np.trace(scipy.linalg.cho_solve(cho, C_Z)))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return trace_term + logdet


def sbl_objective(state: SBLState) -> float:
    """tr(C_Z Σ_Z⁻¹) + ln det Σ_Z via a Cholesky factorization."""
    return _objective(state.Sigma_Z, state.C_Z)


def sbl_init(A: np.ndarray, Z: np.ndarray, gamma0) -> SBLState:
    """State from an initial γ (typically per-coefficient ridge variances)."""
    z = np.atleast_2d(Z)
    gamma0 = np.asarray(gamma0, float)
    if gamma0.shape != (A.shape[1],):
        raise ConfigError(
            f"gamma0 has shape {gamma0.shape}, expected ({A.shape[1]},)"
        )
    c_z = z @ z.T / z.shape[1]
    sigma = _sigma_z(gamma0, A)
    return SBLState(gamma0, sigma, c_z, [_objective(sigma, c_z)])


def _posterior_stats(state: SBLState, A: np.ndarray, Z: np.ndarray):
    """Active-set posterior mean rows and sensitivities z_n = a_nᵀΣ⁻¹a_n."""
    idx = np.flatnonzero(state.gamma)
    cho = scipy.linalg.cho_factor(state.Sigma_Z, lower=True)
    a = A[:, idx]
    xbar_active = state.gamma[idx, None] * (a.T @ scipy.linalg.cho_solve(cho, Z))
    z_active = np.einsum("jm,jm->m", a, scipy.linalg.cho_solve(cho, a))
    return idx, xbar_active, z_active


def _advance(state: SBLState, A: np.ndarray, gamma_new: np.ndarray) -> SBLState:
    sigma = _sigma_z(gamma_new, A)
    obj = _objective(sigma, state.C_Z)
    trace = np.append(state.objective_trace, obj)
    return SBLState(gamma_new, sigma, state.C_Z, trace)


def sbl_update_em(state: SBLState, A: np.ndarray, Z: np.ndarray) -> SBLState:
    """EM rule γ_n ← (1/L)‖X̄_n‖² + γ_n − γ_n²·z_n (zero entries stay zero)."""
    Z = np.atleast_2d(Z)
    idx, xbar, z = _posterior_stats(state, A, Z)
    g = state.gamma[idx]
    g_new = np.maximum(np.mean(xbar**2, axis=1) + g - g**2 * z, 0.0)
    gamma = np.zeros_like(state.gamma)
    gamma[idx] = g_new
    return _advance(state, A, gamma)


def sbl_update_champagne(state: SBLState, A: np.ndarray, Z: np.ndarray) -> SBLState:
    """Convex-bounding rule γ_n ← sqrt((1/L)‖X̄_n‖² / z_n)."""
    Z = np.atleast_2d(Z)
    idx, xbar, z = _posterior_stats(state, A, Z)
    msq = np.mean(xbar**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g_new = np.where(z > 0, np.sqrt(msq / z), 0.0)
    gamma = np.zeros_like(state.gamma)
    gamma[idx] = g_new
    return _advance(state, A, gamma)


def sbl_posterior_mean(state: SBLState, A: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """X̄ = Γ AᵀΣ_Z(γ)⁻¹Z, zero off the γ support."""
    Z = np.atleast_2d(Z)
    idx, xbar, _ = _posterior_stats(state, A, Z)
    x = np.zeros((state.gamma.size, Z.shape[1]))
    x[idx] = xbar
    return x


_UPDATES = {"em": sbl_update_em, "champagne": sbl_update_champagne}


def _try_prune(state: SBLState, A: np.ndarray, prune_eps: float) -> SBLState:
    """Freeze negligible γ at 0 when doing so does not raise the objective."""
    g = state.gamma
    gmax = g.max(initial=0.0)
    small = (g > 0) & (g < prune_eps * gmax)
    if not small.any():
        return state
    candidate = np.where(small, 0.0, g)
    sigma = _sigma_z(candidate, A)
    obj = _objective(sigma, state.C_Z)
    prev = float(state.objective_trace[-1])
    if obj > prev:
        return state  # deferred; entries shrink further under the MM updates
    trace = state.objective_trace.copy()
    trace[-1] = obj
    return SBLState(candidate, sigma, state.C_Z, trace)


def sbl_fit(A, Z, config: SolverConfig, algorithm: str = "champagne", gamma0=None):
    """Run the MM iteration on an explicit operator; returns (state, iters, converged).

    gamma0 defaults to the per-coefficient variances of a ridge solve
    with λ resolved from config.
    """
    if algorithm not in _UPDATES:
        raise ConfigError(f"unknown update rule {algorithm!r}; use em or champagne")
    update = _UPDATES[algorithm]
    Z = np.atleast_2d(Z)
    if gamma0 is None:
        lam = resolve_lambda(A, Z, config)
        x0 = _mne_coefficients(A, Z, lam)
        gamma0 = np.mean(x0**2, axis=1)
    state = sbl_init(A, Z, gamma0)
    converged = False
    iterations = 0
    for it in range(1, config.max_iters + 1):
        iterations = it
        prev = state.gamma
        state = update(state, A, Z)
        state = _try_prune(state, A, config.prune_eps)
        delta = np.max(np.abs(state.gamma - prev), initial=0.0)
        if delta <= config.tol_rel * max(float(np.max(prev, initial=0.0)), 1e-300):
            converged = True
            break
    return state, iterations, converged


def solve_sbl(
    problem: WhitenedProblem,
    config: SolverConfig,
    algorithm: str = "champagne",
    gamma0=None,
) -> SourceEstimate:
    """Spatial-domain SBL: γ per vertex, S = posterior mean."""
    state, iters, conv = sbl_fit(problem.G, problem.Z, config, algorithm, gamma0)
    s = sbl_posterior_mean(state, problem.G, problem.Z)
    return SourceEstimate(
        s, None, f"sbl-{algorithm}", iters, float(state.objective_trace[-1]),
        conv, state.objective_trace,
    )


def solve_sgw_sbl(
    problem: WhitenedProblem,
    config: SolverConfig,
    algorithm: str = "champagne",
    gamma0=None,
) -> SourceEstimate:
    """Wavelet-domain SBL: γ per frame coefficient, S = WᵀX̄.

    Initialized from the coefficient variances of a ridge solve against
    G_W, then iterated with the chosen MM rule and pruning.
    """
    state, iters, conv = sbl_fit(problem.G_W, problem.Z, config, algorithm, gamma0)
    x = sbl_posterior_mean(state, problem.G_W, problem.Z)
    s = problem.frame.W.T @ x
    return SourceEstimate(
        s, x, f"sgw-sbl-{algorithm}", iters, float(state.objective_trace[-1]),
        conv, state.objective_trace,
    )
