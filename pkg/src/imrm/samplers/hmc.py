"""Hamiltonian Monte Carlo for the logit class-link parameters."""

from __future__ import annotations

import numpy as np

from ..latent import R_CLAMP, ChainState, Hyper, log1mexp, pair_forms, softplus


class RhoPosterior:
    """Negative log posterior of the free logit parameters for fixed ``Z``.

    Link pairs and the non-link count matrix are gathered once, so each
    evaluation costs ``O(|links| K^2)``.
    """

    def __init__(self, state: ChainState, hyper: Hyper | None = None):
        h = hyper if hyper is not None else state.hyper
        self.rho = state.rho.copy()
        links = state.graph.links
        self.zu = state.z[links[:, 0]]
        self.zv = state.z[links[:, 1]]
        self.nonlink = state.nonlink_counts().astype(np.float64)
        within = self.rho.within_role()
        self.a = np.where(within, h.a_within, h.a_between)
        self.b = np.where(within, h.b_within, h.b_between)

    def __call__(self, theta) -> tuple[float, np.ndarray]:
        """Energy ``U(theta)`` and its gradient."""
        rho = self.rho
        rho.set_free(theta)
        P = rho.logp
        if rho.k:
            w = pair_forms(self.zu, P, self.zv)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                loglik = log1mexp(w).sum() + 0.5 * np.sum(P * self.nonlink)
                # d log(1 - e^w) / dw = -1 / expm1(-w); very negative w overflows to a zero weight
                c = -1.0 / np.expm1(-w)
            if not np.isfinite(loglik):
                return np.inf, np.zeros_like(theta)
            cell = (self.zu * c[:, None]).T @ self.zv + 0.5 * self.nonlink
            dlik = -rho.aggregate(cell) * _expit(theta)
        else:
            loglik, dlik = 0.0, np.zeros_like(theta)
        logprior = np.sum(self.a * theta - (self.a + self.b) * softplus(theta))
        dprior = self.a - (self.a + self.b) * _expit(theta)
        return -(loglik + logprior), -(dlik + dprior)


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def leapfrog(theta, p, grad, energy, eps: float, n_steps: int):
    """Run ``n_steps`` leapfrog steps; returns ``None`` if the path leaves the clamp box."""
    theta = theta.copy()
    p = p - 0.5 * eps * grad
    for step in range(n_steps):
        theta = theta + eps * p
        if np.any(np.abs(theta) > R_CLAMP):
            return None
        u, grad = energy(theta)
        if not np.isfinite(u):
            return None
        if step < n_steps - 1:
            p = p - eps * grad
    p = p - 0.5 * eps * grad
    return theta, p, u, grad


def hmc_update_rho(state: ChainState, hyper: Hyper | None = None,
                   step_size: float | None = None, n_steps: int | None = None) -> bool:
    """One HMC transition for the free logit parameters; refreshes caches on accept."""
    h = hyper if hyper is not None else state.hyper
    eps = state.step_size if step_size is None else step_size
    n_steps = h.hmc.leapfrog_steps if n_steps is None else n_steps
    theta0 = state.rho.free()
    state.diagnostics["hmc_total"] += 1
    if theta0.size == 0:
        state.diagnostics["hmc_accept"] += 1
        return True
    energy = RhoPosterior(state, h)
    u0, g0 = energy(theta0)
    p0 = state.rng.standard_normal(theta0.size)
    u_rand = state.rng.random()
    if not np.isfinite(u0):
        return False
    end = leapfrog(theta0, p0, g0, energy, eps, n_steps)
    if end is None:
        return False
    theta1, p1, u1, _ = end
    log_accept = (u0 + 0.5 * p0 @ p0) - (u1 + 0.5 * p1 @ p1)
    if not np.isfinite(log_accept) or np.log(u_rand) >= log_accept:
        return False
    state.set_rho_free(theta1)
    state.diagnostics["hmc_accept"] += 1
    return True
