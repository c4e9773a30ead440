"""Stationary-distribution estimators and first-order theory predictors.

The empirical side runs the chain past burn-in and accumulates moments of
(theta - theta_star) and (xi_c - xi_star_c).  The theory side evaluates the
leading-order covariance and bias formulas, which hinge on the resolvent
A : M -> X solving  Hf X + X Hf = M  at the optimum's average Hessian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import objectives
from .algorithms import scaffold_round
from .core import ChainState, RunConfig
from .optimum import OptimumCertificate

__all__ = [
    "StationaryEstimate",
    "FirstOrderPrediction",
    "ComplexityRecipe",
    "default_burn_in",
    "estimate_stationary",
    "sylvester_solve",
    "predict_first_order",
    "complexity_recipe",
    "estimate_report",
]

N_SE_BATCHES = 20
MAX_XI_PAIRS = 64


def sylvester_solve(hessian_star, rhs):
    """Solve H X + X H = rhs for symmetric positive definite H.

    Computed in the eigenbasis of H: X_ij = R_ij / (l_i + l_j).  The
    residual is checked to 1e-10 relative in Frobenius norm.
    """
    hessian_star = np.asarray(hessian_star, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    eigvals, eigvecs = np.linalg.eigh(0.5 * (hessian_star + hessian_star.T))
    if eigvals[0] <= 0:
        raise ValueError(
            f"hessian_star must be positive definite (min eigenvalue {eigvals[0]:g})"
        )
    rhs_tilde = eigvecs.T @ rhs @ eigvecs
    x_tilde = rhs_tilde / (eigvals[:, None] + eigvals[None, :])
    x = eigvecs @ x_tilde @ eigvecs.T
    x = 0.5 * (x + x.T)
    residual = np.linalg.norm(hessian_star @ x + x @ hessian_star - rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0 and residual > 1e-10 * rhs_norm:
        raise ValueError(
            f"resolvent residual {residual:g} exceeds 1e-10 * ||rhs|| = {1e-10 * rhs_norm:g}"
        )
    return x


def default_burn_in(gamma, mu, local_steps):
    """Four 1/e-times of the geometric rate (1 - gamma*mu/4)^H, in rounds."""
    return math.ceil(16.0 / (gamma * mu * local_steps))


@dataclass
class StationaryEstimate:
    """Empirical stationary moments with batch-means standard errors.

    All second moments are taken about the optimum (theta_star, xi_star),
    matching the stationary covariance definitions, not about the sample
    mean.
    """

    burn_in_rounds: int
    n_samples: int
    thinning: int
    bias_theta: np.ndarray
    cov_theta: np.ndarray
    cov_theta_xi: np.ndarray  # (N, d, d)
    cov_xi: dict  # (c, c') -> (d, d)
    se_bias: np.ndarray

    def __post_init__(self):
        scale = np.linalg.norm(self.cov_theta)
        if scale > 0 and np.linalg.norm(self.cov_theta - self.cov_theta.T) > 1e-10 * scale:
            raise ValueError("cov_theta must be symmetric")
        if self.n_samples < 100:
            raise ValueError(f"need n_samples >= 100, got {self.n_samples}")


def _xi_pair_subset(n_clients, seed=0):
    """All diagonal pairs plus a seeded shuffle of off-diagonal pairs."""
    pairs = [(c, c) for c in range(n_clients)]
    off = [(c, cp) for c in range(n_clients) for cp in range(c + 1, n_clients)]
    rng = np.random.default_rng(seed)
    rng.shuffle(off)
    return pairs + off[:MAX_XI_PAIRS]


def estimate_stationary(problem, certificate: OptimumCertificate, config: RunConfig,
                        burn_in=None, n_samples=1000, thinning=1,
                        pair_seed=0) -> StationaryEstimate:
    """Time-average moments of the chain after burn-in.

    Collects `n_samples` states spaced by `thinning` rounds.  Standard
    errors of the bias come from batch means over 20 batches, which absorb
    the chain's autocorrelation.
    """
    if n_samples < 100:
        raise ValueError(f"need n_samples >= 100, got {n_samples}")
    if thinning < 1:
        raise ValueError(f"thinning must be >= 1, got {thinning}")
    if burn_in is None:
        burn_in = default_burn_in(config.gamma, certificate.mu, config.local_steps)
    config.stepsize_diagnostics(certificate.mu, certificate.big_l)

    d = problem.d
    n = problem.n_clients
    theta_star = certificate.theta_star
    xi_star = certificate.xi_star
    pairs = _xi_pair_subset(n, seed=pair_seed)

    state = ChainState.zeros(d, n)
    t = 0
    for _ in range(burn_in):
        state = scaffold_round(state, problem, config, t)
        t += 1

    sum_dtheta = np.zeros(d)
    sum_outer_theta = np.zeros((d, d))
    sum_theta_xi = np.zeros((n, d, d))
    sum_xi = {p: np.zeros((d, d)) for p in pairs}
    batch_size = n_samples // N_SE_BATCHES
    batch_means = np.zeros((N_SE_BATCHES, d))

    for k in range(n_samples):
        for _ in range(thinning):
            state = scaffold_round(state, problem, config, t)
            t += 1
        if not np.all(np.isfinite(state.theta)):
            from .algorithms import DivergenceError
            raise DivergenceError(t - 1)
        dtheta = state.theta - theta_star
        dxi = state.xis - xi_star
        sum_dtheta += dtheta
        sum_outer_theta += np.outer(dtheta, dtheta)
        sum_theta_xi += dtheta[None, :, None] * dxi[:, None, :]
        for c, cp in pairs:
            sum_xi[(c, cp)] += np.outer(dxi[c], dxi[cp])
        b = min(k // batch_size, N_SE_BATCHES - 1)
        batch_means[b] += dtheta

    # trailing samples beyond 20*batch_size fold into the last batch
    counts = np.full(N_SE_BATCHES, batch_size, dtype=float)
    counts[-1] += n_samples - N_SE_BATCHES * batch_size
    batch_means /= counts[:, None]
    se_bias = batch_means.std(axis=0, ddof=1) / np.sqrt(N_SE_BATCHES)

    cov_theta = sum_outer_theta / n_samples
    cov_theta = 0.5 * (cov_theta + cov_theta.T)
    return StationaryEstimate(
        burn_in_rounds=burn_in,
        n_samples=n_samples,
        thinning=thinning,
        bias_theta=sum_dtheta / n_samples,
        cov_theta=cov_theta,
        cov_theta_xi=sum_theta_xi / n_samples,
        cov_xi={p: m / n_samples for p, m in sum_xi.items()},
        se_bias=se_bias,
    )


@dataclass
class FirstOrderPrediction:
    """Leading-order stationary covariances and bias.

    `resolvent_noise` is A applied to the average noise covariance at the
    optimum; the parameter covariance prediction is (gamma/N) times it.
    """

    gamma: float
    local_steps: int
    n_clients: int
    resolvent_noise: np.ndarray
    cov_theta: np.ndarray
    cov_theta_xi: np.ndarray  # (N, d, d)
    bias_theta: np.ndarray
    _sigma_eps: np.ndarray = field(repr=False)
    _sigma_eps_avg: np.ndarray = field(repr=False)

    def cov_xi(self, c, cp):
        """Leading-order control-variate covariance for the pair (c, c')."""
        n, h = self.n_clients, self.local_steps
        if c == cp:
            return (1.0 - 2.0 / n) / h * self._sigma_eps[c] \
                + self._sigma_eps_avg / (n * h)
        return (self._sigma_eps_avg - self._sigma_eps[c] - self._sigma_eps[cp]) / (n * h)


def predict_first_order(problem, certificate: OptimumCertificate,
                        gamma, local_steps) -> FirstOrderPrediction:
    """Evaluate the first-order stationary covariance and bias formulas.

    All O(.) remainders are dropped; predictions are leading terms in the
    step size only.
    """
    n = certificate.n_clients
    hess_star = certificate.hessian_star
    sigma_eps = certificate.sigma_eps_per_client
    sigma_avg = certificate.sigma_eps_avg
    theta_star = certificate.theta_star

    a_sigma = sylvester_solve(hess_star, sigma_avg)
    cov_theta = gamma / n * a_sigma

    hessians = np.stack(
        [objectives.hessian(problem, c, theta_star) for c in range(n)]
    )
    cov_theta_xi = np.empty((n, hess_star.shape[0], hess_star.shape[0]))
    for c in range(n):
        cov_theta_xi[c] = gamma / n * (
            a_sigma @ (hessians[c] - hess_star) + (sigma_eps[c] - sigma_avg)
        )

    third = np.mean(
        [objectives.third_derivative_apply(problem, c, theta_star, a_sigma)
         for c in range(n)],
        axis=0,
    )
    bias = -gamma / (2.0 * n) * np.linalg.solve(hess_star, third)

    return FirstOrderPrediction(
        gamma=gamma,
        local_steps=local_steps,
        n_clients=n,
        resolvent_noise=a_sigma,
        cov_theta=cov_theta,
        cov_theta_xi=cov_theta_xi,
        bias_theta=bias,
        _sigma_eps=sigma_eps,
        _sigma_eps_avg=sigma_avg,
    )


@dataclass
class ComplexityRecipe:
    """Parameter recipe for a target accuracy, with unit constants."""

    epsilon: float
    gamma: float
    local_steps: float
    rounds: float
    grads_per_client: float
    n_max: float
    n_clients_ok: bool


def complexity_recipe(certificate: OptimumCertificate, epsilon, n_clients,
                      theta0=None) -> ComplexityRecipe:
    """Step size, horizon, and round count reaching mean squared error eps^2.

    Evaluates the speed-up recipe with unit proportionality constants:
    gamma ~ N mu eps^2 / sigma*^2, H ~ sigma*^2 min(1, mu/zeta2) /
    (N L mu eps^2) clamped to >= 1, T ~ (L/mu) max(1, zeta2/mu)
    log(psi0/eps^2), and the client-count ceiling from the third-derivative
    bound (infinite for quadratic problems).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    mu, big_l = certificate.mu, certificate.big_l
    zeta1, zeta2 = certificate.zeta1, certificate.zeta2
    sigma_sq = certificate.sigma_star_sq
    q = certificate.third_deriv_bound

    theta0 = np.zeros_like(certificate.theta_star) if theta0 is None else np.asarray(theta0)
    init_sq = float(np.sum((theta0 - certificate.theta_star) ** 2))
    psi0 = init_sq + zeta1 ** 2 / big_l ** 2 + sigma_sq / (big_l * mu)

    gamma = n_clients * mu * epsilon ** 2 / sigma_sq
    heter_clamp = 1.0 if zeta2 == 0 else min(1.0, mu / zeta2)
    local_steps = max(
        1.0, sigma_sq * heter_clamp / (n_clients * big_l * mu * epsilon ** 2)
    )
    rounds = big_l / mu * max(1.0, zeta2 / mu) * math.log(psi0 / epsilon ** 2)

    if q == 0:
        n_max = math.inf
    else:
        n_max = min(
            mu ** (2.0 / 3.0) / (q ** (2.0 / 3.0) * epsilon ** (2.0 / 3.0)),
            math.sqrt(big_l * mu) / (q * epsilon),
        )

    return ComplexityRecipe(
        epsilon=epsilon,
        gamma=gamma,
        local_steps=local_steps,
        rounds=rounds,
        grads_per_client=local_steps * rounds,
        n_max=n_max,
        n_clients_ok=n_clients <= n_max,
    )


def _write_matrix_block(lines, name, matrix):
    lines.append(f"# {name}")
    for row in np.atleast_2d(matrix):
        lines.append(",".join(f"{v:.17g}" for v in row))


def estimate_report(est: StationaryEstimate) -> str:
    """Report: key-value scalars, then matrices in row-major CSV blocks."""
    lines = [
        f"burn_in_rounds = {est.burn_in_rounds}",
        f"n_samples = {est.n_samples}",
        f"thinning = {est.thinning}",
        f"bias_norm = {float(np.linalg.norm(est.bias_theta)):.17g}",
        f"se_bias_norm = {float(np.linalg.norm(est.se_bias)):.17g}",
        f"trace_cov_theta = {float(np.trace(est.cov_theta)):.17g}",
    ]
    _write_matrix_block(lines, "bias_theta", est.bias_theta)
    _write_matrix_block(lines, "se_bias", est.se_bias)
    _write_matrix_block(lines, "cov_theta", est.cov_theta)
    for c in range(est.cov_theta_xi.shape[0]):
        _write_matrix_block(lines, f"cov_theta_xi_{c}", est.cov_theta_xi[c])
    for (c, cp), m in sorted(est.cov_xi.items()):
        _write_matrix_block(lines, f"cov_xi_{c}_{cp}", m)
    return "\n".join(lines) + "\n"
