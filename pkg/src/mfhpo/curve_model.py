"""mmf4 learning-curve model, least-squares fitting and posterior sampling.

    f(z; Θ) = (Θ0·Θ1 + Θ2·z^Θ3) / (Θ1 + z^Θ3)

Θ0 is the value extrapolated back to z = 0, Θ2 the asymptote, Θ1 and Θ3
control where and how sharply the curve moves between the two.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Mmf4Params",
    "PartialCurve",
    "FitError",
    "FitResult",
    "PosteriorSamples",
    "mmf4_eval",
    "residuals",
    "model_jacobian",
    "jacobian",
    "fit_least_squares",
    "levenberg_marquardt",
    "log_posterior",
    "posterior_sample",
    "prob_worse",
]

N_PARAMS = 4


class FitError(RuntimeError):
    """No start point produced a finite least-squares loss."""


@dataclass(frozen=True)
class Mmf4Params:
    theta: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(N_PARAMS))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class PartialCurve:
    """Observed prefix of a learning curve plus what RoBER compares it to."""

    z: np.ndarray
    y: np.ndarray
    z_max: int
    y_star: float = -np.inf

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if z.shape != y.shape or z.ndim != 1:
            raise ValueError("z and y must be 1-d of equal length")
        if np.any(np.diff(z) <= 0):
            raise ValueError("z must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_scores(cls, scores: Sequence[float], z_max: int, y_star: float = -np.inf):
        """Curve observed at epochs 1..len(scores)."""
        return cls(np.arange(1, len(scores) + 1), scores, z_max, y_star)

    def __len__(self) -> int:
        return len(self.z)


def mmf4_eval(theta, z, check: bool = False):
    """Evaluate mmf4 at epoch(s) ``z``.

    With ``check=True`` a non-finite result raises ``FloatingPointError``.
    """
    t0, t1, t2, t3 = theta
    with np.errstate(all="ignore"):
        zp = np.power(z, t3)
        out = (t0 * t1 + t2 * zp) / (t1 + zp)
    if check and not np.all(np.isfinite(out)):
        raise FloatingPointError(f"mmf4 not finite for theta={list(theta)}")
    return out


def residuals(theta, curve: PartialCurve) -> np.ndarray:
    """``y - f(z; theta)`` for every observation."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    return curve.y - mmf4_eval(theta, curve.z)


def model_jacobian(theta, zs) -> np.ndarray:
    """Closed-form ∂f/∂Θ, shape ``(len(zs), 4)``."""
    t0, t1, t2, t3 = (float(t) for t in theta)
    z = np.asarray(zs, dtype=float)
    if np.any(z < 0) or (t3 < 0 and np.any(z == 0)):
        raise ValueError("z must be >= 0, and > 0 when theta3 < 0")
    with np.errstate(all="ignore"):
        zp = np.power(z, t3)
        d = t1 + zp
        n = t0 * t1 + t2 * zp
        logz = np.where(z > 0, np.log(np.where(z > 0, z, 1.0)), 0.0)
        jac = np.empty((z.size, N_PARAMS))
        jac[:, 0] = t1 / d
        jac[:, 1] = (t0 * d - n) / d**2
        jac[:, 2] = zp / d
        jac[:, 3] = zp * logz * (t2 * d - n) / d**2
    return jac


def jacobian(theta, zs) -> np.ndarray:
    """Jacobian of the residual vector, i.e. ``-model_jacobian``."""
    return -model_jacobian(theta, zs)


def _loss(theta, z, y) -> float:
    r = y - mmf4_eval(theta, z)
    val = float(r @ r)
    return val if np.isfinite(val) else np.inf


def _batch_model(theta: np.ndarray, z: np.ndarray):
    """f and ∂f/∂Θ for a stack of parameter vectors ``(S, 4)``."""
    t0, t1, t2, t3 = (theta[:, k : k + 1] for k in range(N_PARAMS))
    with np.errstate(all="ignore"):
        zp = np.power(z, t3)
        d = t1 + zp
        n = t0 * t1 + t2 * zp
        logz = np.log(np.where(z > 0, z, 1.0))
        jac = np.stack(
            [t1 / d, (t0 * d - n) / d**2, zp / d, zp * logz * (t2 * d - n) / d**2],
            axis=-1,
        )
        return n / d, jac


def _batch_loss(theta: np.ndarray, z, y) -> np.ndarray:
    f, _ = _batch_model(theta, z)
    with np.errstate(all="ignore"):
        loss = np.sum((y - f) ** 2, axis=1)
    return np.where(np.isfinite(loss), loss, np.inf)


def _solve_rows(m: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.solve(m, g[..., None])[..., 0], np.ones(len(g), dtype=bool)
    except np.linalg.LinAlgError:
        out = np.zeros_like(g)
        ok = np.ones(len(g), dtype=bool)
        for i in range(len(g)):
            try:
                out[i] = np.linalg.solve(m[i], g[i])
            except np.linalg.LinAlgError:
                ok[i] = False
        return out, ok


def levenberg_marquardt(
    theta0,
    z,
    y,
    max_iter: int = 200,
    damping: float = 1e-3,
    up: float = 2.0,
    down: float = 3.0,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray | float]:
    """Minimise ``||y - f(z; Θ)||²`` from ``theta0``.

    Marquardt-scaled damping (``JᵀJ + λ·diag(JᵀJ)``), λ divided by ``down``
    after an accepted step and multiplied by ``up`` after a rejected one. A
    step is accepted only if it lowers the loss, so the result is never
    worse than the start. ``theta0`` may be a stack ``(S, 4)`` of start
    points; each is iterated independently. Returns ``(theta, loss)``.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.array(theta0, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    loss = _batch_loss(theta, z, y)
    lam = np.full(len(theta), float(damping))
    active = np.isfinite(loss)
    eye = np.eye(N_PARAMS)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        th = theta[idx]
        f, jm = _batch_model(th, z)
        r = y - f
        g = np.einsum("snk,sn->sk", jm, r)  # J_r = -jm, so -g is the gradient of loss/2
        finite = np.all(np.isfinite(jm), axis=(1, 2)) & np.all(np.isfinite(g), axis=1)
        conv = finite & (np.max(np.abs(np.where(finite[:, None], g, 0.0)), axis=1) < gtol)
        go = finite & ~conv
        active[idx[~go]] = False
        idx, th, jm, g = idx[go], th[go], jm[go], g[go]
        if idx.size == 0:
            break
        a = np.einsum("snk,snj->skj", jm, jm)
        scale = np.maximum(np.diagonal(a, axis1=1, axis2=2), 1e-12)
        m = a + lam[idx, None, None] * scale[:, None, :] * eye
        step, solved = _solve_rows(m, g)
        cand_loss = np.where(solved, _batch_loss(th + step, z, y), np.inf)
        better = cand_loss < loss[idx]
        acc, rej = idx[better], idx[~better]
        if acc.size:
            old = loss[acc]
            new = cand_loss[better]
            rel = (old - new) / np.maximum(old, 1e-300)
            theta[acc] = th[better] + step[better]
            loss[acc] = new
            lam[acc] /= down
            active[acc[(rel < ftol) | (new == 0.0)]] = False
        if rej.size:
            lam[rej] *= up
            active[rej[lam[rej] > 1e16]] = False
    if single:
        return theta[0], float(loss[0])
    return theta, loss


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    loss: float
    start_losses: tuple[float, ...] = ()


def _start_points(y: np.ndarray) -> list[np.ndarray]:
    y_first, y_last = float(y[0]), float(y[-1])
    starts = []
    for t1 in (1.0, 10.0):
        for t2 in (y_last, y_last + 0.2 * abs(y_last)):
            for t3 in (0.5, 2.0):
                starts.append(np.array([y_first, t1, t2, t3]))
    return starts


def fit_least_squares(curve: PartialCurve, init=None, **lm_kwargs) -> FitResult:
    """Multi-start Levenberg-Marquardt fit of mmf4 to ``curve``.

    Needs at least four observations. ``init`` is tried in addition to the
    eight default starts; the lowest-loss result wins.
    """
    if len(curve) < N_PARAMS:
        raise ValueError(f"need >= {N_PARAMS} observations, got {len(curve)}")
    starts = _start_points(curve.y)
    if init is not None:
        starts.insert(0, np.asarray(init, dtype=float))
    starts = np.array(starts)
    start_losses = _batch_loss(starts, curve.z, curve.y)
    thetas, losses = levenberg_marquardt(starts, curve.z, curve.y, **lm_kwargs)
    best = int(np.argmin(losses))
    best_theta, best_loss = thetas[best], float(losses[best])
    if not np.isfinite(best_loss):
        raise FitError("all start points gave a non-finite loss")
    return FitResult(best_theta, best_loss, tuple(float(v) for v in start_losses))


def log_posterior(theta, log_sigma2: float, z, y, theta_hat) -> float:
    """Unnormalised log P(Θ, log σ² | C).

    Gaussian likelihood with variance σ², prior N(Θ̂, I) on Θ and Exp(1) on
    σ²; the ``+ log σ²`` term is the change of variables to log σ².
    """
    sigma2 = np.exp(log_sigma2)
    pred = mmf4_eval(theta, z)
    r = y - pred
    ll = -0.5 * (r @ r) / sigma2 - 0.5 * len(y) * (np.log(2 * np.pi) + log_sigma2)
    d = np.asarray(theta) - theta_hat
    lp = -0.5 * (d @ d) - sigma2 + log_sigma2
    out = ll + lp
    return float(out) if np.isfinite(out) else -np.inf


@dataclass(frozen=True)
class PosteriorSamples:
    theta: np.ndarray  # (n, 4)
    sigma2: np.ndarray  # (n,)
    acceptance_rate: float
    warning: bool = False
    proposal_std: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.sigma2)

    def params(self) -> list[Mmf4Params]:
        return [Mmf4Params(t, s) for t, s in zip(self.theta, self.sigma2)]


def _proposal_shape(draws: np.ndarray):
    """Cholesky factor of the sample covariance of ``draws``, or None if degenerate."""
    cov = np.cov(draws, rowvar=False)
    if not np.all(np.isfinite(cov)):
        return None
    cov = cov + 1e-12 * np.eye(cov.shape[0]) * max(1.0, float(np.trace(cov)))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return None


def posterior_sample(
    curve: PartialCurve,
    theta_hat,
    n_samples: int = 2000,
    rng: np.random.Generator | int | None = None,
    burn_in: int = 1000,
    proposal_std: float = 0.05,
    target_accept: float = 0.3,
    adapt_every: int = 50,
    n_chains: int = 64,
) -> PosteriorSamples:
    """Random-walk Metropolis over ``(Θ, log σ²)``.

    ``n_chains`` independent chains run side by side (vectorized) and their
    retained draws are pooled, ``ceil(n_samples / n_chains)`` per chain,
    truncated to ``n_samples``. Each chain runs ``burn_in`` steps first.

    Each step makes three Metropolis-Hastings moves, each accepted on its
    own with its own proposal scale: a random-walk move of Θ, a random-walk
    move of log σ², and a joint move that shifts log σ² by Δ while scaling
    Θ - Θ̂ by exp(Δ/2). With few observations the posterior is a funnel
    (small σ² pins Θ to the fit); the joint move follows the funnel so a
    chain does not get stuck in its neck. Its proposal is symmetric in Δ and
    the acceptance ratio carries the Jacobian exp(2Δ). A fourth move is a
    differential-evolution jump: the chains are split in two halves and each
    chain proposes ``x + γ (x_a - x_b)`` with ``a``, ``b`` drawn from the
    other half, so the proposal is symmetric given that half. γ is 1 on
    every tenth step, letting a chain hop between separated modes, and
    ``2.38 / sqrt(10)`` otherwise.

    Chains start at ``(Θ̂, log σ² = 0)``. During burn-in the scales, shared
    by all chains, are adjusted every ``adapt_every`` steps towards
    ``target_accept``. From ``4 * adapt_every`` steps on, the Θ proposal
    takes the shape of the covariance of the pooled second half of the
    burn-in so far, since a partial curve leaves Θ poorly identified along
    a narrow ridge. Everything is frozen for the retained draws.
    """
    if len(curve) == 0:
        raise ValueError("posterior needs at least one observation")
    if n_chains < 4 or n_chains % 2:
        raise ValueError("n_chains must be even and >= 4")
    rng = np.random.default_rng(rng)
    z, y = curve.z, curve.y
    theta_hat = np.asarray(theta_hat, dtype=float)
    n_obs = len(y)
    const = -0.5 * n_obs * np.log(2 * np.pi)
    k = n_chains
    per_chain = -(-n_samples // k)

    def sq_resid(x):
        zp = z[None, :] ** x[:, 3:4]
        r = y[None, :] - (x[:, 0:1] * x[:, 1:2] + x[:, 2:3] * zp) / (x[:, 1:2] + zp)
        return np.einsum("ij,ij->i", r, r)

    def logp(ss, x):
        # inlined log_posterior, one value per row of x = (Θ, log σ²)
        ls = x[:, N_PARAMS]
        s2 = np.exp(np.minimum(ls, 700.0))
        d = x[:, :N_PARAMS] - theta_hat
        val = -0.5 * ss / s2 + const - 0.5 * n_obs * ls - 0.5 * np.einsum("ij,ij->i", d, d) - s2 + ls
        return np.where(np.isfinite(val) & (ls <= 700.0), val, -np.inf)

    dim = N_PARAMS + 1
    half = k // 2
    total = burn_in + per_chain
    x = np.tile(np.append(theta_hat, 0.0), (k, 1))
    scale_t = scale_s = scale_f = float(proposal_std)
    chol = np.eye(N_PARAMS)
    gamma_small = 2.38 / math.sqrt(2 * dim)
    noise = rng.standard_normal((total, k, N_PARAMS + 2))
    log_u = np.log(rng.random((total, 4, k)))
    pick_a = rng.integers(half, size=(total, k))
    pick_b = (pick_a + rng.integers(1, half, size=(total, k))) % half
    jitter = 1e-6 * rng.standard_normal((total, k, dim))
    out = np.empty((per_chain, k, dim))
    trace = np.empty((burn_in, k, N_PARAMS))
    acc = np.zeros(3)
    accepted_kept = 0
    shaped = False
    with np.errstate(all="ignore"):
        ss = sq_resid(x)
        lp = logp(ss, x)
        if not np.all(np.isfinite(lp)):
            raise FloatingPointError("posterior not finite at theta_hat")
        for i in range(total):
            e, u = noise[i], log_u[i]

            prop = x.copy()
            prop[:, :N_PARAMS] += scale_t * (e[:, :N_PARAMS] @ chol.T)
            ss_p = sq_resid(prop)
            lp_p = logp(ss_p, prop)
            ok_t = u[0] < lp_p - lp
            x[ok_t], ss[ok_t], lp[ok_t] = prop[ok_t], ss_p[ok_t], lp_p[ok_t]

            prop = x.copy()
            prop[:, N_PARAMS] += scale_s * e[:, N_PARAMS]
            lp_p = logp(ss, prop)
            ok_s = u[1] < lp_p - lp
            x[ok_s], lp[ok_s] = prop[ok_s], lp_p[ok_s]

            delta = scale_f * e[:, N_PARAMS + 1]
            prop = x.copy()
            prop[:, :N_PARAMS] = theta_hat + (x[:, :N_PARAMS] - theta_hat) * np.exp(0.5 * delta)[:, None]
            prop[:, N_PARAMS] += delta
            ss_p = sq_resid(prop)
            lp_p = logp(ss_p, prop)
            ok_f = u[2] < lp_p - lp + 0.5 * N_PARAMS * delta
            x[ok_f], ss[ok_f], lp[ok_f] = prop[ok_f], ss_p[ok_f], lp_p[ok_f]

            gamma = 1.0 if i % 10 == 9 else gamma_small
            for mine, other in ((slice(0, half), half), (slice(half, k), 0)):
                pool = x[other : other + half]
                prop = x[mine] + gamma * (pool[pick_a[i, mine]] - pool[pick_b[i, mine]]) + jitter[i, mine]
                ss_p = sq_resid(prop)
                lp_p = logp(ss_p, prop)
                ok = u[3, mine] < lp_p - lp[mine]
                x[mine][ok], ss[mine][ok], lp[mine][ok] = prop[ok], ss_p[ok], lp_p[ok]

            if i < burn_in:
                trace[i] = x[:, :N_PARAMS]
                acc += (ok_t.sum(), ok_s.sum(), ok_f.sum())
                if (i + 1) % adapt_every == 0:
                    rate_t, rate_s, rate_f = acc / (adapt_every * k)
                    scale_t *= math.exp(rate_t - target_accept)
                    scale_s *= math.exp(rate_s - target_accept)
                    scale_f *= math.exp(rate_f - target_accept)
                    acc[:] = 0
                    if i + 1 >= 4 * adapt_every:
                        new_chol = _proposal_shape(trace[(i + 1) // 2 : i + 1].reshape(-1, N_PARAMS))
                        if new_chol is not None:
                            chol = new_chol
                            if not shaped:
                                scale_t = 2.38 / math.sqrt(N_PARAMS)
                                shaped = True
            else:
                accepted_kept += int(ok_t.sum() + ok_s.sum() + ok_f.sum())
                out[i - burn_in] = x
    out = out.reshape(-1, N_PARAMS + 1)[:n_samples]
    rate = accepted_kept / (3 * per_chain * k) if n_samples else 0.0
    warn = not 0.05 <= rate <= 0.95
    if warn:
        logger.debug("MCMC acceptance rate %.3f outside [0.05, 0.95]", rate)
    scales = np.array([scale_t] * N_PARAMS + [scale_s, scale_f])
    return PosteriorSamples(out[:, :4], np.exp(out[:, 4]), rate, warn, scales)


def prob_worse(
    samples: PosteriorSamples,
    z_max: float,
    y_star: float,
    rng: np.random.Generator | int | None = None,
    predictive_noise: bool = True,
) -> float:
    """Fraction of posterior draws whose final score falls below ``y_star``.

    With ``predictive_noise`` each draw adds one N(0, σ²_s) observation
    noise term to f(z_max; Θ_s).
    """
    if len(samples) == 0:
        raise ValueError("no posterior samples")
    th = samples.theta
    with np.errstate(all="ignore"):
        zp = np.power(float(z_max), th[:, 3])
        pred = (th[:, 0] * th[:, 1] + th[:, 2] * zp) / (th[:, 1] + zp)
    if predictive_noise:
        rng = np.random.default_rng(rng)
        pred = pred + np.sqrt(samples.sigma2) * rng.standard_normal(len(pred))
    # non-finite predictions count as "not worse"
    worse = np.isfinite(pred) & (pred < y_star)
    return float(np.mean(worse))

