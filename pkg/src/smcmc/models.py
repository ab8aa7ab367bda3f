"""State-space models used by the filters.

Two concrete models are provided, both living on a square sensor grid:

* :class:`LinearGaussianModel` -- AR(1) dynamics with spatially correlated
  Gaussian noise and direct Gaussian observations of every sensor.
* :class:`GHSkewedTPoissonModel` -- AR(1) dynamics with generalized
  hyperbolic skewed-t noise and independent Poisson counts with a
  log-linear rate.

Every density is returned up to an additive constant that does not depend
on the current state. All density and gradient methods broadcast over
leading axes, so ``x`` may be a single state of shape ``(d,)`` or a batch of
shape ``(n, d)``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import linalg
from scipy.special import kve

from .errors import DomainError, InvalidGeometryError, ModelError

# Argument at which exp() is clamped in the Poisson rate.
EXP_CLAMP = 700.0


@dataclass(frozen=True)
class GridGeometry:
    """Sensors on the integer lattice ``{1..s} x {1..s}`` with ``d = s**2``."""

    d: int
    coords: np.ndarray

    @classmethod
    def square(cls, d: int) -> "GridGeometry":
        side = math.isqrt(d) if d > 0 else 0
        if d <= 0 or side * side != d:
            raise InvalidGeometryError(f"state dimension {d} is not a positive perfect square")
        ii, jj = np.meshgrid(np.arange(1, side + 1), np.arange(1, side + 1), indexing="ij")
        coords = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
        return cls(d=d, coords=coords)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (self.d, 2):
            raise InvalidGeometryError(f"expected {self.d} planar coordinates, got shape {coords.shape}")
        side = math.isqrt(self.d)
        if side * side != self.d:
            raise InvalidGeometryError(f"state dimension {self.d} is not a perfect square")
        if len(np.unique(coords, axis=0)) != self.d:
            raise InvalidGeometryError("sensor coordinates must be pairwise distinct")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class DispersionParams:
    alpha0: float = 3.0
    alpha1: float = 0.01
    beta: float = 20.0

    def __post_init__(self):
        if self.alpha0 < 0 or self.alpha1 < 0 or self.beta <= 0:
            raise ModelError("dispersion parameters need alpha0 >= 0, alpha1 >= 0, beta > 0")


def build_spatial_covariance(geom: GridGeometry, params: DispersionParams) -> np.ndarray:
    """Squared-exponential sensor covariance with a nugget on the diagonal.

    ``[S]_ij = alpha0 * exp(-|s_i - s_j|^2 / beta) + alpha1 * [i == j]``.
    """
    diff = geom.coords[:, None, :] - geom.coords[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    cov = params.alpha0 * np.exp(-sq / params.beta)
    cov[np.diag_indices_from(cov)] += params.alpha1
    # exact symmetry: sq is symmetric bitwise already, but keep it explicit
    return np.triu(cov) + np.triu(cov, 1).T


# ----------------------------------------------------------------------------
# Modified Bessel function of the second kind, in log scale
# ----------------------------------------------------------------------------

# AMOS returns NaN for subnormal orders; K is even in its order, so such
# orders are indistinguishable from zero in double precision.
_TINY_ORDER = 1e-300


def _norm_order(order) -> float:
    order = abs(float(order))
    return 0.0 if order < _TINY_ORDER else order


def _log_k_recurrence(order: float, z: float) -> tuple[float, float]:
    """Upward recurrence in log space from the fractional part of ``order``.

    Returns ``(log K_order(z), K_{order+1}(z) / K_order(z))``. Upward
    recurrence is the stable direction for K.
    """
    n = int(math.floor(order))
    mu = order - n
    k0 = kve(mu, z)
    k1 = kve(mu + 1.0, z)
    if not (np.isfinite(k0) and np.isfinite(k1)) or k0 <= 0:
        raise DomainError(f"cannot evaluate K_{order}({z}) in range")
    log_k = math.log(k0) - z
    ratio = k1 / k0  # K_{mu+1} / K_mu
    m = mu
    for _ in range(n):
        log_k += math.log(ratio)
        m += 1.0
        ratio = 1.0 / ratio + 2.0 * m / z
    return log_k, ratio


def log_bessel_k_ratio(order: float, z: float) -> tuple[float, float]:
    """``(log K_order(z), K_{|order|+1}(z) / K_|order|(z))`` for scalar ``z > 0``."""
    if not z > 0:
        raise DomainError(f"Bessel K argument must be positive, got {z}")
    order = _norm_order(order)
    k0 = kve(order, z)
    k1 = kve(order + 1.0, z)
    if np.isfinite(k1) and k0 > 0 and np.isfinite(k0):
        return math.log(k0) - z, k1 / k0
    return _log_k_recurrence(order, z)


def log_bessel_k(order: float, z):
    """Natural log of the modified Bessel function ``K_order(z)``.

    Uses the exponentially scaled AMOS routine where it is representable and
    falls back to upward recurrence in log space where ``K`` would overflow
    (large order, small argument). ``K_{-v} = K_v`` so only ``|order|`` is
    used.

    Args:
        order: Real order.
        z: Positive argument, scalar or array.

    Raises:
        DomainError: if any ``z <= 0``.
    """
    if np.ndim(z) == 0:
        return log_bessel_k_ratio(order, float(z))[0]
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr > 0)):
        raise DomainError("Bessel K argument must be positive")
    order = _norm_order(order)
    with np.errstate(over="ignore"):
        scaled = kve(order, z_arr)
    with np.errstate(divide="ignore"):
        out = np.log(scaled) - z_arr
    bad = ~np.isfinite(out)
    if np.any(bad):
        flat = out.reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            flat[i] = _log_k_recurrence(order, float(z_arr.reshape(-1)[i]))[0]
        out = flat.reshape(z_arr.shape)
    return out[()] if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# Models
# ----------------------------------------------------------------------------


def _precision_from_chol(chol: np.ndarray) -> np.ndarray:
    d = chol.shape[0]
    prec = linalg.cho_solve((chol, True), np.eye(d))
    return 0.5 * (prec + prec.T)


def _checked_cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ModelError(f"{what} must be a square matrix")
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
        raise ModelError(f"{what} must be symmetric")
    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError as exc:
        raise ModelError(f"{what} is not positive definite") from exc


class StateSpaceModel:
    """Interface consumed by the flow, the kernels and the baselines.

    Subclasses supply ``dim``, ``x0``, ``process_cov`` and the density hooks.
    """

    dim: int
    x0: np.ndarray
    process_cov: np.ndarray

    def __init__(self):
        # exp-clamp events; the only mutable state a model carries
        self.saturations: Counter = Counter()

    # transition ---------------------------------------------------------
    def transition_logpdf(self, x, x_prev):
        raise NotImplementedError

    def transition_logpdf_grad(self, x, x_prev):
        raise NotImplementedError

    def transition_sample(self, x_prev, rng: np.random.Generator):
        raise NotImplementedError

    def propagate_mean(self, x_prev):
        """Noise-free propagation ``f(x_prev, 0)``."""
        raise NotImplementedError

    # observation --------------------------------------------------------
    def observation_logpdf(self, y, x):
        raise NotImplementedError

    def observation_logpdf_grad(self, y, x):
        raise NotImplementedError

    def observation_sample(self, x, rng: np.random.Generator):
        raise NotImplementedError

    def linearize(self, eta_bar) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(H, e, R)`` for ``h(eta) ~ H eta + e`` around ``eta_bar``."""
        raise NotImplementedError

    def neg_expected_hessian(self, x_ref) -> np.ndarray:
        """``-E_{y|x}[Hessian of log p(x|x_prev) p(y|x)]`` at ``x_ref``."""
        raise NotImplementedError


class LinearGaussianModel(StateSpaceModel):
    """``x_t = alpha x_{t-1} + v_t``, ``y_t = x_t + w_t`` with Gaussian noises.

    Args:
        alpha: AR coefficient.
        cov: Process noise covariance (d x d, SPD).
        obs_var: Observation noise variance; observation covariance is
            ``obs_var * I``.
        x0: Known initial state, zeros by default.
    """

    def __init__(self, alpha: float, cov, obs_var: float, x0=None):
        super().__init__()
        cov = np.asarray(cov, dtype=float)
        self.chol = _checked_cholesky(cov, "process covariance")
        if obs_var < 0:
            raise ModelError("observation variance must be nonnegative")
        self.alpha = float(alpha)
        self.cov = cov
        self.dim = cov.shape[0]
        self.obs_var = float(obs_var)
        self.precision = _precision_from_chol(self.chol)
        self.process_cov = cov
        self.x0 = np.zeros(self.dim) if x0 is None else np.asarray(x0, dtype=float)

    @classmethod
    def on_grid(cls, d: int, alpha=0.9, obs_var=1.0, dispersion: DispersionParams | None = None):
        geom = GridGeometry.square(d)
        cov = build_spatial_covariance(geom, dispersion or DispersionParams())
        return cls(alpha, cov, obs_var)

    @property
    def obs_cov(self) -> np.ndarray:
        return self.obs_var * np.eye(self.dim)

    def transition_logpdf(self, x, x_prev):
        r = x - self.alpha * x_prev
        return -0.5 * np.sum(r * (r @ self.precision), axis=-1)

    def transition_logpdf_grad(self, x, x_prev):
        r = x - self.alpha * x_prev
        pr = r @ self.precision
        return -0.5 * np.sum(r * pr, axis=-1), -pr

    def transition_sample(self, x_prev, rng):
        x_prev = np.asarray(x_prev, dtype=float)
        z = rng.standard_normal(x_prev.shape)
        return self.alpha * x_prev + z @ self.chol.T

    def propagate_mean(self, x_prev):
        return self.alpha * np.asarray(x_prev, dtype=float)

    def observation_logpdf(self, y, x):
        r = y - x
        return -0.5 * np.sum(r * r, axis=-1) / self.obs_var

    def observation_logpdf_grad(self, y, x):
        r = y - x
        return -0.5 * np.sum(r * r, axis=-1) / self.obs_var, r / self.obs_var

    def observation_sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + math.sqrt(self.obs_var) * rng.standard_normal(x.shape)

    def linearize(self, eta_bar):
        d = self.dim
        return np.eye(d), np.zeros(d), self.obs_cov

    def neg_expected_hessian(self, x_ref):
        return np.eye(self.dim) / self.obs_var + self.precision


class GHSkewedTPoissonModel(StateSpaceModel):
    """Generalized hyperbolic skewed-t dynamics with Poisson counts.

    The transition is the GH law with index ``-nu/2``, ``chi = nu`` and
    ``psi = 0`` (the skewed-t limit), location ``alpha * x_prev``, dispersion
    ``cov`` and skewness ``gamma``. Observations are independent Poisson
    counts with rate ``m1 * exp(m2 * x_k)``.
    """

    def __init__(self, alpha: float, cov, nu: float, gamma, m1: float = 1.0, m2: float = 1.0 / 3.0, x0=None):
        super().__init__()
        cov = np.asarray(cov, dtype=float)
        self.chol = _checked_cholesky(cov, "dispersion matrix")
        d = cov.shape[0]
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (d,)).copy()
        if not nu > 4:
            raise ModelError(f"nu must exceed 4 for a finite state covariance, got {nu}")
        if not m1 > 0:
            raise ModelError("Poisson scale m1 must be positive")
        self.alpha = float(alpha)
        self.cov = cov
        self.dim = d
        self.nu = float(nu)
        self.gamma = gamma
        self.m1 = float(m1)
        self.m2 = float(m2)
        self.x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)

        self.gh_index = -self.nu / 2.0
        self.chi = self.nu
        self.psi = 0.0
        self.bessel_order = abs(self.gh_index - d / 2.0)
        self.precision = _precision_from_chol(self.chol)
        self.prec_gamma = self.precision @ gamma
        self.gamma_quad = float(gamma @ self.prec_gamma) + self.psi

        nu_ = self.nu
        self.state_cov = nu_ / (nu_ - 2.0) * cov + nu_**2 / ((2.0 * nu_ - 8.0) * (nu_ / 2.0 - 1.0) ** 2) * np.outer(
            gamma, gamma
        )
        self._state_chol = _checked_cholesky(self.state_cov, "state covariance")
        self.state_precision = _precision_from_chol(self._state_chol)
        self.process_cov = self.state_cov

    @classmethod
    def on_grid(cls, d: int, alpha=0.9, nu=7.0, gamma=0.3, m1=1.0, m2=1.0 / 3.0, dispersion=None):
        geom = GridGeometry.square(d)
        cov = build_spatial_covariance(geom, dispersion or DispersionParams())
        return cls(alpha, cov, nu, gamma, m1, m2)

    # transition ---------------------------------------------------------
    def _quad(self, x, x_prev):
        r = x - self.alpha * x_prev
        pr = r @ self.precision
        return r, pr, np.sum(r * pr, axis=-1)

    def transition_logpdf(self, x, x_prev):
        r, _, q = self._quad(x, x_prev)
        if self.gamma_quad == 0.0:
            return -0.5 * (self.nu + self.dim) * np.log1p(q / self.nu)
        z = np.sqrt((self.chi + q) * self.gamma_quad)
        half_excess = self.dim / 2.0 - self.gh_index
        return log_bessel_k(self.bessel_order, z) + r @ self.prec_gamma - half_excess * np.log(z)

    def transition_logpdf_grad(self, x, x_prev):
        r, pr, q = self._quad(x, x_prev)
        if self.gamma_quad == 0.0:
            lp = -0.5 * (self.nu + self.dim) * np.log1p(q / self.nu)
            scale = (self.nu + self.dim) / (self.nu + q)
            return lp, -np.asarray(scale)[..., None] * pr
        z = np.sqrt((self.chi + q) * self.gamma_quad)
        half_excess = self.dim / 2.0 - self.gh_index
        if np.ndim(z) == 0:
            log_k, ratio = log_bessel_k_ratio(self.bessel_order, float(z))
        else:
            pairs = [log_bessel_k_ratio(self.bessel_order, zi) for zi in np.ravel(z)]
            log_k = np.array([p[0] for p in pairs]).reshape(z.shape)
            ratio = np.array([p[1] for p in pairs]).reshape(z.shape)
        lp = log_k + r @ self.prec_gamma - half_excess * np.log(z)
        # d/dz [log K_a(z) - a log z] = -K_{a+1}(z)/K_a(z) when a = d/2 - index
        dlp_dq = -ratio * self.gamma_quad / (2.0 * z)
        grad = 2.0 * np.asarray(dlp_dq)[..., None] * pr + self.prec_gamma
        return lp, grad

    def transition_sample(self, x_prev, rng):
        x_prev = np.asarray(x_prev, dtype=float)
        lead = x_prev.shape[:-1]
        # W ~ InvGamma(nu/2, nu/2)
        w = 1.0 / rng.gamma(self.nu / 2.0, 2.0 / self.nu, size=lead)
        w = np.asarray(w)[..., None]
        z = rng.standard_normal(x_prev.shape)
        return self.alpha * x_prev + self.gamma * w + np.sqrt(w) * (z @ self.chol.T)

    def propagate_mean(self, x_prev):
        return self.alpha * np.asarray(x_prev, dtype=float)

    # observation --------------------------------------------------------
    def _rate(self, x):
        arg = self.m2 * np.asarray(x, dtype=float)
        if arg.max() > EXP_CLAMP:
            self.saturations["poisson_rate"] += int(np.count_nonzero(arg > EXP_CLAMP))
            arg = np.minimum(arg, EXP_CLAMP)
        return arg, self.m1 * np.exp(arg)

    def observation_logpdf(self, y, x):
        y = np.asarray(y)
        if y.min() < 0:
            raise DomainError("Poisson counts must be nonnegative")
        arg, rate = self._rate(x)
        return np.sum(y * (math.log(self.m1) + arg) - rate, axis=-1)

    def observation_logpdf_grad(self, y, x):
        y = np.asarray(y)
        if y.min() < 0:
            raise DomainError("Poisson counts must be nonnegative")
        arg, rate = self._rate(x)
        lp = np.sum(y * (math.log(self.m1) + arg) - rate, axis=-1)
        return lp, (y - rate) * self.m2

    def observation_sample(self, x, rng):
        _, rate = self._rate(x)
        return rng.poisson(rate).astype(float)

    def linearize(self, eta_bar):
        _, rate = self._rate(eta_bar)
        H = np.diag(self.m2 * rate)
        e = rate - self.m2 * rate * eta_bar
        # Poisson variance equals its mean
        R = np.diag(rate)
        return H, e, R

    def neg_expected_hessian(self, x_ref):
        _, rate = self._rate(x_ref)
        return np.diag(self.m2**2 * rate) + self.state_precision


def simulate_trajectory(model: StateSpaceModel, T: int, rng: np.random.Generator):
    """Roll the model forward ``T`` steps from its known initial state.

    Returns:
        ``(states, observations)``, each of shape ``(T, d)``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    d = model.dim
    xs = np.empty((T, d))
    ys = np.empty((T, d))
    x = model.x0
    for t in range(T):
        x = model.transition_sample(x, rng)
        xs[t] = x
        ys[t] = model.observation_sample(x, rng)
    return xs, ys
