"""Exact Daum-Huang invertible particle flow (EDH and its local variant).

The flow moves a prior sample ``eta_0`` along ``d eta / d lambda = A eta + b``
for pseudo-time ``lambda`` in ``[0, 1]``. With explicit Euler steps the
whole migration collapses to an affine map ``eta_1 = C eta_0 + D`` whose
Jacobian determinant enters the proposal density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import FlowDegenerateError, FlowDivergedError, FlowError

Linearizer = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class LambdaSchedule:
    """Pseudo-time grid; ``steps[m] = (lambda_m, eps_m)``."""

    lambdas: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        if not np.all(self.eps > 0):
            raise ValueError("step sizes must be positive")
        if abs(self.eps.sum() - 1.0) > 1e-12:
            raise ValueError("step sizes must sum to one")

    @property
    def steps(self):
        return list(zip(self.lambdas.tolist(), self.eps.tolist()))

    def __len__(self):
        return len(self.eps)


def lambda_schedule(n_steps: int, ratio: float = 1.2) -> LambdaSchedule:
    """Geometric step sizes ``eps_{m+1} = ratio * eps_m`` normalized to sum to one."""
    if n_steps < 1 or ratio <= 0:
        raise ValueError("need n_steps >= 1 and ratio > 0")
    # relative to the largest step, so huge ratios cannot overflow
    log_eps = np.arange(n_steps, dtype=float) * math.log(ratio)
    eps = np.exp(log_eps - log_eps.max())
    if eps.min() == 0.0:
        raise ValueError(f"step-size ratio {ratio} over {n_steps} steps underflows the smallest step")
    eps /= eps.sum()
    # absorb rounding in the largest step so none can turn nonpositive
    eps[np.argmax(eps)] += 1.0 - math.fsum(eps)
    lambdas = np.minimum(np.cumsum(eps), 1.0)
    lambdas[-1] = 1.0
    return LambdaSchedule(lambdas=lambdas, eps=eps)


@dataclass(frozen=True)
class FlowInputs:
    """What the drift needs besides the current mean.

    Attributes:
        P: Prior (process noise) covariance.
        y: Observation.
        linearize: ``eta -> (H, e, R)`` with ``h(eta) ~ H eta + e``.
    """

    P: np.ndarray
    y: np.ndarray
    linearize: Linearizer


@dataclass(frozen=True)
class FlowMap:
    C: np.ndarray
    D: np.ndarray
    log_abs_det_C: float
    _lu: tuple = field(default=None, repr=False, compare=False)

    @classmethod
    def identity(cls, d: int) -> "FlowMap":
        return cls(np.eye(d), np.zeros(d), 0.0)

    @property
    def lu(self):
        if self._lu is None:
            lu = linalg.lu_factor(self.C, check_finite=False)
            object.__setattr__(self, "_lu", lu)
        return self._lu


def edh_step_params(lam: float, inputs: FlowInputs, eta_bar: np.ndarray, eta_bar0: np.ndarray):
    """Drift ``(A, b)`` of the exact flow at pseudo-time ``lam``.

    ``A = -1/2 P H^T (lam H P H^T + R)^{-1} H`` and
    ``b = (I + 2 lam A) [(I + lam A) P H^T R^{-1} (y - e) + A eta_bar0]``,
    with ``H, e`` linearized at the migrated mean ``eta_bar``.

    Raises:
        FlowDegenerateError: if ``lam H P H^T + R`` or ``R`` is not
            positive definite.
    """
    H, e, R = inputs.linearize(eta_bar)
    P = inputs.P
    d = P.shape[0]
    PHt = P @ H.T
    S = lam * (H @ PHt) + R
    try:
        S_f = linalg.cho_factor(S, lower=True, check_finite=False)
        R_f = linalg.cho_factor(R, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise FlowDegenerateError(lam) from exc
    A = -0.5 * PHt @ linalg.cho_solve(S_f, H, check_finite=False)
    eye = np.eye(d)
    innov = PHt @ linalg.cho_solve(R_f, inputs.y - e, check_finite=False)
    b = (eye + 2.0 * lam * A) @ ((eye + lam * A) @ innov + A @ eta_bar0)
    return A, b


def t_function(eta_bar0: np.ndarray, inputs: FlowInputs, sched: LambdaSchedule) -> FlowMap:
    """Compose the Euler flow steps into the affine map ``(C, D)``.

    The linearization point is migrated alongside, exactly as a particle
    sitting at the mean would move.
    """
    eta_bar0 = np.asarray(eta_bar0, dtype=float)
    d = eta_bar0.shape[0]
    eye = np.eye(d)
    C = eye.copy()
    D = np.zeros(d)
    log_det = 0.0
    eta = eta_bar0.copy()
    for lam, eps in zip(sched.lambdas, sched.eps):
        A, b = edh_step_params(lam, inputs, eta, eta_bar0)
        step = eye + eps * A
        sign, ld = np.linalg.slogdet(step)
        if sign == 0:
            raise FlowDegenerateError(lam, "singular Euler factor")
        eta = eta + eps * (A @ eta + b)
        C = step @ C
        D = step @ D + eps * b
        log_det += ld
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(C)) and np.all(np.isfinite(D))):
            raise FlowDivergedError(f"non-finite flow state at lambda={lam:.6g}")
    return FlowMap(C, D, float(log_det))


def flow_apply(fmap: FlowMap, eta0, invert: bool = False):
    """Push ``eta0`` forward through ``C eta0 + D``, or pull a state back.

    Works on a single vector or a batch of row vectors.
    """
    v = np.asarray(eta0, dtype=float)
    if not invert:
        return v @ fmap.C.T + fmap.D
    rhs = (v - fmap.D).T
    try:
        out = linalg.lu_solve(fmap.lu, rhs, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise FlowDegenerateError(1.0, "singular flow map") from exc
    return out.T


def flow_proposal_logpdf(fmap: FlowMap, eta0, x_prev, model) -> float:
    """Log density of ``C eta0 + D`` when ``eta0 ~ p(. | x_prev)``."""
    return model.transition_logpdf(eta0, x_prev) - fmap.log_abs_det_C


def flow_inputs(model, y) -> FlowInputs:
    return FlowInputs(P=model.process_cov, y=np.asarray(y, dtype=float), linearize=model.linearize)


def edh_flow(prev_particles: np.ndarray, model, y, sched: LambdaSchedule) -> FlowMap:
    """Shared EDH map for one time step, linearized at the propagated ensemble mean."""
    eta_bar0 = model.propagate_mean(np.atleast_2d(prev_particles)).mean(axis=0)
    return t_function(eta_bar0, flow_inputs(model, y), sched)


def ledh_flow_for_particle(x_prev, model, y, sched: LambdaSchedule) -> FlowMap:
    """Per-particle map built at that particle's own propagated mean."""
    return t_function(model.propagate_mean(x_prev), flow_inputs(model, y), sched)


def ledh_flows(prev_particles: np.ndarray, model, y, sched: LambdaSchedule) -> list:
    """LEDH maps for a batch; a failing particle yields its exception instead of a map."""
    out = []
    for x_prev in np.atleast_2d(prev_particles):
        try:
            # non-finite intermediates are caught by t_function itself
            with np.errstate(invalid="ignore", over="ignore"):
                out.append(ledh_flow_for_particle(x_prev, model, y, sched))
        except (FlowError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out.append(exc)
    return out
