"""Composite Metropolis-Hastings kernel for sequential MCMC.

One kernel application runs three Metropolis-Hastings stages on a chain
element ``(ancestor, x_prev, x_curr)``:

1. a joint draw of ancestor and current state, proposed through an
   invertible particle flow;
2. an ancestry refinement that redraws only the ancestor;
3. a refinement of the current state alone, either with the discretized
   Zig-Zag walk (``"dzz"``) or with the discrete bouncy particle sampler
   (``"dbps"``).

All acceptance tests are done in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import time
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import FlowError, ModelError
from .flow import FlowMap, LambdaSchedule, flow_apply, ledh_flow_for_particle, lambda_schedule

LogTarget = Callable[[np.ndarray], float]
LogTargetGrad = Callable[[np.ndarray], tuple]

# Delayed stage is rejected when 1 - rho1 falls below this.
MIN_REJECT_PROB = 1e-12


@dataclass
class ChainSample:
    """One element of the sequential MCMC chain.

    Attributes:
        ancestor: Index into the previous reserved particle set.
        x_prev: State at ``t-1`` (the ancestor's value).
        x_curr: State at ``t``.
        eta0: Flow preimage of ``x_curr``.
        log_trans: Cached ``log p(x_curr | x_prev)``.
        log_obs: Cached ``log p(y | x_curr)``.
        log_eta0: Cached ``log p(eta0 | x_prev)``.
        flow: Map that produced ``x_curr`` (shared under EDH).
    """

    ancestor: int
    x_prev: np.ndarray
    x_curr: np.ndarray
    eta0: np.ndarray
    log_trans: float
    log_obs: float
    log_eta0: float
    flow: FlowMap

    @property
    def log_target(self) -> float:
        return self.log_trans + self.log_obs


def make_sample(ancestor, x_prev, eta0, fmap: FlowMap, y, model, x_curr=None) -> ChainSample:
    """Build a sample and fill its caches; ``x_curr`` defaults to the pushed ``eta0``."""
    if x_curr is None:
        x_curr = flow_apply(fmap, eta0)
    return ChainSample(
        ancestor=ancestor,
        x_prev=x_prev,
        x_curr=x_curr,
        eta0=eta0,
        log_trans=float(model.transition_logpdf(x_curr, x_prev)),
        log_obs=float(model.observation_logpdf(y, x_curr)),
        log_eta0=float(model.transition_logpdf(eta0, x_prev)),
        flow=fmap,
    )


@dataclass(frozen=True)
class Preconditioner:
    """``gamma = L L^T``; ``inv_chol`` caches ``L^{-1}`` for velocity draws."""

    gamma: np.ndarray
    chol: np.ndarray
    inv_chol: np.ndarray

    @classmethod
    def from_matrix(cls, gamma) -> "Preconditioner":
        gamma = np.asarray(gamma, dtype=float)
        try:
            chol = linalg.cholesky(gamma, lower=True)
        except linalg.LinAlgError as exc:
            raise ModelError("preconditioning matrix is not positive definite") from exc
        inv_chol = linalg.solve_triangular(chol, np.eye(len(gamma)), lower=True)
        return cls(gamma, chol, inv_chol)

    @classmethod
    def identity(cls, d: int) -> "Preconditioner":
        eye = np.eye(d)
        return cls(eye, eye, eye)


def precondition_matrix(model, x_ref) -> Preconditioner:
    """Negative expected Hessian of the refinement target at ``x_ref``, factorized."""
    return Preconditioner.from_matrix(model.neg_expected_hessian(np.asarray(x_ref, dtype=float)))


@dataclass
class KernelDiagnostics:
    """Acceptance counters per stage plus wall-clock seconds per stage."""

    n_joint: int = 0
    acc_joint: int = 0
    n_ancestry: int = 0
    acc_ancestry: int = 0
    n_refine: int = 0
    acc_refine_first: int = 0
    acc_refine_delayed: int = 0
    zero_weight: int = 0
    flow_failures: int = 0
    time_joint: float = 0.0
    time_ancestry: float = 0.0
    time_refine: float = 0.0

    @staticmethod
    def _rate(num, den):
        return num / den if den else float("nan")

    @property
    def rho1(self) -> float:
        return self._rate(self.acc_joint, self.n_joint)

    @property
    def rho2(self) -> float:
        return self._rate(self.acc_ancestry, self.n_ancestry)

    @property
    def rho3(self) -> float:
        return self._rate(self.acc_refine_first + self.acc_refine_delayed, self.n_refine)

    @property
    def rho3_first(self) -> float:
        return self._rate(self.acc_refine_first, self.n_refine)

    @property
    def rho3_delayed(self) -> float:
        return self._rate(self.acc_refine_delayed, self.n_refine)

    def __iadd__(self, other: "KernelDiagnostics"):
        for f in self.__dataclass_fields__:
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self


@dataclass(frozen=True)
class KernelConfig:
    """Knobs of the composite kernel.

    Attributes:
        flow: ``"edh"`` (one shared map per time step) or ``"ledh"``.
        refine: Stage-3 kernel, ``"dzz"``, ``"dbps"`` or ``None``.
        n_thinning: Inner iterations of the stage-3 walk.
        step_scale: Half-width of the uniform auxiliary velocity.
        p_refresh: Velocity refresh probability (DBPS only).
        schedule: Pseudo-time grid for LEDH maps.
        flip_correction: Add the flip-index proposal ratio to the DZZ
            delayed stage.
    """

    flow: str = "edh"
    refine: Optional[str] = "dzz"
    n_thinning: int = 10
    step_scale: float = 1.0
    p_refresh: float = 0.1
    schedule: LambdaSchedule = field(default_factory=lambda: lambda_schedule(29, 1.2))
    flip_correction: bool = False

    def __post_init__(self):
        if self.flow not in ("edh", "ledh"):
            raise ValueError(f"unknown flow {self.flow!r}")
        if self.refine not in ("dzz", "dbps", None):
            raise ValueError(f"unknown refinement {self.refine!r}")
        if self.n_thinning < 1:
            raise ValueError("n_thinning must be at least 1")


# ----------------------------------------------------------------------------
# Target of the current-state refinement
# ----------------------------------------------------------------------------


def target_logpdf_grad(x_t, x_prev, y, model):
    """``log p(x_t | x_prev) + log p(y | x_t)`` and its gradient in ``x_t``."""
    lt, gt = model.transition_logpdf_grad(x_t, x_prev)
    lo, go = model.observation_logpdf_grad(y, x_t)
    return lt + lo, gt + go


def _bound_target(x_prev, y, model):
    def logp(x):
        return float(model.transition_logpdf(x, x_prev) + model.observation_logpdf(y, x))

    def logp_grad(x):
        lp, g = target_logpdf_grad(x, x_prev, y, model)
        return float(lp), g

    return logp, logp_grad


# ----------------------------------------------------------------------------
# Stage 1 and 2
# ----------------------------------------------------------------------------


def joint_draw_log_ratio(proposal: ChainSample, current: ChainSample, mode: str = "edh") -> float:
    """Log acceptance ratio of the flow joint draw.

    Under EDH both samples share one map and the Jacobians cancel; under
    LEDH the ratio ``|det C*| / |det C|`` is kept.
    """
    log_r = (proposal.log_target - proposal.log_eta0) - (current.log_target - current.log_eta0)
    if mode == "ledh":
        log_r += proposal.flow.log_abs_det_C - current.flow.log_abs_det_C
    return log_r


def joint_draw_flow(prev_particles, y, model, mode, current: ChainSample, shared_flow, rng, sched=None):
    """Stage 1: propose ``(ancestor, eta0)`` afresh and push it through the flow.

    Returns:
        ``(sample, accepted)``. A flow failure under LEDH counts as a
        rejection; ``accepted`` is then ``None`` so callers can count it.
    """
    a = int(rng.integers(len(prev_particles)))
    x_prev = prev_particles[a]
    eta0 = model.transition_sample(x_prev, rng)
    if mode == "edh":
        if shared_flow is None:
            raise ValueError("EDH joint draw requires the shared flow map")
        fmap = shared_flow
    else:
        try:
            fmap = ledh_flow_for_particle(x_prev, model, y, sched or lambda_schedule(29, 1.2))
        except (FlowError, np.linalg.LinAlgError):
            return current, None
    prop = make_sample(a, x_prev, eta0, fmap, y, model)
    log_r = joint_draw_log_ratio(prop, current, mode)
    if not math.isfinite(prop.log_target):
        return current, False
    if math.log(rng.random()) < min(0.0, log_r):
        return prop, True
    return current, False


def refine_ancestry(prev_particles, current: ChainSample, model, rng):
    """Stage 2: redraw the ancestor uniformly from the previous reserved set.

    With the empirical previous posterior as proposal the ratio reduces to
    ``p(x_t | x*_{t-1}) / p(x_t | x_{t-1})``.
    """
    a = int(rng.integers(len(prev_particles)))
    x_prev = prev_particles[a]
    log_trans = float(model.transition_logpdf(current.x_curr, x_prev))
    log_r = log_trans - current.log_trans
    if math.log(rng.random()) < min(0.0, log_r):
        new = replace(
            current,
            ancestor=a,
            x_prev=x_prev,
            log_trans=log_trans,
            log_eta0=float(model.transition_logpdf(current.eta0, x_prev)),
        )
        return new, True
    return current, False


# ----------------------------------------------------------------------------
# Stage 3: delayed-rejection walks
# ----------------------------------------------------------------------------


def _log1mexp(a: float) -> float:
    """``log(1 - exp(a))`` for ``a <= 0``."""
    if a >= 0.0:
        return -math.inf
    return math.log(-math.expm1(a)) if a > -0.693 else math.log1p(-math.exp(a))


def zigzag_flip(v_rej, grad, rng):
    """Flip one velocity component, chosen with weights ``max(0, v_k * grad_k)``.

    Returns ``None`` when no component has positive weight.
    """
    w = np.maximum(v_rej * grad, 0.0)
    total = w.sum()
    if not total > 0.0:
        return None
    cdf = np.cumsum(w)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, len(w) - 1)
    v_new = v_rej.copy()
    v_new[k] = -v_new[k]
    return v_new


def zigzag_flip_log_correction(v_rej, v_new, grad) -> float:
    """Log of ``q(reverse flip) / q(forward flip)`` for :func:`zigzag_flip`.

    The flipped index keeps its weight on the way back, so the ratio is the
    ratio of the two weight totals.
    """
    fwd = np.maximum(v_rej * grad, 0.0).sum()
    rev = np.maximum(-v_new * grad, 0.0).sum()
    return math.log(fwd) - math.log(rev)


def bounce_reflect(v_rej, grad, rng=None):
    """Reflect the velocity in the hyperplane orthogonal to ``grad``."""
    gg = float(grad @ grad)
    if gg < 1e-24:
        return None
    return v_rej - 2.0 * (float(v_rej @ grad) / gg) * grad


@dataclass
class WalkStats:
    n_iter: int = 0
    first: int = 0
    delayed: int = 0
    zero_weight: int = 0

    @property
    def rate(self) -> float:
        return (self.first + self.delayed) / self.n_iter if self.n_iter else float("nan")


def delayed_rejection_walk(logp, logp_grad, x, v, n_iter, rng, bounce, refresh=None, p_refresh=0.0, lp=None,
                           correction=None):
    """Run the two-stage deterministic-proposal walk for ``n_iter`` iterations.

    Each iteration proposes ``(x + v, -v)``; if rejected, ``bounce`` turns
    the negated velocity ``v'`` into ``v''`` at ``x' = x + v`` and
    ``x'' = x' - v''`` is tried with the delayed-rejection ratio. The
    velocity is negated after every iteration.

    Args:
        logp: Log target.
        logp_grad: Log target and its gradient.
        x: Starting state.
        v: Starting velocity.
        bounce: ``(v', grad, rng) -> v''`` or ``None`` to skip the second stage.
        refresh: ``rng -> v``; called with probability ``p_refresh`` after each
            iteration.
        correction: Optional ``(v', v'', grad) -> log ratio`` added to the
            delayed acceptance ratio for a random bounce.

    Returns:
        ``(x, v, logp(x), WalkStats)``.
    """
    stats = WalkStats()
    if lp is None:
        lp = logp(x)
    for _ in range(n_iter):
        stats.n_iter += 1
        x1 = x + v
        lp1 = logp(x1)
        log_a1 = min(0.0, lp1 - lp) if math.isfinite(lp1) else -math.inf
        if math.log(rng.random()) < log_a1:
            x, lp = x1, lp1
            stats.first += 1
            # (x1, -v) then the unconditional negation: keep moving along v
        else:
            v2 = None
            if math.isfinite(lp1):
                _, g1 = logp_grad(x1)
                v2 = bounce(-v, g1, rng)
            if v2 is None:
                stats.zero_weight += 1
                v = -v
            else:
                x2 = x1 - v2
                lp2 = logp(x2)
                den = _log1mexp(log_a1)
                accepted = False
                if math.isfinite(lp2) and den > math.log(MIN_REJECT_PROB):
                    num = _log1mexp(min(0.0, lp1 - lp2))
                    log_a2 = num - den + lp2 - lp
                    if correction is not None:
                        log_a2 += correction(-v, v2, g1)
                    log_a2 = min(0.0, log_a2)
                    accepted = math.log(rng.random()) < log_a2
                if accepted:
                    x, lp, v = x2, lp2, -v2
                    stats.delayed += 1
                else:
                    v = -v
        if refresh is not None and p_refresh > 0.0 and rng.random() < p_refresh:
            v = refresh(rng)
    return x, v, lp, stats


def draw_velocity(pre: Preconditioner, step_scale: float, rng) -> np.ndarray:
    """``v = L^{-1} u`` with ``u`` uniform on ``[-step_scale, step_scale]^d``."""
    u = rng.uniform(-1.0, 1.0, size=pre.chol.shape[0]) * step_scale
    return pre.inv_chol @ u


def _refine(current, y, model, pre, n_thinning, step_scale, rng, bounce, p_refresh=0.0, correction=None):
    logp, logp_grad = _bound_target(current.x_prev, y, model)
    v = draw_velocity(pre, step_scale, rng)
    refresh = (lambda r: draw_velocity(pre, step_scale, r)) if p_refresh > 0 else None
    x, _, _, stats = delayed_rejection_walk(
        logp, logp_grad, current.x_curr, v, n_thinning, rng, bounce,
        refresh=refresh, p_refresh=p_refresh, lp=current.log_target, correction=correction,
    )
    if stats.first + stats.delayed:
        current = replace(
            current,
            x_curr=x,
            log_trans=float(model.transition_logpdf(x, current.x_prev)),
            log_obs=float(model.observation_logpdf(y, x)),
        )
    return current, stats


def dzz_refine(current, y, model, pre, n_thinning=10, step_scale=1.0, rng=None, stats_out=None,
               flip_correction=False):
    """Stage 3 with the discretized Zig-Zag walk.

    The delayed ratio is used as-is by default; ``flip_correction=True`` adds
    the flip-index proposal ratio that makes the walk exactly reversible.

    Returns:
        ``(sample, acceptance_rate)``; ``x_prev`` and ``ancestor`` are never
        touched. Pass a list as ``stats_out`` to receive the :class:`WalkStats`.
    """
    correction = zigzag_flip_log_correction if flip_correction else None
    sample, stats = _refine(current, y, model, pre, n_thinning, step_scale, rng, zigzag_flip,
                            correction=correction)
    if stats_out is not None:
        stats_out.append(stats)
    return sample, stats.rate


def dbps_refine(current, y, model, pre, n_thinning=10, step_scale=1.0, p_refresh=0.1, rng=None, stats_out=None):
    """Stage 3 with the discrete bouncy particle sampler and full velocity refresh."""
    sample, stats = _refine(current, y, model, pre, n_thinning, step_scale, rng, bounce_reflect, p_refresh)
    if stats_out is not None:
        stats_out.append(stats)
    return sample, stats.rate


# ----------------------------------------------------------------------------
# Composite step
# ----------------------------------------------------------------------------


def composite_step(prev_particles, y, model, config: KernelConfig, current: ChainSample, shared_flow, rng,
                   pre: Preconditioner | None = None):
    """Apply stages 1-3 once and re-anchor ``eta0`` on the refined state.

    Args:
        pre: Preconditioner to reuse; computed at ``current.x_curr`` after
            stage 2 when omitted.

    Returns:
        ``(sample, KernelDiagnostics)`` for this single application.
    """
    diag = KernelDiagnostics()
    t0 = time.perf_counter()
    sample, acc = joint_draw_flow(prev_particles, y, model, config.flow, current, shared_flow, rng, config.schedule)
    diag.n_joint = 1
    diag.acc_joint = int(bool(acc))
    diag.flow_failures = int(acc is None)
    t1 = time.perf_counter()
    sample, acc = refine_ancestry(prev_particles, sample, model, rng)
    diag.n_ancestry = 1
    diag.acc_ancestry = int(acc)
    t2 = time.perf_counter()
    if config.refine is not None:
        if pre is None:
            pre = precondition_matrix(model, sample.x_curr)
        stats = []
        if config.refine == "dzz":
            sample, _ = dzz_refine(sample, y, model, pre, config.n_thinning, config.step_scale, rng, stats,
                                   config.flip_correction)
        else:
            sample, _ = dbps_refine(sample, y, model, pre, config.n_thinning, config.step_scale,
                                    config.p_refresh, rng, stats)
        st = stats[0]
        diag.n_refine = st.n_iter
        diag.acc_refine_first = st.first
        diag.acc_refine_delayed = st.delayed
        diag.zero_weight = st.zero_weight
        if st.first + st.delayed:
            eta0 = flow_apply(sample.flow, sample.x_curr, invert=True)
            sample = replace(sample, eta0=eta0, log_eta0=float(model.transition_logpdf(eta0, sample.x_prev)))
    t3 = time.perf_counter()
    diag.time_joint = t1 - t0
    diag.time_ancestry = t2 - t1
    diag.time_refine = t3 - t2
    return sample, diag
