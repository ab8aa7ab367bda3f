"""Sequential MCMC over time.

At every step a single Markov chain targets
``p(y_t | x_t) p(x_t | x_{t-1}) pi_hat_{t-1}(x_{t-1})``, where
``pi_hat_{t-1}`` is the uniform empirical measure on the previous step's
reserved samples. The first ``n_burn`` chain states are discarded and the
next ``n_particles`` form the new reserved set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from .errors import FlowError, SMCMCError
from .flow import FlowMap, edh_flow, flow_apply, lambda_schedule, ledh_flow_for_particle
from .kernels import (
    KernelConfig,
    KernelDiagnostics,
    composite_step,
    make_sample,
    precondition_matrix,
)
from .models import LinearGaussianModel


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 500
    n_burn: int = 100
    kernel: KernelConfig = field(default_factory=KernelConfig)

    def __post_init__(self):
        if self.n_particles < 1 or self.n_burn < 0:
            raise ValueError("need n_particles >= 1 and n_burn >= 0")


@dataclass
class ParticleSet:
    t: int
    particles: np.ndarray
    flow: FlowMap | None = None


@dataclass
class RunResult:
    estimates: np.ndarray
    diagnostics: list[KernelDiagnostics]
    wall_time: float
    status: str = "ok"
    message: str = ""

    @property
    def total(self) -> KernelDiagnostics:
        tot = KernelDiagnostics()
        for dg in self.diagnostics:
            tot += dg
        return tot

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def estimate_posterior_mean(pset: ParticleSet) -> np.ndarray:
    return np.asarray(pset.particles).mean(axis=0)


def compute_mse(estimates, truth) -> float:
    """Mean squared error per time step and per state dimension."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"estimate shape {est.shape} does not match truth {tru.shape}")
    return float(np.mean((est - tru) ** 2))


def _seed_sample(prev, ancestor, y, model, kcfg, shared_flow, rng):
    """First chain state of a step: an unconditional draw from the flow proposal."""
    x_prev = prev[ancestor]
    fmap = shared_flow if kcfg.flow == "edh" else ledh_flow_for_particle(x_prev, model, y, kcfg.schedule)
    eta0 = model.transition_sample(x_prev, rng)
    return make_sample(ancestor, x_prev, eta0, fmap, y, model)


def run_filter(model, observations, config: FilterConfig, rng: np.random.Generator) -> RunResult:
    """Filter ``observations`` with the composite-kernel sequential MCMC.

    Time step one uses the known initial state as the sole ancestor. A flow
    or numerical failure ends the run with ``status="failed"``; estimates
    for the remaining steps are NaN.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2 or len(observations) == 0:
        raise ValueError("observations must be a non-empty (T, d) array")
    kcfg = config.kernel
    T = len(observations)
    d = model.dim
    n, nb = config.n_particles, config.n_burn
    estimates = np.full((T, d), np.nan)
    diags: list[KernelDiagnostics] = []
    # Gaussian model: the preconditioner does not depend on the state
    fixed_pre = precondition_matrix(model, model.x0) if isinstance(model, LinearGaussianModel) else None

    prev = np.atleast_2d(model.x0).copy()
    start_idx = 0
    t0 = time.perf_counter()
    for t, y in enumerate(observations):
        diag = KernelDiagnostics()
        try:
            shared = edh_flow(prev, model, y, kcfg.schedule) if kcfg.flow == "edh" else None
            sample = _seed_sample(prev, start_idx, y, model, kcfg, shared, rng)
            reserved = np.empty((n, d))
            for j in range(nb + n):
                sample, dj = composite_step(prev, y, model, kcfg, sample, shared, rng, fixed_pre)
                diag += dj
                if j >= nb:
                    reserved[j - nb] = sample.x_curr
        except (SMCMCError, FlowError, np.linalg.LinAlgError, FloatingPointError) as exc:
            diags.append(diag)
            return RunResult(estimates, diags, time.perf_counter() - t0, "failed", f"t={t + 1}: {exc}")
        if not np.all(np.isfinite(reserved)):
            diags.append(diag)
            return RunResult(estimates, diags, time.perf_counter() - t0, "failed", f"t={t + 1}: non-finite state")
        pset = ParticleSet(t + 1, reserved, shared)
        estimates[t] = estimate_posterior_mean(pset)
        diags.append(diag)
        prev = reserved
        start_idx = n - 1
    return RunResult(estimates, diags, time.perf_counter() - t0)
