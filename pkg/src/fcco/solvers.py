"""Primal-dual block-coordinate solver with extrapolation, plus baselines.

The main solver alternates, per iteration:

  1. sample an outer batch S_t of component indices;
  2. for each sampled block, draw two independent inner mini-batches, form
     the extrapolated estimate
         g~ = g(x_t; B) + theta * (g(x_t; B) - g(x_{t-1}; B))
     (same batch B at both points), and update the block's dual variable by
     a mirror-prox step; unsampled blocks are left untouched;
  3. average the Jacobian-transpose products taken at the *second* batch with
     the *post-update* duals into the primal gradient estimate G_t;
  4. take a proximal gradient step on the primal variable.

Two dual distance-generating choices are supported: `quadratic` uses the
closed-form dual prox of each outer function; `conjugate` (smooth outers
only) tracks the scalar sequence u via u' = (tau*u + g~)/(1 + tau) and sets
y = f'(u').  Baselines: plug-in biased SGD (bsgd), moving-average tracking
(sox), its variance-corrected variant (msvr), and flat-sample SGD with
uniform (sgd_erm) or inverse-group-frequency (sgd_uw) sampling.

Randomness ordering contract (relied on by the equivalence tests): each
iteration consumes, in order, the outer-batch draw, then for each sampled
block in ascending index order the value batch followed by the Jacobian
batch.  The vectorized kernel path draws the same stream in one call.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .errors import (
    FlatViewUnavailableError,
    InvalidParameterError,
    NotSmoothError,
)
from .problem import (
    EXPLICIT_DUAL,
    U_SEQUENCE,
    BlockDualState,
    evaluate_objective,
    primal_prox_step,
    sample_outer_batch,
)

PSI_QUADRATIC = "quadratic"
PSI_CONJUGATE = "conjugate"


@dataclass
class AlexrConfig:
    """Step sizes and batching for the primal-dual solver.

    eta, tau    proximal coefficients of the primal and dual steps
    theta       extrapolation weight in [0, 1]
    S, B        outer and inner batch sizes
    T           iteration budget (exact; never truncated)
    psi_mode    'quadratic' or 'conjugate' (smooth outers only)
    averaging   which iterate the run reports as its output measure:
                'last' or 'uniform'
    """

    eta: float
    tau: float
    theta: float
    S: int
    B: int
    T: int
    psi_mode: str = PSI_QUADRATIC
    seed: int = 0
    averaging: str = "uniform"
    label: str = "alexr"

    def __post_init__(self):
        if self.eta <= 0 or self.tau <= 0:
            raise InvalidParameterError("eta and tau must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidParameterError("theta must lie in [0, 1]")
        if self.S < 1 or self.B < 1 or self.T < 0:
            raise InvalidParameterError("S, B must be >= 1 and T >= 0")
        if self.psi_mode not in (PSI_QUADRATIC, PSI_CONJUGATE):
            raise InvalidParameterError(f"unknown psi_mode {self.psi_mode!r}")
        if self.averaging not in ("last", "uniform"):
            raise InvalidParameterError(f"unknown averaging {self.averaging!r}")


@dataclass
class BaselineConfig:
    """Configuration for bsgd / sox / msvr / sgd_erm / sgd_uw.

    `step` is the proximal coefficient of the primal step (same role as
    `eta` above); `gamma` is the moving-average weight of sox/msvr.  With
    `subgradient_fallback` off, sox refuses non-smooth outer functions.
    """

    variant: str
    step: float
    gamma: float = 0.9
    S: int = 1
    B: int = 1
    T: int = 0
    seed: int = 0
    averaging: str = "last"
    subgradient_fallback: bool = False
    label: str = ""

    def __post_init__(self):
        if self.variant not in ("bsgd", "sox", "msvr", "sgd_erm", "sgd_uw"):
            raise InvalidParameterError(f"unknown baseline variant {self.variant!r}")
        if self.step <= 0:
            raise InvalidParameterError("step must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameterError("gamma must lie in (0, 1]")
        if self.S < 1 or self.B < 1 or self.T < 0:
            raise InvalidParameterError("S, B must be >= 1 and T >= 0")
        if not self.label:
            self.label = self.variant


def strongly_convex_preset(mu, n, S, B, T, epsilon, seed=0, theta=None,
                           theta_margin=0.5, psi_mode=PSI_QUADRATIC, label="alexr"):
    """Step-size preset for mu-strongly-convex problems:
    eta = mu*theta/(1-theta), tau = S/(n*(1-theta)), theta -> 1 as the
    target accuracy epsilon -> 0 (theta = 1 - theta_margin*epsilon unless
    given explicitly).  Reports the last iterate."""
    if theta is None:
        theta = 1.0 - theta_margin * epsilon
    if not 0.0 < theta < 1.0:
        raise InvalidParameterError("preset needs theta in (0, 1)")
    eta = mu * theta / (1.0 - theta)
    tau = S / (n * (1.0 - theta))
    return AlexrConfig(eta=eta, tau=tau, theta=theta, S=S, B=B, T=T,
                       psi_mode=psi_mode, seed=seed, averaging="last", label=label)


def convex_preset(S, B, T, epsilon, seed=0, theta=0.0, eta_coeff=1.0,
                  tau_coeff=1.0, psi_mode=PSI_QUADRATIC, label="alexr"):
    """Step-size preset for merely convex problems: eta = eta_coeff/epsilon,
    tau = tau_coeff/(B*epsilon).  theta=0 suits non-smooth inner noise,
    theta=1 exploits smooth inner maps.  Reports the uniform average."""
    eta = eta_coeff / epsilon
    tau = tau_coeff / (B * epsilon)
    return AlexrConfig(eta=eta, tau=tau, theta=theta, S=S, B=B, T=T,
                       psi_mode=psi_mode, seed=seed, averaging="uniform", label=label)


@dataclass
class AlexrState:
    x: np.ndarray
    x_prev: np.ndarray
    dual: BlockDualState
    t: int
    rng: np.random.Generator
    oracle_count: int = 0


@dataclass
class BaselineState:
    x: np.ndarray
    x_prev: np.ndarray
    u: Optional[np.ndarray]
    t: int
    rng: np.random.Generator
    oracle_count: int = 0


def _initial_dual_block(f):
    lo, hi = f.dual_domain()
    return 0.0 if lo <= 0.0 <= hi else lo


def _initial_u_block(f, y0):
    try:
        return float(f.conjugate_grad(y0))
    except NotSmoothError:
        return 0.0


def init_alexr_state(cfg, problem):
    """x0 = 0 box-projected; y0 = 0 where feasible, else the dual lower
    endpoint; in conjugate mode u0 is chosen so that f'(u0) = y0 when the
    conjugate gradient exists, else 0."""
    x0 = problem.initial_point()
    y0 = np.array([_initial_dual_block(f) for f in problem.outers], dtype=float)
    if cfg.psi_mode == PSI_CONJUGATE:
        for f in problem.outers:
            if not f.is_smooth:
                raise NotSmoothError("conjugate mode requires every outer function smooth")
        u0 = np.array([_initial_u_block(f, y) for f, y in zip(problem.outers, y0)], dtype=float)
        dual = BlockDualState(u0, U_SEQUENCE)
    else:
        dual = BlockDualState(y0, EXPLICIT_DUAL)
    return AlexrState(x=x0, x_prev=x0.copy(), dual=dual, t=0,
                      rng=np.random.default_rng(cfg.seed))


def dual_update_quadratic(f, y_block, g_tilde, tau):
    """Mirror-prox dual step with the quadratic distance-generating choice."""
    return f.prox_dual_quadratic(y_block, g_tilde, tau)


def dual_update_conjugate(f, u_block, g_tilde, tau):
    """Dual step under the conjugate distance-generating choice, tracked
    through u:  u' = (tau*u + g~)/(1+tau),  y' = f'(u')."""
    if not f.is_smooth:
        raise NotSmoothError("conjugate-mode dual update needs a smooth outer function")
    u_new = (tau * u_block + g_tilde) / (1.0 + tau)
    return u_new, f.grad(u_new)


def alexr_step(state, cfg, problem):
    """One full iteration; mutates and returns `state`."""
    if problem.kernel is not None:
        return _alexr_step_kernel(state, cfg, problem)
    rng = state.rng
    idx = sample_outer_batch(rng, problem.n, cfg.S)
    G = np.zeros(problem.dim)
    blocks = state.dual.blocks
    conj = cfg.psi_mode == PSI_CONJUGATE
    for i in idx:
        orc = problem.inners[i]
        f = problem.outers[i]
        b_val = orc.sample_batch(rng, cfg.B)
        b_jac = orc.sample_batch(rng, cfg.B)
        g_now = orc.stochastic_value(state.x, b_val)
        if cfg.theta != 0.0:
            g_tilde = g_now + cfg.theta * (g_now - orc.stochastic_value(state.x_prev, b_val))
        else:
            g_tilde = g_now
        if conj:
            u_new, y_new = dual_update_conjugate(f, blocks[i], g_tilde, cfg.tau)
            blocks[i] = u_new
        else:
            y_new = dual_update_quadratic(f, blocks[i], g_tilde, cfg.tau)
            blocks[i] = y_new
        orc.accumulate_jtvp(G, state.x, b_jac, y_new, 1.0 / cfg.S)
    x_new = primal_prox_step(state.x, G, cfg.eta, problem.regularizer, problem.domain)
    state.x_prev = state.x
    state.x = x_new
    state.t += 1
    state.oracle_count += 2 * cfg.S * cfg.B
    return state


def _alexr_step_kernel(state, cfg, problem):
    """Vectorized step over the sampled blocks; same randomness stream and
    semantics as the generic path."""
    kern = problem.kernel
    rng = state.rng
    idx = sample_outer_batch(rng, problem.n, cfg.S)
    z = kern.draw(rng, len(idx), cfg.B)  # (S, 2, B): value batches, then Jacobian batches
    noise = kern.value_noise(z)
    g_now = kern.values(state.x, idx, noise)
    if cfg.theta != 0.0:
        g_tilde = g_now + cfg.theta * (g_now - kern.values(state.x_prev, idx, noise))
    else:
        g_tilde = g_now
    blocks = state.dual.blocks
    f = kern.shared_outer
    if cfg.psi_mode == PSI_CONJUGATE:
        u_new = (cfg.tau * blocks[idx] + g_tilde) / (1.0 + cfg.tau)
        blocks[idx] = u_new
        y_new = f.grad(u_new)
    else:
        y_new = f.prox_dual_quadratic(blocks[idx], g_tilde, cfg.tau)
        blocks[idx] = y_new
    G = np.zeros(problem.dim)
    kern.accumulate_grad(G, state.x, idx, z[:, 1, :], y_new, 1.0 / cfg.S)
    x_new = primal_prox_step(state.x, G, cfg.eta, problem.regularizer, problem.domain)
    state.x_prev = state.x
    state.x = x_new
    state.t += 1
    state.oracle_count += 2 * cfg.S * cfg.B
    return state


def msvr_beta(n, S, gamma):
    """Scaling factor of the msvr staleness correction."""
    if gamma >= 1.0:
        raise InvalidParameterError("msvr correction degenerates at gamma=1")
    return (n - S) / (S * (1.0 - gamma)) + 1.0 - gamma


def init_baseline_state(cfg, problem):
    x0 = problem.initial_point()
    u = None
    if cfg.variant in ("sox", "msvr"):
        # same tracker anchor as conjugate-mode init, so the theta=0
        # reduction holds from the first iteration
        u = np.array([
            _initial_u_block(f, _initial_dual_block(f)) for f in problem.outers
        ])
    return BaselineState(x=x0, x_prev=x0.copy(), u=u, t=0,
                         rng=np.random.default_rng(cfg.seed))


def _outer_slope(f, u, allow_subgradient):
    if f.is_smooth:
        return f.grad(u)
    if not allow_subgradient:
        raise NotSmoothError(f"{type(f).__name__} is not smooth; enable subgradient_fallback")
    return f.subgradient(u)


def sox_step(state, cfg, problem):
    """Moving-average inner tracking: u' = (1-gamma)*u + gamma*g(x; B) for
    sampled blocks, gradient through f'(u'), proximal primal step."""
    rng = state.rng
    idx = sample_outer_batch(rng, problem.n, cfg.S)
    G = np.zeros(problem.dim)
    for i in idx:
        orc = problem.inners[i]
        b_val = orc.sample_batch(rng, cfg.B)
        b_jac = orc.sample_batch(rng, cfg.B)
        u_new = (1.0 - cfg.gamma) * state.u[i] + cfg.gamma * orc.stochastic_value(state.x, b_val)
        state.u[i] = u_new
        y = _outer_slope(problem.outers[i], u_new, cfg.subgradient_fallback)
        orc.accumulate_jtvp(G, state.x, b_jac, y, 1.0 / cfg.S)
    _baseline_primal(state, cfg, problem, G)
    return state


def msvr_step(state, cfg, problem):
    """sox tracking plus the staleness correction
    beta * (g(x_t; B) - g(x_{t-1}; B)) with beta = (n-S)/(S*(1-gamma)) + 1-gamma.
    Non-smooth outer functions always fall back to subgradients here."""
    rng = state.rng
    beta = msvr_beta(problem.n, cfg.S, cfg.gamma)
    idx = sample_outer_batch(rng, problem.n, cfg.S)
    G = np.zeros(problem.dim)
    for i in idx:
        orc = problem.inners[i]
        b_val = orc.sample_batch(rng, cfg.B)
        b_jac = orc.sample_batch(rng, cfg.B)
        g_now = orc.stochastic_value(state.x, b_val)
        g_prev = orc.stochastic_value(state.x_prev, b_val)
        u_new = (1.0 - cfg.gamma) * state.u[i] + cfg.gamma * g_now + beta * (g_now - g_prev)
        state.u[i] = u_new
        y = _outer_slope(problem.outers[i], u_new, True)
        orc.accumulate_jtvp(G, state.x, b_jac, y, 1.0 / cfg.S)
    _baseline_primal(state, cfg, problem, G)
    return state


def bsgd_step(state, cfg, problem):
    """Plug-in biased estimator: y = f'(g(x; B)) from one batch, Jacobian
    from an independent batch, proximal primal step; no dual state."""
    rng = state.rng
    idx = sample_outer_batch(rng, problem.n, cfg.S)
    G = np.zeros(problem.dim)
    for i in idx:
        orc = problem.inners[i]
        b_val = orc.sample_batch(rng, cfg.B)
        b_jac = orc.sample_batch(rng, cfg.B)
        y = problem.outers[i].subgradient(orc.stochastic_value(state.x, b_val))
        orc.accumulate_jtvp(G, state.x, b_jac, y, 1.0 / cfg.S)
    _baseline_primal(state, cfg, problem, G)
    return state


def sgd_step(state, cfg, problem):
    """Stochastic subgradient on the flat per-sample risk: uniform sampling
    (sgd_erm) or inverse-group-frequency sampling (sgd_uw)."""
    view = problem.flat_view
    if view is None:
        raise FlatViewUnavailableError("problem exposes no flat per-sample loss view")
    rng = state.rng
    k = cfg.S * cfg.B
    if cfg.variant == "sgd_uw":
        probs = view.inverse_frequency_probs()
        idx = rng.choice(view.n_samples, size=k, replace=True, p=probs)
    else:
        idx = rng.integers(0, view.n_samples, size=k)
    _loss, grad = view.loss_and_grad(state.x, idx)
    state.x_prev = state.x
    state.x = primal_prox_step(state.x, grad, cfg.step, problem.regularizer, problem.domain)
    state.t += 1
    state.oracle_count += k
    return state


def _baseline_primal(state, cfg, problem, G):
    x_new = primal_prox_step(state.x, G, cfg.step, problem.regularizer, problem.domain)
    state.x_prev = state.x
    state.x = x_new
    state.t += 1
    state.oracle_count += 2 * cfg.S * cfg.B


_BASELINE_STEPS = {
    "bsgd": bsgd_step,
    "sox": sox_step,
    "msvr": msvr_step,
    "sgd_erm": sgd_step,
    "sgd_uw": sgd_step,
}


@dataclass
class RunRow:
    t: int
    oracle_count: int
    objective: float
    objective_avg: float
    gap: float
    dist_sq: float
    dual_norm: float
    wall_nanos: int
    extras: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    """Per-iteration metric stream plus final iterates and a config echo."""

    solver: str
    seed: int
    rows: list
    config: dict
    x_last: np.ndarray
    x_avg: np.ndarray
    dual_final: Optional[BlockDualState] = None

    @property
    def final_row(self):
        return self.rows[-1]


def _dual_snapshot_norm(dual, problem):
    if dual is None:
        return 0.0
    if dual.representation == U_SEQUENCE:
        y = np.array([f.grad(u) for f, u in zip(problem.outers, dual.blocks)])
    else:
        y = dual.blocks
    return float(np.linalg.norm(y))


def run(solver, problem, eval_every, f_star=None, x_star=None, measure="auto"):
    """Execute exactly `solver.T` iterations, recording metrics every
    `eval_every` iterations (plus iterations 0 and T).

    The `gap` column is the run's convergence measure: with
    measure='distance' it is (mu/2)*||x_t - x_star||^2; with
    measure='objective_avg' it is F(x_avg_t) - f_star; with
    measure='objective' it is F(x_t) - f_star; 'auto' picks 'distance' when
    averaging='last' and x_star is known, else 'objective_avg' when f_star
    is known, else NaN.  Deterministic for a fixed (solver, problem, seed).
    """
    if eval_every < 1:
        raise InvalidParameterError("eval_every must be at least 1")
    if measure == "auto":
        if solver.averaging == "last" and x_star is not None:
            measure = "distance"
        elif f_star is not None:
            measure = "objective_avg" if solver.averaging == "uniform" else "objective"
        else:
            measure = "none"

    is_alexr = isinstance(solver, AlexrConfig)
    if is_alexr:
        state = init_alexr_state(solver, problem)
        step_fn = alexr_step
    else:
        state = init_baseline_state(solver, problem)
        step_fn = _BASELINE_STEPS[solver.variant]

    exact_ok = problem.supports_exact
    mu = problem.regularizer.mu
    x_sum = np.zeros(problem.dim)
    rows = []
    start = time.perf_counter_ns()

    def record():
        x_avg = x_sum / state.t if state.t > 0 else state.x.copy()
        obj = evaluate_objective(problem, state.x) if exact_ok else float("nan")
        obj_avg = evaluate_objective(problem, x_avg) if exact_ok else float("nan")
        dist = float(np.sum((state.x - x_star) ** 2)) if x_star is not None else float("nan")
        if measure == "distance":
            gap = 0.5 * mu * dist
        elif measure == "objective_avg":
            gap = obj_avg - f_star
        elif measure == "objective":
            gap = obj - f_star
        else:
            gap = float("nan")
        dual = state.dual if is_alexr else None
        extras = dict(problem.aux_metrics(state.x)) if problem.aux_metrics is not None else {}
        rows.append(RunRow(
            t=state.t, oracle_count=state.oracle_count, objective=obj,
            objective_avg=obj_avg, gap=gap, dist_sq=dist,
            dual_norm=_dual_snapshot_norm(dual, problem),
            wall_nanos=time.perf_counter_ns() - start, extras=extras,
        ))

    record()
    for t in range(1, solver.T + 1):
        step_fn(state, solver, problem)
        x_sum += state.x
        if t % eval_every == 0 or t == solver.T:
            record()

    x_avg = x_sum / state.t if state.t > 0 else state.x.copy()
    return RunRecord(
        solver=solver.label, seed=solver.seed, rows=rows, config=asdict(solver),
        x_last=state.x.copy(), x_avg=x_avg,
        dual_final=state.dual.copy() if is_alexr else None,
    )
