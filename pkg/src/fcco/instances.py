"""Concrete problem builders.

* Hard benchmark instances: coordinate-separable problems with two-point
  zero-mean noise and analytically known minimizers, in a smooth and a
  non-smooth variant.  These are the ground-truth targets for the
  convergence-rate harness.
* Group-robust training (CVaR or chi-square penalty) over grouped datasets,
  in its composite dual form over (w, c).
* Ranking with a restricted true-positive-rate constraint (partial AUC
  surrogate), in its composite dual form over (w, s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, InvalidParameterError
from .outers import ChiSquareOuter, HingeHard, HuberHard, ScaledPositivePart
from .problem import (
    BoxDomain,
    FlatSampleView,
    InnerOracle,
    ProblemConstants,
    ProblemInstance,
    Regularizer,
)

# ---------------------------------------------------------------------------
# noise and coordinate oracles for the hard instances
# ---------------------------------------------------------------------------


class TwoPointNoise:
    """Zero-mean two-point noise: -nu w.p. 1-p, nu*(1-p)/p w.p. p, with
    p = nu^2/sigma^2.  Variance is sigma^2*(1-p)."""

    def __init__(self, nu, sigma):
        p = nu ** 2 / sigma ** 2
        if not 0.0 < p < 1.0:
            raise InvalidParameterError(f"p = nu^2/sigma^2 = {p} must lie in (0, 1)")
        self.nu = float(nu)
        self.sigma = float(sigma)
        self.p = p
        self.low = -float(nu)
        self.high = float(nu) * (1.0 - p) / p

    def transform(self, uniforms):
        return np.where(uniforms < self.p, self.high, self.low)

    def draw(self, rng, size):
        return self.transform(rng.random(size))

    @property
    def variance(self):
        return self.sigma ** 2 * (1.0 - self.p)


class GaussianNoise:
    """Centered Gaussian noise, used by generic affine test oracles."""

    def __init__(self, sigma):
        self.sigma = float(sigma)
        self.variance = self.sigma ** 2

    def draw(self, rng, size):
        return self.sigma * rng.standard_normal(size)


def sample_hard_noise(rng, nu, sigma):
    """One draw of the hard-instance noise."""
    return float(TwoPointNoise(nu, sigma).draw(rng, 1)[0])


class CoordinateNoiseOracle(InnerOracle):
    """g_i(x; z) = x[i] + z with additive zero-mean noise; the Jacobian is
    the i-th unit vector, independent of x and batch."""

    is_affine = True
    is_smooth = True
    supports_exact = True

    def __init__(self, index, dim, noise):
        self.index = int(index)
        self.dim = int(dim)
        self.noise = noise

    def exact_value(self, x):
        return float(x[self.index])

    def stochastic_value(self, x, batch):
        return float(x[self.index]) + float(batch.mean())

    def stochastic_jtvp(self, x, batch, y):
        out = np.zeros(self.dim)
        out[self.index] = y
        return out

    def accumulate_jtvp(self, out, x, batch, y, scale):
        out[self.index] += scale * y

    def sample_batch(self, rng, size):
        return self.noise.draw(rng, size)


class AffineScalarOracle(InnerOracle):
    """g(x; z) = a.x + b + z; general affine test oracle."""

    is_affine = True
    is_smooth = True
    supports_exact = True

    def __init__(self, a, b=0.0, noise=None):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.noise = noise

    def exact_value(self, x):
        return float(self.a @ x) + self.b

    def stochastic_value(self, x, batch):
        base = self.exact_value(x)
        return base if batch.size == 0 else base + float(batch.mean())

    def stochastic_jtvp(self, x, batch, y):
        return y * self.a

    def accumulate_jtvp(self, out, x, batch, y, scale):
        out += (scale * y) * self.a

    def sample_batch(self, rng, size):
        if self.noise is None:
            return np.empty(0)
        return self.noise.draw(rng, size)


class CoordinateNoiseKernel:
    """Vectorized sampled-block backend for problems whose inners are the n
    coordinate oracles 0..n-1 with one shared noise law and one shared outer
    function.  Consumes the same randomness stream as the per-block path."""

    def __init__(self, noise, shared_outer):
        self.noise = noise
        self.shared_outer = shared_outer

    def draw(self, rng, n_blocks, batch_size):
        return self.noise.transform(rng.random((n_blocks, 2, batch_size)))

    def value_noise(self, z):
        """Per-block noise means of the value batches z[:, 0, :]."""
        return z[:, 0, :].mean(axis=1)

    def values(self, x, idx, value_noise):
        return x[idx] + value_noise

    def accumulate_grad(self, out, x, idx, z_jac, y_new, scale):
        out[idx] += scale * y_new


# ---------------------------------------------------------------------------
# hard instances with known optima
# ---------------------------------------------------------------------------


@dataclass
class HardInstance:
    """A separable benchmark problem carrying its known minimizer."""

    problem: ProblemInstance
    x_star: np.ndarray
    f_star: float
    nu: float
    sigma: float
    p: float
    mode: str
    mu: float
    beta: Optional[float] = None
    alpha_reg: Optional[float] = None


def build_hard_smooth(n, nu, sigma):
    """Smooth variant: three-branch outer f with f'(u) = clip(u+nu, nu-1, nu+1),
    noisy coordinate inners, r(x) = ||x||^2/(4n), domain [-1, 1]^n.  The
    minimizer is -2*nu/3 per coordinate with objective value -nu^2/3."""
    if not 0.0 < nu < 1.0:
        raise InvalidParameterError(f"nu must lie in (0, 1), got {nu}")
    noise = TwoPointNoise(nu, sigma)
    outer = HuberHard(nu)
    inners = [CoordinateNoiseOracle(i, n, noise) for i in range(n)]
    reg = Regularizer(l2_coeff=1.0 / (2.0 * n))
    domain = BoxDomain.symmetric(1.0, n)
    constants = ProblemConstants(
        c_f=1.0 + nu, c_g=1.0, l_f=1.0, l_g=0.0,
        sigma0_sq=noise.variance, sigma1_sq=0.0,
        delta_sq=(1.0 + nu) ** 2,
    )
    problem = ProblemInstance(
        n=n, dim=n, outers=[outer] * n, inners=inners, regularizer=reg,
        domain=domain, constants=constants,
        kernel=CoordinateNoiseKernel(noise, outer), name="hard_smooth",
    )
    x_star = np.full(n, -2.0 * nu / 3.0)
    return HardInstance(
        problem=problem, x_star=x_star, f_star=-nu ** 2 / 3.0,
        nu=nu, sigma=sigma, p=noise.p, mode="smooth", mu=reg.mu,
    )


def build_hard_nonsmooth(n, nu, beta, alpha_reg, sigma):
    """Non-smooth variant: f(u) = beta*max(u, -nu), same noisy inners,
    r(x) = alpha_reg/(2n) * ||x||^2, domain [-2nu, 2nu]^n.  The per-coordinate
    minimizer is -beta/alpha_reg when alpha_reg > beta/nu, else -nu."""
    if not 0.0 < nu < 1.0:
        raise InvalidParameterError(f"nu must lie in (0, 1), got {nu}")
    if alpha_reg < 0:
        raise InvalidParameterError("alpha_reg must be nonnegative")
    noise = TwoPointNoise(nu, sigma)
    outer = HingeHard(beta, nu)
    inners = [CoordinateNoiseOracle(i, n, noise) for i in range(n)]
    reg = Regularizer(l2_coeff=alpha_reg / n)
    domain = BoxDomain.symmetric(2.0 * nu, n)
    constants = ProblemConstants(
        c_f=beta, c_g=1.0, l_g=0.0,
        sigma0_sq=noise.variance, sigma1_sq=0.0, delta_sq=beta ** 2,
    )
    problem = ProblemInstance(
        n=n, dim=n, outers=[outer] * n, inners=inners, regularizer=reg,
        domain=domain, constants=constants,
        kernel=CoordinateNoiseKernel(noise, outer), name="hard_nonsmooth",
    )
    if alpha_reg > beta / nu:
        coord = -beta / alpha_reg
    else:
        coord = -nu
    x_star = np.full(n, coord)
    per_component = beta * max(coord, -nu) + 0.5 * alpha_reg * coord ** 2
    return HardInstance(
        problem=problem, x_star=x_star, f_star=per_component,
        nu=nu, sigma=sigma, p=noise.p, mode="nonsmooth", mu=reg.mu,
        beta=beta, alpha_reg=alpha_reg,
    )


# ---------------------------------------------------------------------------
# logistic loss and group-robust training
# ---------------------------------------------------------------------------


def logistic_loss(w, a, b):
    """log(1 + exp(-b * <w, a>)) and its gradient, overflow-safe."""
    z = b * float(a @ w)
    loss = float(np.logaddexp(0.0, -z))
    # sigmoid(-z) via tanh avoids overflow at extreme margins
    grad = (-b * 0.5 * (1.0 - math.tanh(0.5 * z))) * a
    return loss, grad


def _logistic_risk(w, feats, labels):
    """Mean logistic loss over rows; vectorized."""
    z = labels * (feats @ w)
    return float(np.add.reduce(np.logaddexp(0.0, -z))) / z.size


def _logistic_risk_grad(w, feats, labels):
    z = labels * (feats @ w)
    s = labels * (0.5 * np.tanh(0.5 * z) - 0.5)
    loss = float(np.add.reduce(np.logaddexp(0.0, -z))) / z.size
    return loss, (s @ feats) / z.size


def _logistic_grad_w(w, feats, labels):
    """Gradient only; skips the loss computation on the solver hot path."""
    z = labels * (feats @ w)
    s = labels * (0.5 * np.tanh(0.5 * z) - 0.5)
    return (s @ feats) / z.size


class GroupRiskOracle(InnerOracle):
    """g_i(w, c) = (R_i(w) - c) / lam over one group's samples, where R_i is
    the group's mean logistic loss.  Exact evaluation is the full-group pass;
    stochastic batches sample within the group with replacement."""

    is_affine = False
    is_smooth = True
    supports_exact = True

    def __init__(self, feats, labels, lam):
        self.feats = np.asarray(feats, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.lam = float(lam)
        self.size = len(self.labels)

    def _split(self, x):
        return x[:-1], float(x[-1])

    def exact_value(self, x):
        w, c = self._split(x)
        return (_logistic_risk(w, self.feats, self.labels) - c) / self.lam

    def stochastic_value(self, x, batch):
        w, c = self._split(x)
        return (_logistic_risk(w, self.feats[batch], self.labels[batch]) - c) / self.lam

    def stochastic_jtvp(self, x, batch, y):
        w, _c = self._split(x)
        grad_w = _logistic_grad_w(w, self.feats[batch], self.labels[batch])
        out = np.empty(len(x))
        out[:-1] = (y / self.lam) * grad_w
        out[-1] = -y / self.lam
        return out

    def accumulate_jtvp(self, out, x, batch, y, scale):
        grad_w = _logistic_grad_w(x[:-1], self.feats[batch], self.labels[batch])
        coeff = scale * y / self.lam
        out[:-1] += coeff * grad_w
        out[-1] -= coeff

    def sample_batch(self, rng, size):
        return rng.integers(0, self.size, size=size)

    def full_batch(self):
        return np.arange(self.size)


class GdroFlatView(FlatSampleView):
    """Per-sample logistic loss over the pooled dataset; gradient w.r.t.
    (w, c) with a zero c-component."""

    def __init__(self, feats, labels, group_of):
        self.feats = np.asarray(feats, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.group_of = np.asarray(group_of)
        self.n_samples = len(self.labels)

    def loss_and_grad(self, x, idx):
        w = x[:-1]
        loss, grad_w = _logistic_risk_grad(w, self.feats[idx], self.labels[idx])
        grad = np.zeros(len(x))
        grad[:-1] = grad_w
        return loss, grad


def build_gdro(data, divergence="cvar", alpha=None, lam=1.0, weight_decay=0.0,
               c_bounds=None, risk_bound=4.0, metric_alpha=None):
    """Group-robust problem in composite dual form over x = (w, c).

    divergence='cvar' uses the capped hinge lam*(.)_+*(1/alpha) with inner
    (R_i(w) - c)/lam (any lam yields the same objective; lam=1 gives the
    plain hinge form).  divergence='chi2' uses the quadratic penalty
    transform with parameter lam and a dual cap derived from `risk_bound`
    and the c-interval.  The '+c' term rides on the regularizer's linear
    part; weight decay applies to w only.
    """
    if data.n_groups < 1:
        raise DataError("dataset has no groups")
    if lam <= 0:
        raise InvalidParameterError("lam must be positive")
    d = data.features.shape[1]
    dim = d + 1
    if divergence == "cvar":
        if alpha is None or not 0.0 < alpha <= 1.0:
            raise InvalidParameterError(f"cvar needs alpha in (0, 1], got {alpha}")
        outer = ScaledPositivePart(alpha / lam)
        lo, hi = (0.0, risk_bound) if c_bounds is None else c_bounds
    elif divergence == "chi2":
        lo, hi = (-lam, risk_bound) if c_bounds is None else c_bounds
        cap = max(risk_bound - lo, risk_bound + hi) / 2.0
        outer = ChiSquareOuter(lam, cap)
    else:
        raise InvalidParameterError(f"unknown divergence {divergence!r}")

    inners = []
    for g in range(data.n_groups):
        rows = data.group_index[g]
        if len(rows) == 0:
            raise DataError(f"group {g} is empty")
        inners.append(GroupRiskOracle(data.features[rows], data.labels[rows], lam))

    l2 = np.full(dim, weight_decay)
    l2[-1] = 0.0
    linear = np.zeros(dim)
    linear[-1] = 1.0
    reg = Regularizer(l2_coeff=l2, linear=linear, mu=0.0)
    lower = np.full(dim, -math.inf)
    upper = np.full(dim, math.inf)
    lower[-1], upper[-1] = lo, hi
    domain = BoxDomain(lower, upper, dim)
    view = GdroFlatView(data.features, data.labels, data.group_of)

    m_alpha = metric_alpha if metric_alpha is not None else (alpha if divergence == "cvar" else 0.5)

    def aux_metrics(x):
        w = x[:-1]
        risks = [
            _logistic_risk(w, data.features[data.group_index[g]], data.labels[data.group_index[g]])
            for g in range(data.n_groups)
        ]
        k = max(1, math.ceil(m_alpha * data.n_groups))
        worst = float(np.mean(np.sort(risks)[-k:]))
        return {"worst_group_risk": worst}

    return ProblemInstance(
        n=data.n_groups, dim=dim, outers=[outer] * data.n_groups, inners=inners,
        regularizer=reg, domain=domain,
        constants=ProblemConstants(c_f=outer.lipschitz),
        flat_view=view, aux_metrics=aux_metrics, name=f"gdro_{divergence}",
    )


def cvar_objective(data, alpha, weight_decay, w, c):
    """Direct evaluation of the capped-hinge dual objective at (w, c)."""
    risks = np.array([
        _logistic_risk(w, data.features[rows], data.labels[rows])
        for rows in data.group_index
    ])
    hinge = np.maximum(risks - c, 0.0).mean() / alpha
    return hinge + c + 0.5 * weight_decay * float(w @ w)


def solve_cvar_reference(data, alpha, weight_decay, iters=20000, step_scale=0.5):
    """Independent full-batch reference for the capped-hinge objective.

    Eliminates c exactly by sorting group risks (the inner minimum over c is
    attained at a group-risk quantile), then runs a deterministic subgradient
    method in w with a decaying step, tracking the best iterate.  Returns
    (w, c, objective)."""
    d = data.features.shape[1]
    n = data.n_groups
    k = alpha * n
    w = np.zeros(d)
    best = (math.inf, w.copy(), 0.0)
    group_feats = [data.features[rows] for rows in data.group_index]
    group_labels = [data.labels[rows] for rows in data.group_index]

    def risks_and_grads(w):
        risks = np.empty(n)
        grads = np.empty((n, d))
        for g in range(n):
            risks[g], grads[g] = _logistic_risk_grad(w, group_feats[g], group_labels[g])
        return risks, grads

    for t in range(iters):
        risks, grads = risks_and_grads(w)
        order = np.argsort(-risks)
        # capped-simplex weights: fill 1/(alpha*n) on the worst groups
        q = np.zeros(n)
        remaining = 1.0
        capacity = 1.0 / k
        for g in order:
            take = min(capacity, remaining)
            q[g] = take
            remaining -= take
            if remaining <= 0:
                break
        obj = float(q @ risks) + 0.5 * weight_decay * float(w @ w)
        if obj < best[0]:
            c_star = float(np.sort(risks)[max(0, n - math.ceil(k))])
            best = (obj, w.copy(), c_star)
        sub = grads.T @ q + weight_decay * w
        w = w - step_scale / math.sqrt(t + 1.0) * sub
    return best[1], best[2], best[0]


# ---------------------------------------------------------------------------
# partial-AUC surrogate in dual form
# ---------------------------------------------------------------------------


def _surrogate(kind):
    if kind == "squared_hinge":
        def val(z):
            return np.maximum(1.0 + z, 0.0) ** 2

        def deriv(z):
            return 2.0 * np.maximum(1.0 + z, 0.0)
    elif kind == "logistic":
        def val(z):
            return np.logaddexp(0.0, z)

        def deriv(z):
            return 0.5 * (1.0 + np.tanh(0.5 * z))
    else:
        raise InvalidParameterError(f"unknown surrogate {kind!r}")
    return val, deriv


class PaucInnerOracle(InnerOracle):
    """g_i(w, s) = mean_j ell(<w, a_j - a_i>) - s over negatives a_j for one
    positive a_i; batches sample negatives with replacement."""

    is_affine = False
    is_smooth = True
    supports_exact = True

    def __init__(self, pos_row, negatives, surrogate):
        self.pos = np.asarray(pos_row, dtype=float)
        self.neg = np.asarray(negatives, dtype=float)
        self.val, self.deriv = _surrogate(surrogate)
        self.size = len(self.neg)

    def _scores(self, w, rows):
        return (self.neg[rows] - self.pos) @ w

    def exact_value(self, x):
        w, s = x[:-1], float(x[-1])
        return float(np.mean(self.val((self.neg - self.pos) @ w))) - s

    def stochastic_value(self, x, batch):
        w, s = x[:-1], float(x[-1])
        return float(np.mean(self.val(self._scores(w, batch)))) - s

    def stochastic_jtvp(self, x, batch, y):
        w = x[:-1]
        diffs = self.neg[batch] - self.pos
        slopes = self.deriv(diffs @ w)
        out = np.empty(len(x))
        out[:-1] = y * (diffs.T @ slopes) / len(batch)
        out[-1] = -y
        return out

    def sample_batch(self, rng, size):
        return rng.integers(0, self.size, size=size)

    def full_batch(self):
        return np.arange(self.size)


def build_pauc(data, surrogate="squared_hinge", weight_decay=0.0):
    """Ranking problem over x = (w, s): one component per positive sample
    with outer hinge scaled by 1/(1-alpha), plus the '+s' linear term."""
    alpha = data.alpha
    n_pos = len(data.positives)
    if n_pos * (1.0 - alpha) < 1.0:
        raise InvalidParameterError("degenerate: n_pos*(1-alpha) must be at least 1")
    d = data.positives.shape[1]
    dim = d + 1
    outer = ScaledPositivePart(1.0 - alpha)
    inners = [PaucInnerOracle(data.positives[i], data.negatives, surrogate)
              for i in range(n_pos)]
    l2 = np.full(dim, weight_decay)
    l2[-1] = 0.0
    linear = np.zeros(dim)
    linear[-1] = 1.0
    reg = Regularizer(l2_coeff=l2, linear=linear, mu=0.0)
    return ProblemInstance(
        n=n_pos, dim=dim, outers=[outer] * n_pos, inners=inners,
        regularizer=reg, domain=BoxDomain.unbounded(dim),
        constants=ProblemConstants(c_f=outer.lipschitz),
        name="pauc",
    )


def build_cvar_scalar(risks, alpha):
    """Tiny diagnostic problem: minimize (1/(alpha*n)) sum_i (r_i - c)_+ + c
    over the scalar c, with fixed component levels r_i.  Used to study the
    dual-table radius and sparsity at the optimum."""
    risks = np.asarray(risks, dtype=float)
    n = len(risks)
    outer = ScaledPositivePart(alpha)
    inners = [AffineScalarOracle(a=[-1.0], b=float(r)) for r in risks]
    reg = Regularizer(l2_coeff=0.0, linear=np.array([1.0]))
    lo, hi = float(risks.min()) - 1.0, float(risks.max()) + 1.0
    problem = ProblemInstance(
        n=n, dim=1, outers=[outer] * n, inners=inners, regularizer=reg,
        domain=BoxDomain(lo, hi, 1),
        constants=ProblemConstants(c_f=outer.lipschitz), name="cvar_scalar",
    )
    # exact minimizer over c: derivative 1 - #{r_i > c}/(alpha*n) crosses zero
    # where exactly alpha*n levels exceed c
    order = np.sort(risks)
    k = int(round(alpha * n))
    c_star = 0.5 * (order[n - k - 1] + order[n - k]) if 0 < k < n else float(order[0])
    return problem, c_star
