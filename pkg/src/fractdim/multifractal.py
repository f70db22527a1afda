"""Structure function T(q), Legendre spectra, and optimal measures.

A weighted self-similar system (p_i, lambda_i) carries a one-parameter
family of Bernoulli measures interpolating between the extremal local
dimensions.  This module solves the defining moment equation

    sum_i p_i^q lambda_i^T = 1

in log-space, differentiates it analytically, evaluates the Legendre
transform of T, and assembles spectrum curves with exact endpoint
handling via uniform measures on the extremal symbol sets.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import EstimationError, PreconditionError
from .measures import BernoulliMeasure, _as_prob_vector
from .runtime import check_budget, freeze

# residual certified for every returned root of the moment equation
_RESIDUAL_TOL = 1e-13
# symbols within this tolerance of the extremal exponent join the endpoint set
_EXPONENT_ATOL = 1e-12
# alpha values this close to the range boundary take the endpoint branch
_EDGE_ATOL = 1e-10
# per-coordinate tolerance for the degenerate (linear T) detection
_DEGENERATE_ATOL = 1e-12
# tail extension of the q-grid stops once alpha moves less than this
_ALPHA_TAIL_TOL = 1e-9
_Q_CAP = 1e8


def _as_ratio_vector(obj):
    lam = np.array(obj, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise PreconditionError("need at least two contraction ratios")
    if not np.all((lam > 0) & (lam < 1)):
        raise PreconditionError("contraction ratios must lie strictly in (0, 1)")
    return lam


def _root_of_log_moment(z0, loglam):
    """Roots in T of logsumexp(z0 + T*loglam, axis=1) = 0, one per row.

    The map is strictly decreasing in T because every loglam entry is
    negative, so a geometrically grown bracket plus bisection is certified;
    two Newton polish steps push the residual to rounding level.
    """
    n = z0.shape[0]

    def value(t):
        z = z0 + t[:, None] * loglam[None, :]
        top = z.max(axis=1)
        return top + np.log(np.exp(z - top[:, None]).sum(axis=1))

    lo = np.full(n, -1.0)
    hi = np.full(n, 1.0)
    for _ in range(90):
        bad_lo = value(lo) <= 0.0
        bad_hi = value(hi) >= 0.0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo[bad_lo] *= 2.0
        hi[bad_hi] *= 2.0
    else:
        raise EstimationError("failed to bracket the moment-equation root")
    # a loose bracket suffices: the map is smooth and strictly decreasing,
    # so three Newton steps from here land at rounding level, and the
    # residual certificate below rejects any escape
    for _ in range(400):
        if np.max((hi - lo) / (1.0 + np.abs(hi))) <= 1e-6:
            break
        mid = 0.5 * (lo + hi)
        pos = value(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    root = 0.5 * (lo + hi)
    for _ in range(3):
        z = z0 + root[:, None] * loglam[None, :]
        resid = logsumexp(z, axis=1)
        slope = np.sum(softmax(z, axis=1) * loglam[None, :], axis=1)
        root = root - resid / slope
    final = value(root)
    if np.max(np.abs(final) / (1.0 + np.abs(root))) > _RESIDUAL_TOL:
        raise EstimationError("moment-equation residual did not certify")
    return root


def _similarity_dimension(loglam):
    z0 = np.zeros((1, loglam.size))
    return float(_root_of_log_moment(z0, loglam)[0])


@dataclass(frozen=True)
class SpectrumProblem:
    """Probability weights and contraction ratios on a common alphabet.

    similarity_dim is the root of sum lambda_i^s = 1; the problem is
    degenerate when p_i = lambda_i^similarity_dim for every symbol, in
    which case T is linear and the spectrum collapses to one point.
    """

    p: np.ndarray
    ratios: np.ndarray
    similarity_dim: float = field(init=False)
    degenerate: bool = field(init=False)

    def __post_init__(self):
        p = _as_prob_vector(self.p)
        lam = _as_ratio_vector(self.ratios)
        if p.size != lam.size:
            raise PreconditionError("weights and ratios must share one alphabet")
        s0 = _similarity_dimension(np.log(lam))
        object.__setattr__(self, "p", freeze(p))
        object.__setattr__(self, "ratios", freeze(lam))
        object.__setattr__(self, "similarity_dim", s0)
        degenerate = bool(np.all(np.abs(p - lam**s0) <= _DEGENERATE_ATOL))
        object.__setattr__(self, "degenerate", degenerate)

    @property
    def m(self):
        return self.p.size


def _supported_logs(problem, q_min):
    """Log weights/ratios, restricted to the positive-p symbols for q > 0."""
    pos = problem.p > 0
    if np.all(pos):
        return np.log(problem.p), np.log(problem.ratios)
    if q_min <= 0:
        raise PreconditionError(
            "zero weights admit no moment equation at q <= 0"
        )
    return np.log(problem.p[pos]), np.log(problem.ratios[pos])


def solve_T_many(problem, qs):
    """Vectorized T(q) over an array of exponents q."""
    qs = np.asarray(qs, dtype=float)
    if qs.ndim != 1 or qs.size == 0:
        raise PreconditionError("q grid must be a nonempty 1-d array")
    if not np.all(np.isfinite(qs)):
        raise PreconditionError("q grid must be finite")
    logp, loglam = _supported_logs(problem, float(np.min(qs)))
    check_budget(qs.size * logp.size, "structure-function grid")
    z0 = qs[:, None] * logp[None, :]
    return _root_of_log_moment(z0, loglam)


def solve_T(problem, q):
    """The unique real T with sum_i p_i^q lambda_i^T = 1."""
    return float(solve_T_many(problem, np.array([float(q)]))[0])


def _alpha_at(logp, loglam, q, t):
    z = q * logp + t * loglam
    w = softmax(z)
    return float(np.dot(w, logp) / np.dot(w, loglam))


def T_derivative(problem, q):
    """Analytic T'(q) at the solved root: weighted log-ratio quotient."""
    q = float(q)
    t = solve_T(problem, q)
    logp, loglam = _supported_logs(problem, q)
    return -_alpha_at(logp, loglam, q, t)


def alpha_range(problem):
    """Extremal local dimensions [min, max] of log p_i / log lambda_i."""
    if np.any(problem.p <= 0):
        raise PreconditionError("alpha range needs strictly positive weights")
    exponents = np.log(problem.p) / np.log(problem.ratios)
    return float(np.min(exponents)), float(np.max(exponents))


def _endpoint_set(problem, alpha_end):
    exponents = np.log(problem.p) / np.log(problem.ratios)
    tol = _EXPONENT_ATOL * (1.0 + abs(alpha_end))
    return np.abs(exponents - alpha_end) <= tol


def _endpoint_value(problem, alpha_end):
    """Dimension of the uniform Bernoulli measure on the extremal symbols."""
    mask = _endpoint_set(problem, alpha_end)
    k = int(mask.sum())
    chi = -float(np.mean(np.log(problem.ratios[mask])))
    return math.log(k) / chi


def _slope_curvature(logp, loglam, q, t):
    """alpha(q) and alpha'(q) = -T''(q) from the softmax moment weights."""
    z = q * logp + t * loglam
    w = softmax(z)
    su = float(np.dot(w, logp))
    sv = float(np.dot(w, loglam))
    alpha = su / sv
    uu = float(np.dot(w, logp * logp)) - su * su
    uv = float(np.dot(w, logp * loglam)) - su * sv
    vv = float(np.dot(w, loglam * loglam)) - sv * sv
    tpp = -(uu - 2.0 * uv * alpha + vv * alpha * alpha) / sv
    return alpha, -tpp


def _solve_q(problem, alpha):
    """Exponent q with alpha(q) = alpha, or None when outside all brackets.

    alpha(q) = -T'(q) is non-increasing, so a geometrically grown bracket
    is certified for interior alpha; inside it, Newton steps with the
    analytic curvature converge quadratically and fall back to bisection
    whenever they leave the bracket.
    """
    logp, loglam = _supported_logs(problem, -1.0)

    def alpha_of(q):
        t = solve_T(problem, q)
        return _alpha_at(logp, loglam, q, t)

    lo, hi = -1.0, 1.0
    for _ in range(60):
        if alpha_of(lo) > alpha:
            break
        lo *= 2.0
    else:
        return None
    for _ in range(60):
        if alpha_of(hi) < alpha:
            break
        hi *= 2.0
    else:
        return None
    q = 0.5 * (lo + hi)
    for _ in range(200):
        t = solve_T(problem, q)
        a, ap = _slope_curvature(logp, loglam, q, t)
        if a > alpha:
            lo = q
        else:
            hi = q
        if hi - lo <= 1e-14 * (1.0 + abs(hi)):
            break
        step = (a - alpha) / ap if ap < 0 else math.nan
        nxt = q - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        q = nxt
    return 0.5 * (lo + hi)


def _classify_alpha(problem, alpha):
    alpha = float(alpha)
    if problem.degenerate:
        s0 = problem.similarity_dim
        if abs(alpha - s0) > 1e-9 * (1.0 + s0):
            raise PreconditionError("alpha outside the degenerate point spectrum")
        return ("degenerate", None)
    a_min, a_max = alpha_range(problem)
    span = a_max - a_min
    if alpha < a_min - _EDGE_ATOL * (1 + span) or alpha > a_max + _EDGE_ATOL * (1 + span):
        raise PreconditionError("alpha outside the attainable range")
    if alpha <= a_min + _EDGE_ATOL * (1 + span):
        return ("endpoint", a_min)
    if alpha >= a_max - _EDGE_ATOL * (1 + span):
        return ("endpoint", a_max)
    q = _solve_q(problem, alpha)
    if q is None:
        # bracket growth exhausted: alpha is numerically at an endpoint
        return ("endpoint", a_min if alpha - a_min < a_max - alpha else a_max)
    return ("interior", q)


def legendre(problem, alpha):
    """T*(alpha) = inf_q (alpha q + T(q)) on [alpha_min, alpha_max].

    Interior alpha is located through the monotone derivative; endpoint
    alpha takes the dimension of the uniform measure on the extremal
    symbol set, which realizes the limit without large-q overflow.
    """
    kind, datum = _classify_alpha(problem, alpha)
    if kind == "degenerate":
        return problem.similarity_dim
    if kind == "endpoint":
        return _endpoint_value(problem, datum)
    q = datum
    return q * float(alpha) + solve_T(problem, q)


def optimal_measure(problem, alpha):
    """Bernoulli measure whose symbolic dimension attains T*(alpha).

    Interior alpha yields weights p_i^q lambda_i^T(q), which sum to one by
    the moment equation; endpoint alpha yields the uniform measure on the
    extremal symbol set with zeros elsewhere.
    """
    kind, datum = _classify_alpha(problem, alpha)
    if kind == "degenerate":
        return BernoulliMeasure(problem.p)
    if kind == "endpoint":
        mask = _endpoint_set(problem, datum)
        w = mask / mask.sum()
        return BernoulliMeasure(w)
    q = datum
    t = solve_T(problem, q)
    logw = q * np.log(problem.p) + t * np.log(problem.ratios)
    w = np.exp(logw)
    total = w.sum()
    if abs(total - 1.0) > 1e-12:
        raise EstimationError("optimal weights failed the moment identity")
    return BernoulliMeasure(w / total)


@dataclass(frozen=True)
class SpectrumCurve:
    """Sampled (q, T, alpha, f) tuples, sorted by q, endpoints appended.

    Endpoint rows carry q = +-inf and T = nan; they hold the limit values
    (alpha_max at q = -inf first, alpha_min at q = +inf last).
    """

    q: np.ndarray
    T: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    endpoint: np.ndarray
    alpha_min: float
    alpha_max: float
    alpha_peak: float
    similarity_dim: float
    degenerate: bool

    def coverage_interval(self, ambient_dim):
        """Alpha interval where the level-set formula is guaranteed.

        On the line the whole range is covered; in higher ambient
        dimension only the decreasing branch alpha >= alpha(0) is.
        """
        dim = int(ambient_dim)
        if dim != ambient_dim or dim < 1:
            raise PreconditionError("ambient dimension must be a positive integer")
        if dim == 1:
            return (self.alpha_min, self.alpha_max)
        return (self.alpha_peak, self.alpha_max)


def _curve_checks(qs, ts, alphas, fs, s0):
    if not np.all(np.diff(ts) < 0):
        raise EstimationError("structure function lost strict monotonicity")
    if not np.all(np.diff(alphas) <= 1e-12):
        raise EstimationError("alpha(q) lost monotonicity")
    if np.min(fs) < -1e-9 or np.max(fs) > s0 + 1e-9:
        raise EstimationError("spectrum values escaped [0, similarity_dim]")


def spectrum_curve(problem, q_grid=None):
    """Assemble the spectrum over a q-grid, extended until alpha settles.

    The grid is extended by doubling q on both sides until consecutive
    alpha values move less than 1e-9, so truncation of the q-range is
    checked rather than assumed.  A degenerate problem returns the
    single-point curve with the flag set.
    """
    s0 = problem.similarity_dim
    if problem.degenerate:
        one = freeze(np.array([s0]))
        return SpectrumCurve(
            q=freeze(np.array([0.0])),
            T=one,
            alpha=one,
            f=one,
            endpoint=freeze(np.array([False])),
            alpha_min=s0,
            alpha_max=s0,
            alpha_peak=s0,
            similarity_dim=s0,
            degenerate=True,
        )
    if q_grid is None:
        q_grid = np.linspace(-20.0, 20.0, 801)
    qs = np.unique(np.asarray(q_grid, dtype=float))
    if qs.size < 2:
        raise PreconditionError("need at least two grid points")
    logp, loglam = _supported_logs(problem, float(qs[0]) if qs[0] < 0 else -1.0)
    ts = solve_T_many(problem, qs)
    alphas = np.array(
        [_alpha_at(logp, loglam, q, t) for q, t in zip(qs, ts)]
    )
    rows = list(zip(qs.tolist(), ts.tolist(), alphas.tolist()))
    for sign in (1.0, -1.0):
        q = sign * max(1.0, abs(qs[-1 if sign > 0 else 0]))
        prev = alphas[-1] if sign > 0 else alphas[0]
        while abs(q) <= _Q_CAP:
            q = 2.0 * q
            t = solve_T(problem, q)
            a = _alpha_at(logp, loglam, q, t)
            rows.append((q, t, a))
            if abs(a - prev) < _ALPHA_TAIL_TOL:
                break
            prev = a
    rows.sort(key=lambda r: r[0])
    qs = np.array([r[0] for r in rows])
    ts = np.array([r[1] for r in rows])
    alphas = np.array([r[2] for r in rows])
    fs = qs * alphas + ts
    _curve_checks(qs, ts, alphas, fs, s0)
    fs = np.maximum(fs, 0.0)
    a_min, a_max = alpha_range(problem)
    alpha_peak = _alpha_at(logp, loglam, 0.0, solve_T(problem, 0.0))
    qs = np.concatenate([[-math.inf], qs, [math.inf]])
    ts = np.concatenate([[math.nan], ts, [math.nan]])
    alphas = np.concatenate([[a_max], alphas, [a_min]])
    fs = np.concatenate(
        [[_endpoint_value(problem, a_max)], fs, [_endpoint_value(problem, a_min)]]
    )
    endpoint = np.zeros(qs.size, dtype=bool)
    endpoint[0] = endpoint[-1] = True
    return SpectrumCurve(
        q=freeze(qs),
        T=freeze(ts),
        alpha=freeze(alphas),
        f=freeze(fs),
        endpoint=freeze(endpoint),
        alpha_min=a_min,
        alpha_max=a_max,
        alpha_peak=alpha_peak,
        similarity_dim=s0,
        degenerate=False,
    )
