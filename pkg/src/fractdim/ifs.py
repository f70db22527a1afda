"""Similarity iterated function systems on R^n.

Maps f_i(x) = lambda_i O_i x + t_i with orthogonal O_i.  Natural
projection with certified truncation error, pressure and the similarity
dimension, Lyapunov exponents and symbolic dimensions of measure models,
cylinder-ball enclosures, point-cloud sampling, translation families,
and Monte-Carlo transversality exponents.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import linregress

from .dimest import PointCloud
from .errors import (
    AlphabetMismatchError,
    EstimationError,
    PreconditionError,
    WordTooShortError,
)
from .multifractal import _root_of_log_moment
from .runtime import check_budget, freeze, run_chunks, substream
from .symbolic import AdaptedMetric, as_word

_ORTHO_TOL = 1e-10
_BALL_SLACK = 1e-12
_STREAM_POINTS = 11
_STREAM_PARAMS = 12
_MIN_FIT_HITS = 50


def _identity_stack(m, n):
    return np.broadcast_to(np.eye(n), (m, n, n)).copy()


@dataclass(frozen=True)
class SimilarityIFS:
    """Finitely many contracting similarities sharing an ambient space.

    The bounding ball is grown from the fixed points by the contraction
    bound radius >= max ||f_i(c) - c|| / (1 - lambda_i) and then verified
    invariant, so every f_word(ball) encloses the corresponding cylinder
    of the attractor.
    """

    ratios: np.ndarray
    translations: np.ndarray
    orthogonal: np.ndarray = None
    center: np.ndarray = field(init=False)
    radius: float = field(init=False)

    def __post_init__(self):
        lam = np.array(self.ratios, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise PreconditionError("need at least two maps")
        if not np.all((lam > 0) & (lam < 1)):
            raise PreconditionError("contraction ratios must lie in (0, 1)")
        trans = np.array(self.translations, dtype=float)
        if trans.ndim == 1:
            trans = trans[:, None]
        if trans.shape[0] != lam.size:
            raise PreconditionError("one translation per map required")
        n = trans.shape[1]
        if self.orthogonal is None:
            orth = _identity_stack(lam.size, n)
        else:
            orth = np.array(self.orthogonal, dtype=float)
            if orth.shape != (lam.size, n, n):
                raise PreconditionError("orthogonal parts must be (m, n, n)")
        gram = np.einsum("mji,mjk->mik", orth, orth)
        defect = np.max(np.abs(gram - np.eye(n)))
        if defect > _ORTHO_TOL:
            raise PreconditionError(
                f"orthogonality defect {defect:.3g} exceeds {_ORTHO_TOL:.0e}"
            )
        object.__setattr__(self, "ratios", freeze(lam))
        object.__setattr__(self, "translations", freeze(trans))
        object.__setattr__(self, "orthogonal", freeze(orth))
        fixed = self.fixed_points()
        c = fixed.mean(axis=0)
        shifts = np.linalg.norm(
            self.map_points(np.arange(lam.size), c) - c, axis=1
        )
        r = float(np.max(shifts / (1.0 - lam)))
        # invariance certificate: f_i(B(c, r)) inside B(c, r)
        if np.any(shifts + lam * r > r + _BALL_SLACK):
            raise EstimationError("bounding ball failed its invariance check")
        object.__setattr__(self, "center", freeze(c))
        object.__setattr__(self, "radius", r)

    @property
    def m(self):
        return self.ratios.size

    @property
    def ambient_dim(self):
        return self.translations.shape[1]

    @property
    def metric(self):
        return AdaptedMetric(self.ratios)

    def fixed_points(self):
        """Fixed point of each map: (I - lambda_i O_i)^-1 t_i."""
        n = self.ambient_dim
        out = np.empty((self.m, n))
        for i in range(self.m):
            mat = np.eye(n) - self.ratios[i] * self.orthogonal[i]
            out[i] = np.linalg.solve(mat, self.translations[i])
        return out

    def map_point(self, i, x):
        return self.ratios[i] * self.orthogonal[i] @ x + self.translations[i]

    def map_points(self, idx, x):
        """Apply maps idx[k] to the single point x, or rowwise to points x."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            imgs = np.einsum("mij,j->mi", self.orthogonal[idx], x)
        else:
            imgs = np.einsum("mij,mj->mi", self.orthogonal[idx], x)
        return self.ratios[idx][:, None] * imgs + self.translations[idx]

    def word_map(self, word):
        """Affine composite of f along the word: x -> A x + b."""
        word = as_word(word, self.m)
        n = self.ambient_dim
        a = np.eye(n)
        b = np.zeros(n)
        for s in word:
            b = a @ self.translations[s] + b
            a = self.ratios[s] * (a @ self.orthogonal[s])
        return a, b

    def _straight(self):
        return bool(
            np.all(np.abs(self.orthogonal - np.eye(self.ambient_dim)) == 0)
        )


def natural_projection(ifs, word, tol):
    """Point of the attractor coded by the word, with certified error.

    Returns f_word(center) and the radius psi(word) * R of the image
    ball, which contains every completion of the word.  The word must be
    deep enough that psi(word) * diam(ball) <= tol.
    """
    if not (tol > 0):
        raise PreconditionError("tolerance must be positive")
    word = as_word(word, ifs.m)
    psi = ifs.metric.weight(word)
    diam = 2.0 * ifs.radius
    if psi * diam > tol:
        gamma = ifs.metric.gamma
        required = math.ceil(math.log(tol / max(diam, tol)) / math.log(gamma))
        raise WordTooShortError(
            f"word of length {len(word)} cannot reach tolerance {tol:.3g}",
            required_length=max(required, len(word) + 1),
        )
    a, b = ifs.word_map(word)
    return a @ ifs.center + b, psi * ifs.radius


def pressure(ifs, s):
    """log sum lambda_i^s; for similarities the defining limit is exact."""
    if not (s >= 0):
        raise PreconditionError("pressure exponent must be nonnegative")
    return float(logsumexp(s * np.log(ifs.ratios)))


def similarity_dimension(ifs):
    """Unique root of the pressure: sum lambda_i^s = 1."""
    loglam = np.log(ifs.ratios)
    return float(_root_of_log_moment(np.zeros((1, loglam.size)), loglam)[0])


def _one_marginal(measure, m):
    if measure.m != m:
        raise AlphabetMismatchError(
            f"measure alphabet {measure.m} does not match the system's {m}"
        )
    return measure.marginal(1)


def lyapunov_exponent(measure, ifs):
    """chi = -sum nu_1(i) log lambda_i, exact for every measure model."""
    nu1 = _one_marginal(measure, ifs.m)
    return float(-np.dot(nu1, np.log(ifs.ratios)))


class SymbolicDimension(NamedTuple):
    value: float
    projected: float


def symbolic_dimension(measure, ifs):
    """Entropy over Lyapunov exponent, and its ambient-clipped projection."""
    chi = lyapunov_exponent(measure, ifs)
    value = measure.entropy() / chi
    return SymbolicDimension(value=value, projected=min(ifs.ambient_dim, value))


@dataclass(frozen=True)
class CylinderBalls:
    """Certified ball enclosures of all depth-n cylinder images.

    Ball k encloses the cylinder of the k-th word in lexicographic
    order; iteration yields (word, center, radius) triples.
    """

    ifs: SimilarityIFS
    depth: int
    centers: np.ndarray
    radii: np.ndarray

    def __len__(self):
        return self.centers.shape[0]

    def word(self, k):
        m = self.ifs.m
        return tuple(
            (k // m ** (self.depth - 1 - j)) % m for j in range(self.depth)
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self.word(k), self.centers[k], float(self.radii[k])


def cylinder_balls(ifs, depth):
    """Enclosures f_word(ball) for every word of the given depth."""
    if depth < 0:
        raise PreconditionError("depth must be nonnegative")
    m, n = ifs.m, ifs.ambient_dim
    check_budget(m**depth, "cylinder enumeration")
    centers = ifs.center[None, :].copy()
    scales = np.ones(1)
    straight = ifs._straight()
    mats = None if straight else np.eye(n)[None, :, :].copy()
    step_c = ifs.map_points(np.arange(m), ifs.center) - ifs.center[None, :]
    for _ in range(depth):
        k = centers.shape[0]
        new_c = np.empty((k, m, n))
        for s in range(m):
            if straight:
                new_c[:, s, :] = centers + scales[:, None] * step_c[s]
            else:
                new_c[:, s, :] = centers + np.einsum("kij,j->ki", mats, step_c[s])
        centers = new_c.reshape(k * m, n)
        scales = (scales[:, None] * ifs.ratios[None, :]).reshape(k * m)
        if not straight:
            new_m = np.empty((k, m, n, n))
            for s in range(m):
                new_m[:, s] = ifs.ratios[s] * (mats @ ifs.orthogonal[s])
            mats = new_m.reshape(k * m, n, n)
    return CylinderBalls(
        ifs=ifs,
        depth=depth,
        centers=freeze(centers),
        radii=freeze(scales * ifs.radius),
    )


def _projection_depth(ifs, tol):
    if ifs.radius == 0.0:
        return 1
    gamma = ifs.metric.gamma
    need = tol / (2.0 * ifs.radius)
    if need >= 1.0:
        return 1
    return max(1, math.ceil(math.log(need) / math.log(gamma)))


def _project_batch(ifs, words):
    """Apply f_w(center) for a batch of equal-length words (rows)."""
    count = words.shape[0]
    x = np.broadcast_to(ifs.center, (count, ifs.ambient_dim)).copy()
    straight = ifs._straight()
    for j in range(words.shape[1] - 1, -1, -1):
        sym = words[:, j]
        if straight:
            x = ifs.ratios[sym, None] * x + ifs.translations[sym]
        else:
            x = (
                ifs.ratios[sym, None] * np.einsum("kij,kj->ki", ifs.orthogonal[sym], x)
                + ifs.translations[sym]
            )
    return x


def sample_points(ifs, measure, count, tol, seed, workers=1):
    """Point cloud of projected measure samples, truncated to tolerance.

    Deterministic in the seed and identical for every worker count: each
    fixed-size chunk draws from its own substream.
    """
    if count < 1:
        raise PreconditionError("need at least one point")
    if measure.m != ifs.m:
        raise AlphabetMismatchError(
            f"measure alphabet {measure.m} does not match the system's {ifs.m}"
        )
    depth = _projection_depth(ifs, tol)

    def chunk(idx, start, stop):
        rng = substream(seed, _STREAM_POINTS, idx)
        words = measure.sample_batch(stop - start, depth, rng)
        return _project_batch(ifs, words)

    blocks = run_chunks(chunk, count, workers=workers)
    pts = np.concatenate(blocks, axis=0)
    return PointCloud(
        points=pts,
        truncation_error=ifs.metric.gamma**depth * ifs.radius,
    )


@dataclass(frozen=True)
class TranslationFamily:
    """Box of translation offsets around a base system.

    The offset for map i ranges over [low_i, high_i] coordinatewise; the
    parameter measure is normalized uniform on the box.  All perturbed
    fixed points must stay inside the declared compact region (grown
    automatically when not declared).  constraint_satisfied records
    whether max_{i != j} lambda_i + lambda_j < 1 holds.
    """

    base: SimilarityIFS
    low: np.ndarray
    high: np.ndarray
    region_low: np.ndarray = None
    region_high: np.ndarray = None
    constraint_satisfied: bool = field(init=False)

    def __post_init__(self):
        m, n = self.base.m, self.base.ambient_dim
        low = np.array(self.low, dtype=float)
        high = np.array(self.high, dtype=float)
        if low.ndim == 1:
            low = low[:, None]
        if high.ndim == 1:
            high = high[:, None]
        if low.shape != (m, n) or high.shape != (m, n):
            raise PreconditionError("offset box must be (m, n) low/high arrays")
        if np.any(low > high):
            raise PreconditionError("offset box has low > high")
        object.__setattr__(self, "low", freeze(low))
        object.__setattr__(self, "high", freeze(high))
        lam = self.base.ratios
        # enclosure of every perturbed fixed point: the base fixed point at
        # the box midpoint, inflated by ||delta|| / (1 - lambda)
        mid = 0.5 * (low + high)
        half = 0.5 * (high - low)
        fixed_mid = np.empty((m, n))
        for i in range(m):
            mat = np.eye(n) - lam[i] * self.base.orthogonal[i]
            fixed_mid[i] = np.linalg.solve(mat, self.base.translations[i] + mid[i])
        slack = np.linalg.norm(half, axis=1) / (1.0 - lam)
        lo_need = (fixed_mid - slack[:, None]).min(axis=0)
        hi_need = (fixed_mid + slack[:, None]).max(axis=0)
        if self.region_low is None or self.region_high is None:
            region_low, region_high = lo_need, hi_need
        else:
            region_low = np.array(self.region_low, dtype=float).reshape(n)
            region_high = np.array(self.region_high, dtype=float).reshape(n)
            if np.any(lo_need < region_low) or np.any(hi_need > region_high):
                raise PreconditionError(
                    "perturbed fixed points can leave the declared region"
                )
        object.__setattr__(self, "region_low", freeze(region_low))
        object.__setattr__(self, "region_high", freeze(region_high))
        pair_max = np.max(lam[:, None] + lam[None, :] - 2 * np.diag(lam))
        object.__setattr__(self, "constraint_satisfied", bool(pair_max < 1.0))

    def sample_offsets(self, count, rng):
        m, n = self.base.m, self.base.ambient_dim
        u = rng.random((count, m, n))
        return self.low[None] + u * (self.high - self.low)[None]


def _affine_decomposition(ifs, word):
    """Pi_t(word) = c + sum_i M_i delta_i, truncated with a tail bound.

    M_i collects the partial similarity composites at the positions where
    symbol i occurs; the remainder after the truncation depth is bounded
    by psi(word) / (1 - gamma) times the largest admissible offset norm.
    """
    word = as_word(word, ifs.m)
    n = ifs.ambient_dim
    mats = np.zeros((ifs.m, n, n))
    const = np.zeros(n)
    a = np.eye(n)
    for s in word:
        mats[s] += a
        const = const + a @ ifs.translations[s]
        a = ifs.ratios[s] * (a @ ifs.orthogonal[s])
    tail_scale = ifs.metric.weight(word) / (1.0 - ifs.metric.gamma)
    return const, mats, tail_scale


class TransversalityResult(NamedTuple):
    exponent: float
    k_hat: float
    radii: np.ndarray
    measures: np.ndarray
    hits: np.ndarray
    used: np.ndarray
    degenerate: bool
    constraint_satisfied: bool
    samples: int


def transversality_exponent(
    family, word_a, word_b, r_grid, param_samples, seed, workers=1
):
    """Monte-Carlo sublevel-set measures of |Pi_t(a) - Pi_t(b)| over the box.

    Fits the log-log slope over radius bins that are statistically
    resolved (>= 50 hits) and not saturated (measure < 1), and reports
    K = max measure(r) / r^n.  Words must split at the first symbol.
    """
    ifs = family.base
    word_a = as_word(word_a, ifs.m)
    word_b = as_word(word_b, ifs.m)
    if len(word_a) == 0 or len(word_b) == 0 or word_a[0] == word_b[0]:
        raise PreconditionError("words must differ in their first symbol")
    radii = np.asarray(r_grid, dtype=float)
    if radii.ndim != 1 or radii.size < 2 or not np.all(radii > 0):
        raise PreconditionError("need a positive radius grid")
    steps = radii[1:] / radii[:-1]
    if np.any(np.abs(steps - 0.5) > 1e-12):
        raise PreconditionError("radius grid must be dyadic decreasing")
    if param_samples < 1:
        raise PreconditionError("need at least one parameter sample")

    const_a, mats_a, tail_a = _affine_decomposition(ifs, word_a)
    const_b, mats_b, tail_b = _affine_decomposition(ifs, word_b)
    d_const = const_a - const_b
    d_mats = mats_a - mats_b
    sup_offset = float(
        np.max(np.maximum(np.abs(family.low), np.abs(family.high)).sum(axis=1))
    )
    sup_trans = float(np.max(np.abs(ifs.translations).sum(axis=1)))
    trunc = (tail_a + tail_b) * (sup_trans + sup_offset)
    # the truncated decomposition determines each M_i and the constant only
    # up to the tail scale, so degeneracy is decided at that resolution
    mat_tol = tail_a + tail_b + 1e-15
    const_tol = (tail_a + tail_b) * max(sup_trans, 1.0) + 1e-15
    degenerate = bool(
        np.max(np.abs(d_mats)) <= mat_tol and np.linalg.norm(d_const) <= const_tol
    )
    if trunc > 0.01 * radii[-1] and not degenerate:
        raise WordTooShortError(
            f"projection truncation {trunc:.3g} too coarse for the finest "
            f"radius {radii[-1]:.3g}; extend both words",
            required_length=max(len(word_a), len(word_b)) + 1,
        )

    def chunk(idx, start, stop):
        rng = substream(seed, _STREAM_PARAMS, idx)
        delta = family.sample_offsets(stop - start, rng)
        diff = d_const[None, :] + np.einsum("min,kmn->ki", d_mats, delta)
        dist = np.linalg.norm(diff, axis=1)
        return np.array([(dist <= r).sum() for r in radii], dtype=np.int64)

    counts = sum(run_chunks(chunk, param_samples, workers=workers))
    measures = counts / param_samples
    if degenerate:
        return TransversalityResult(
            exponent=math.nan,
            k_hat=math.inf,
            radii=freeze(radii),
            measures=freeze(measures),
            hits=freeze(counts),
            used=freeze(np.zeros(radii.size, dtype=bool)),
            degenerate=True,
            constraint_satisfied=family.constraint_satisfied,
            samples=int(param_samples),
        )
    used = (counts >= _MIN_FIT_HITS) & (measures < 1.0)
    if used.sum() < 2:
        raise EstimationError("fewer than two resolved, unsaturated radius bins")
    res = linregress(np.log(radii[used]), np.log(measures[used]))
    k_hat = float(np.max(measures[used] / radii[used] ** ifs.ambient_dim))
    return TransversalityResult(
        exponent=float(res.slope),
        k_hat=k_hat,
        radii=freeze(radii),
        measures=freeze(measures),
        hits=freeze(counts),
        used=freeze(used),
        degenerate=False,
        constraint_satisfied=family.constraint_satisfied,
        samples=int(param_samples),
    )
