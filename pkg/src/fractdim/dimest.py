"""Empirical dimension estimators over point clouds.

Local dimension, correlation dimension, s-energy with a divergence
detector, box counting, the coarse multifractal spectrum, diametric
regularity, and relative-dimension probes.  All estimators are
deterministic in (cloud, schedule, seed) and reproducible for any
worker count: randomness flows through per-stratum substreams and
reductions are associative sums combined in stratum order.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .errors import EstimationError, PreconditionError
from .measures import relative_entropy
from .runtime import freeze, run_chunks, substream

_MAX_PAIRS = 10**7
_MIN_PAIR_POINTS = 1000
_MIN_BALL_POINTS = 10
_MIN_BOXES = 100
_RESOLUTION_FACTOR = 10.0
# substream tags, one per consumer of randomness
_STREAM_PAIRS = 71
_STREAM_PROBES = 72
_PAIR_BLOCK_ROWS = 1 << 12


class _GridIndex:
    """Uniform grid hash over one cell size, anchored at integer multiples.

    Anchoring the lattice at multiples of the cell (rather than at the
    data minimum) keeps box identities independent of the sample, so
    self-similar cylinder structure lands in single boxes.
    """

    def __init__(self, points, cell):
        if not (cell > 0 and math.isfinite(cell)):
            raise PreconditionError("cell size must be positive and finite")
        self.cell = float(cell)
        k = np.floor(points / self.cell).astype(np.int64)
        self.k_min = k.min(axis=0)
        k = k - self.k_min
        self.dims = k.max(axis=0) + 1
        if int(np.prod(self.dims.astype(object))) >= 2**62:
            raise PreconditionError("grid too fine for the cloud's spread")
        self.strides = np.ones_like(self.dims)
        self.strides[:-1] = np.cumprod(self.dims[::-1])[-2::-1]
        ids = k @ self.strides
        self.order = np.argsort(ids, kind="stable")
        self.sorted_ids = ids[self.order]
        self.cell_ids, self.cell_starts = np.unique(self.sorted_ids, return_index=True)
        n = points.shape[1]
        self.offsets = np.array(list(itertools.product((-1, 0, 1), repeat=n)))

    @property
    def occupied(self):
        return self.cell_ids.size

    def box_masses(self, weights):
        ends = np.append(self.cell_starts, self.sorted_ids.size)
        return np.add.reduceat(weights[self.order], self.cell_starts), ends

    def candidates(self, x):
        """Indices of all points in the 3^n cell neighborhood of x."""
        kx = np.floor(x / self.cell).astype(np.int64) - self.k_min
        cand = kx[None, :] + self.offsets
        ok = np.all((cand >= 0) & (cand < self.dims[None, :]), axis=1)
        ids = cand[ok] @ self.strides
        pos = np.searchsorted(self.cell_ids, ids)
        clipped = np.minimum(pos, self.cell_ids.size - 1)
        pos = clipped[self.cell_ids[clipped] == ids]
        if pos.size == 0:
            return np.empty(0, dtype=np.int64)
        starts = self.cell_starts[pos]
        ends = np.append(self.cell_starts, self.sorted_ids.size)[pos + 1]
        return np.concatenate([self.order[s:e] for s, e in zip(starts, ends)])


@dataclass(frozen=True)
class PointCloud:
    """Empirical measure: N points with weights summing to one.

    truncation_error is the certified bound on how far each point may sit
    from its ideal position (0 for exactly placed clouds); estimators
    refuse radius schedules that probe below 10x this floor.
    """

    points: np.ndarray
    weights: np.ndarray = None
    truncation_error: float = 0.0
    _grids: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise PreconditionError("points must be a nonempty (N, n) array")
        if not np.all(np.isfinite(pts)):
            raise PreconditionError("points must be finite")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(self.weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w < 0):
                raise PreconditionError("weights must be nonnegative, one per point")
            if abs(w.sum() - 1.0) > 1e-9:
                raise PreconditionError("weights must sum to one within 1e-9")
        if not (self.truncation_error >= 0):
            raise PreconditionError("truncation error must be nonnegative")
        object.__setattr__(self, "points", freeze(pts))
        object.__setattr__(self, "weights", freeze(w))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def ambient_dim(self):
        return self.points.shape[1]

    def grid(self, cell):
        key = float(cell)
        if key not in self._grids:
            self._grids[key] = _GridIndex(self.points, key)
        return self._grids[key]

    def ball_mass(self, x, r):
        """Weighted mass and point count of the closed ball B(x, r)."""
        x = np.asarray(x, dtype=float).reshape(self.ambient_dim)
        idx = self.grid(r).candidates(x)
        if idx.size == 0:
            return 0.0, 0
        d2 = np.sum((self.points[idx] - x) ** 2, axis=1)
        inside = idx[d2 <= r * r]
        return float(self.weights[inside].sum()), int(inside.size)


@dataclass(frozen=True)
class RadiusSchedule:
    """Dyadic radii r0 * 2^-j for j = 0..levels, with an OLS fit window.

    The window [fit_lo, fit_hi] (inclusive, in j) must span at least four
    scales; no automatic window search is ever performed.
    """

    r0: float
    levels: int
    fit_lo: int
    fit_hi: int

    def __post_init__(self):
        if not (self.r0 > 0 and math.isfinite(self.r0)):
            raise PreconditionError("top radius must be positive and finite")
        if not 0 <= self.fit_lo < self.fit_hi <= self.levels:
            raise PreconditionError("fit window must sit inside the schedule")
        if self.fit_hi - self.fit_lo + 1 < 4:
            raise PreconditionError("fit window must contain at least 4 scales")

    @property
    def radii(self):
        return self.r0 * 0.5 ** np.arange(self.levels + 1)

    @property
    def fit_slice(self):
        return slice(self.fit_lo, self.fit_hi + 1)

    def check_floor(self, cloud):
        floor = _RESOLUTION_FACTOR * cloud.truncation_error
        if self.radii[-1] < floor:
            raise PreconditionError(
                "schedule probes below the truncation floor "
                f"({self.radii[-1]:.3g} < {floor:.3g})"
            )


def schedule_for(cloud, r0=None, levels=None, tail=1):
    """Convenience schedule: from the cloud spread down to the floor.

    The fit window drops `tail` coarse scales and keeps the rest.
    """
    pts = cloud.points
    spread = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    if spread == 0.0:
        spread = 1.0
    if r0 is None:
        r0 = spread / 4.0
    if levels is None:
        floor = max(_RESOLUTION_FACTOR * cloud.truncation_error, r0 * 2.0**-24)
        levels = max(4, int(math.floor(math.log2(r0 / floor))))
    lo = min(tail, levels - 4)
    return RadiusSchedule(r0=r0, levels=levels, fit_lo=max(lo, 0), fit_hi=levels)


@dataclass(frozen=True)
class FitEstimate:
    """OLS slope with its standard error and the fitted profile."""

    value: float
    stderr: float
    radii: np.ndarray
    profile: np.ndarray


def _ols(logx, logy):
    if np.allclose(logy, logy[0], atol=1e-12):
        return 0.0, 0.0
    res = linregress(logx, logy)
    return float(res.slope), float(res.stderr)


def ball_profile(cloud, x, schedule):
    """Masses and counts of B(x, r) across the schedule radii."""
    radii = schedule.radii
    masses = np.empty(radii.size)
    counts = np.empty(radii.size, dtype=np.int64)
    for j, r in enumerate(radii):
        masses[j], counts[j] = cloud.ball_mass(x, r)
    return masses, counts


def local_dimension(cloud, x, schedule, min_points=_MIN_BALL_POINTS):
    """Slope of log mu(B(x, r)) against log r over the fit window."""
    schedule.check_floor(cloud)
    x = np.asarray(x, dtype=float).reshape(cloud.ambient_dim)
    lo = cloud.points.min(axis=0) - schedule.r0
    hi = cloud.points.max(axis=0) + schedule.r0
    if np.any(x < lo) or np.any(x > hi):
        raise PreconditionError("probe point outside the cloud's bounding region")
    masses, counts = ball_profile(cloud, x, schedule)
    win = schedule.fit_slice
    if np.min(counts[win]) < min_points:
        raise EstimationError(
            f"fewer than {min_points} neighbors at some fitted scale"
        )
    radii = schedule.radii
    slope, err = _ols(np.log(radii[win]), np.log(masses[win]))
    return FitEstimate(slope, err, freeze(radii), freeze(masses))


_ENERGY_CUTS = (8, 4, 2, 1)


def _pair_profile(cloud, radii, powers, seed, max_pairs, workers):
    """Correlation/energy sums over a deterministic stratified pair sample.

    Stratum t pairs every point with a substream(seed, t) permutation of
    the cloud, so each point appears equally often; strata are truncated
    to respect max_pairs.  Each stratum reports prefix sums at an eighth,
    a quarter, half, and all of its pairs, so the nested subsamples used
    by the divergence detector are fixed, worker-count-independent
    subsets.  Returns one tuple (pair_weight, hits per radius,
    zero_weight, energy sums, nonzero_weight) per cut, cumulative, the
    last covering the full sample.
    """
    n = cloud.size
    n_strata = max(1, min(max_pairs // n, n - 1))
    per_stratum = min(n, max_pairs)
    pts, w = cloud.points, cloud.weights

    def stratum(t, start, stop):
        rng = substream(seed, _STREAM_PAIRS, t)
        partner = rng.permutation(n)[:per_stratum]
        left = np.arange(partner.size)
        keep = partner != left
        a = left[keep]
        b = partner[keep]
        d = np.sqrt(np.sum((pts[a] - pts[b]) ** 2, axis=1))
        pw = w[a] * w[b]

        def stats(sl):
            ds, pws = d[sl], pw[sl]
            nz = ds > 0
            hits = np.array([pws[ds <= r].sum() for r in radii])
            energies = np.array([np.sum(pws[nz] * ds[nz] ** (-s)) for s in powers])
            return (
                pws.sum(),
                hits,
                pws[~nz].sum(),
                energies,
                pws[nz].sum(),
            )

        cuts = [d.size // c for c in _ENERGY_CUTS]
        return tuple(stats(slice(0, c)) for c in cuts)

    results = run_chunks(stratum, n_strata, workers=workers, chunk=1)

    def combine(rows):
        total = sum(r[0] for r in rows)
        hits = sum((r[1] for r in rows), np.zeros(len(radii)))
        zeros = sum(r[2] for r in rows)
        energies = sum((r[3] for r in rows), np.zeros(len(powers)))
        nonzero = sum(r[4] for r in rows)
        return total, hits, zeros, energies, nonzero

    return tuple(combine([r[k] for r in results]) for k in range(len(_ENERGY_CUTS)))


def correlation_dimension(cloud, schedule, seed=0, max_pairs=_MAX_PAIRS, workers=1):
    """Slope of the correlation sum log C(r) against log r.

    C(r) is the weighted fraction of sampled point pairs within distance
    r; pairs are drawn by the deterministic stratified scheme.
    """
    if cloud.size < _MIN_PAIR_POINTS:
        raise PreconditionError(f"need at least {_MIN_PAIR_POINTS} points")
    schedule.check_floor(cloud)
    radii = schedule.radii
    full = _pair_profile(cloud, radii, (), seed, max_pairs, workers)[-1]
    total, hits = full[0], full[1]
    corr = hits / total
    win = schedule.fit_slice
    if np.min(corr[win]) <= 0:
        raise EstimationError("no pairs resolved at some fitted scale")
    if np.allclose(corr, 1.0, atol=1e-15):
        # all sampled pairs coincide: a single atom has dimension 0
        return FitEstimate(0.0, 0.0, freeze(radii), freeze(corr))
    slope, err = _ols(np.log(radii[win]), np.log(corr[win]))
    return FitEstimate(slope, err, freeze(radii), freeze(corr))


@dataclass(frozen=True)
class EnergyEstimate:
    """Empirical s-energy with the doubling-stability divergence flag."""

    value: float
    diverged: bool
    half_value: float
    zero_pair_weight: float
    s: float


def empirical_energy(cloud, s, seed=0, max_pairs=_MAX_PAIRS, workers=1):
    """Mean of |x - y|^-s over sampled pairs, zero distances excluded.

    The divergence flag fires when the running mean fails to stabilize:
    it is tracked at an eighth, a quarter, half, and all of the pair
    budget, and any doubling that moves it by more than 10 percent
    fires.  A finite energy settles; a divergent one keeps shifting
    through new extreme summands.
    """
    if cloud.size < _MIN_PAIR_POINTS:
        raise PreconditionError(f"need at least {_MIN_PAIR_POINTS} points")
    if not (s >= 0):
        raise PreconditionError("energy exponent must be nonnegative")
    blocks = _pair_profile(cloud, (), (s,), seed, max_pairs, workers)

    def mean(block):
        nonzero_w = block[4]
        return block[3][0] / nonzero_w if nonzero_w > 0 else math.inf

    running = [mean(b) for b in blocks]
    full = blocks[-1]
    if math.isinf(running[-1]):
        raise EstimationError("all sampled pairs coincide; energy undefined")
    diverged = any(
        math.isinf(a) or abs(b - a) > 0.1 * abs(b)
        for a, b in zip(running, running[1:])
    )
    return EnergyEstimate(
        value=float(running[-1]),
        diverged=bool(diverged),
        half_value=float(running[-2]),
        zero_pair_weight=float(full[2] / full[0]),
        s=float(s),
    )


def box_counting(cloud, schedule):
    """Slope of log N(r) against log(1/r), N(r) = occupied boxes of side r."""
    schedule.check_floor(cloud)
    radii = schedule.radii
    counts = np.array([cloud.grid(r).occupied for r in radii], dtype=float)
    win = schedule.fit_slice
    slope, err = _ols(np.log(1.0 / radii[win]), np.log(counts[win]))
    return FitEstimate(slope, err, freeze(radii), freeze(counts))


@dataclass(frozen=True)
class CoarseSpectrum:
    """Histogram spectrum at one scale: f(a) from box-mass exponents.

    f(a) = log #{boxes with log-mass exponent within delta of a} / log(1/r);
    only bins with at least one box appear.
    """

    alpha: np.ndarray
    f: np.ndarray
    peak_alpha: float
    peak_f: float
    r: float
    delta: float
    occupied: int


def coarse_spectrum(cloud, r, alpha_bins=None, delta=0.05):
    """Coarse multifractal spectrum from box masses at scale r."""
    if not (0 < r < 1):
        raise PreconditionError("scale r must lie in (0, 1)")
    if not (delta > 0):
        raise PreconditionError("window half-width delta must be positive")
    grid = cloud.grid(r)
    masses, _ = grid.box_masses(cloud.weights)
    masses = masses[masses > 0]
    if masses.size < _MIN_BOXES:
        raise EstimationError(
            f"only {masses.size} occupied boxes; need {_MIN_BOXES}"
        )
    exponents = np.log(masses) / math.log(r)
    if alpha_bins is None:
        step = delta / 5.0
        lo = math.floor(exponents.min() / step) * step
        hi = math.ceil(exponents.max() / step) * step
        alpha_bins = np.arange(lo, hi + step / 2, step)
    centers = np.asarray(alpha_bins, dtype=float)
    sorted_exp = np.sort(exponents)
    counts = np.searchsorted(sorted_exp, centers + delta, side="right") - np.searchsorted(
        sorted_exp, centers - delta, side="left"
    )
    keep = counts > 0
    centers, counts = centers[keep], counts[keep]
    if centers.size == 0:
        raise EstimationError("no occupied spectrum bins")
    f_hat = np.log(counts) / math.log(1.0 / r)
    top = f_hat >= f_hat.max() - 1e-12
    return CoarseSpectrum(
        alpha=freeze(centers),
        f=freeze(f_hat),
        peak_alpha=float(centers[top].mean()),
        peak_f=float(f_hat.max()),
        r=float(r),
        delta=float(delta),
        occupied=int(masses.size),
    )


def _probe_points(cloud, probes, seed):
    rng = substream(seed, _STREAM_PROBES)
    idx = rng.integers(0, cloud.size, size=probes)
    return cloud.points[idx]


@dataclass(frozen=True)
class RegularityProfile:
    """Quantile trajectory of log(m(x,2r)/m(x,r)) / log(1/r) per scale."""

    radii: np.ndarray
    statistic: np.ndarray
    quantile: float


def weak_diametric_regularity_check(cloud, schedule, quantile=0.9, probes=200, seed=0):
    """Doubling-ratio statistic, which must trend to zero for regular measures.

    Probes are drawn from the cloud itself so every ball carries mass.
    """
    schedule.check_floor(cloud)
    radii = schedule.radii
    xs = _probe_points(cloud, probes, seed)
    stats = np.empty((probes, radii.size - 1))
    for i, x in enumerate(xs):
        masses, _ = ball_profile(cloud, x, schedule)
        ratio = masses[:-1] / masses[1:]
        stats[i] = np.log(ratio) / np.log(1.0 / radii[1:])
    traj = np.quantile(stats, quantile, axis=0)
    return RegularityProfile(freeze(radii[1:]), freeze(traj), float(quantile))


@dataclass(frozen=True)
class RelativeDimension:
    """Essential range of per-point relative-dimension slopes.

    Positive infinity records probes whose denominator ball had no mass;
    the first offending (point, radius) is kept for diagnostics.
    """

    interval: tuple
    slopes: np.ndarray
    infinite_probes: int
    offending: tuple


def relative_dimension_estimate(
    cloud_mu, cloud_nu, schedule, probes=200, seed=0, quantiles=(0.25, 0.75)
):
    """Slopes of log(m_mu(B)/m_nu(B)) vs log r at mu-sampled probe points.

    The default interquartile interval is the essential-range surrogate:
    per-probe slopes carry an intrinsic fluctuation of order 1/sqrt(depth)
    at any finite scale, so the extreme quantiles measure that noise
    rather than the limit range.
    """
    if cloud_mu.ambient_dim != cloud_nu.ambient_dim:
        raise PreconditionError("clouds must share an ambient space")
    schedule.check_floor(cloud_mu)
    schedule.check_floor(cloud_nu)
    radii = schedule.radii
    win = schedule.fit_slice
    xs = _probe_points(cloud_mu, probes, seed)
    slopes = np.empty(probes)
    infinite = 0
    offending = None
    for i, x in enumerate(xs):
        m_mu, _ = ball_profile(cloud_mu, x, schedule)
        m_nu, _ = ball_profile(cloud_nu, x, schedule)
        if np.any(m_nu[win] == 0):
            j = int(np.argmax(m_nu[win] == 0)) + schedule.fit_lo
            slopes[i] = math.inf
            infinite += 1
            if offending is None:
                offending = (tuple(x.tolist()), float(radii[j]))
            continue
        ratio = np.log(m_mu[win]) - np.log(m_nu[win])
        slopes[i], _ = _ols(np.log(radii[win]), ratio)
    finite = slopes[np.isfinite(slopes)]
    if finite.size == 0:
        interval = (math.inf, math.inf)
    else:
        interval = tuple(float(q) for q in np.quantile(finite, quantiles))
    return RelativeDimension(interval, freeze(slopes), infinite, offending)


def relative_dimension_bound(mu, nu, gamma):
    """Exact symbolic bound h(mu || nu) / (-log gamma) on relative dimension."""
    if not (0 < gamma < 1):
        raise PreconditionError("metric ratio gamma must lie in (0, 1)")
    return relative_entropy(mu, nu) / (-math.log(gamma))
