"""Shift-invariant measures on sequence space: Bernoulli, k-step Markov,
and Gibbs states of locally constant potentials.

Words of length k are encoded as integers in base m, most significant symbol
first, so the state of a k-step chain after reading w is code(w) mod m**k.
All models expose exact cylinder masses, level-n marginal tables, entropy in
nats, and deterministic batch sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .errors import EstimationError, PreconditionError
from .runtime import check_budget, freeze, substream

_PROB_ATOL = 1e-9
_STATIONARY_RESIDUAL = 1e-13
_POWER_MAX_ITERS = 1_000_000


def _as_prob_vector(p, atol=_PROB_ATOL):
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise PreconditionError("probability vector must be 1-d and non-empty")
    if np.any(p < 0) or np.any(~np.isfinite(p)):
        raise PreconditionError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > atol:
        raise PreconditionError(f"probabilities sum to {p.sum()}, not 1")
    return p


def encode_word(word, m):
    code = 0
    for s in word:
        s = int(s)
        if not 0 <= s < m:
            raise PreconditionError(f"symbol {s} outside alphabet of size {m}")
        code = code * m + s
    return code


def decode_word(code, m, length):
    out = []
    for _ in range(length):
        out.append(int(code % m))
        code //= m
    return tuple(reversed(out))


def _xlogx(v):
    out = np.zeros(v.shape)
    mask = v > 0
    out[mask] = v[mask] * np.log(v[mask])
    return out


class BernoulliMeasure:
    """Product measure with one weight per symbol.  Zero weights allowed."""

    def __init__(self, p):
        self.p = freeze(_as_prob_vector(p))

    @property
    def m(self):
        return int(self.p.size)

    def cylinder_mass(self, word):
        out = 1.0
        for s in word:
            if not 0 <= s < self.m:
                raise PreconditionError(f"symbol {s} outside alphabet of size {self.m}")
            out *= self.p[s]
        return float(out)

    def log_cylinder_mass(self, word):
        mass = self.cylinder_mass(word)
        return math.log(mass) if mass > 0 else -math.inf

    def marginal(self, n):
        """Flat length-m**n table of cylinder masses, lexicographic order."""
        n = int(n)
        if n < 0:
            raise PreconditionError("marginal level must be >= 0")
        check_budget(self.m**n, "marginal table")
        table = np.ones(1)
        for _ in range(n):
            table = (table[:, None] * self.p[None, :]).ravel()
        return table

    def entropy(self):
        return float(-_xlogx(self.p).sum())

    def sample_batch(self, count, length, rng):
        cdf = np.cumsum(self.p)
        u = rng.random((int(count), int(length)))
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, self.m - 1).astype(np.int64)

    def as_markov(self):
        kernel = np.tile(self.p, (self.m, 1))
        return MarkovMeasure(order=1, stationary=self.p, kernel=kernel)


class MarkovMeasure:
    """Stationary k-step Markov measure.

    stationary is the distribution of length-k blocks (flat, m**k entries);
    kernel[s, a] is the probability of emitting a from state s.  Rows of
    zero-mass states are ignored.  Construction validates normalization,
    shift consistency of the block distribution, and stationarity under the
    kernel; bad input is rejected, never repaired.
    """

    def __init__(self, order, stationary, kernel):
        order = int(order)
        if order < 1:
            raise PreconditionError("markov order must be >= 1")
        kernel = np.array(kernel, dtype=float)
        if kernel.ndim != 2 or kernel.shape[1] < 1:
            raise PreconditionError("kernel must be 2-d (states x symbols)")
        m = kernel.shape[1]
        if kernel.shape[0] != m**order:
            raise PreconditionError(
                f"kernel has {kernel.shape[0]} states, expected {m}**{order}"
            )
        stationary = _as_prob_vector(stationary)
        if stationary.size != m**order:
            raise PreconditionError("stationary distribution has wrong size")
        if np.any(kernel < 0) or np.any(~np.isfinite(kernel)):
            raise PreconditionError("kernel entries must be finite and non-negative")
        pos = stationary > 0
        rows = kernel.sum(axis=1)
        if np.any(np.abs(rows[pos] - 1.0) > _PROB_ATOL):
            raise PreconditionError("kernel rows on positive states must sum to 1")
        self.order = order
        self._m = int(m)
        self.stationary = freeze(stationary)
        self.kernel = freeze(kernel)
        self._check_shift_consistency()
        self._check_stationarity()

    @property
    def m(self):
        return self._m

    def _check_shift_consistency(self):
        m, k = self.m, self.order
        if k == 1:
            return
        left = self.stationary.reshape(m, m ** (k - 1)).sum(axis=0)
        right = self.stationary.reshape(m ** (k - 1), m).sum(axis=1)
        if np.max(np.abs(left - right)) > _PROB_ATOL:
            raise PreconditionError(
                "block distribution is not shift consistent "
                "(leading and trailing marginals differ)"
            )

    def _push_forward(self, dist):
        """One step of the induced chain on states."""
        m, k = self.m, self.order
        states = np.arange(m**k)
        targets = (states % m ** (k - 1))[:, None] * m + np.arange(m)[None, :]
        out = np.zeros_like(dist)
        np.add.at(out, targets.ravel(), (dist[:, None] * self.kernel).ravel())
        return out

    def _check_stationarity(self):
        resid = np.max(np.abs(self._push_forward(self.stationary) - self.stationary))
        if resid > _PROB_ATOL:
            raise PreconditionError(
                f"stationary distribution violates invariance (residual {resid:.3e})"
            )

    @classmethod
    def from_kernel(cls, kernel, order, support=None):
        """Build the stationary measure of a kernel by power iteration.

        The positive-entry transition graph restricted to `support` (all
        states by default) must be strongly connected; that is checked before
        iterating, and the stationary distribution is then unique.
        """
        kernel = np.asarray(kernel, dtype=float)
        n_states = kernel.shape[0]
        if support is None:
            support = np.arange(n_states)
        support = np.asarray(support, dtype=np.int64)
        graph = _state_graph(kernel, order, support)
        ncomp, _ = connected_components(graph, directed=True, connection="strong")
        if ncomp != 1:
            raise PreconditionError(
                "kernel graph is not strongly connected on the given support; "
                "stationary distribution would not be unique"
            )
        op = _restricted_operator(kernel, order, support)
        dist = np.full(support.size, 1.0 / support.size)
        for _ in range(_POWER_MAX_ITERS):
            nxt = dist @ op
            total = nxt.sum()
            if total <= 0:
                raise PreconditionError("kernel support is not closed")
            nxt /= total
            # lazy step kills periodicity without moving the fixed point
            nxt = 0.5 * (dist + nxt)
            if np.max(np.abs(nxt - dist)) <= _STATIONARY_RESIDUAL:
                dist = nxt
                break
            dist = nxt
        else:
            raise EstimationError("power iteration failed to converge")
        stationary = np.zeros(n_states)
        stationary[support] = dist / dist.sum()
        return cls(order=order, stationary=stationary, kernel=kernel)

    def cylinder_mass(self, word):
        out = self.log_cylinder_mass(word)
        return math.exp(out) if out > -math.inf else 0.0

    def log_cylinder_mass(self, word):
        m, k = self.m, self.order
        word = tuple(int(s) for s in word)
        n = len(word)
        if n <= k:
            code = encode_word(word, m)
            block = self.stationary.reshape(m**n, m ** (k - n)).sum(axis=1)
            v = block[code]
            return math.log(v) if v > 0 else -math.inf
        state = encode_word(word[:k], m)
        start = self.stationary[state]
        if start <= 0:
            return -math.inf
        out = math.log(start)
        for s in word[k:]:
            if not 0 <= s < m:
                raise PreconditionError(f"symbol {s} outside alphabet of size {m}")
            step = self.kernel[state, s]
            if step <= 0:
                return -math.inf
            out += math.log(step)
            state = (state % m ** (k - 1)) * m + s
        return out

    def marginal(self, n):
        n = int(n)
        if n < 0:
            raise PreconditionError("marginal level must be >= 0")
        m, k = self.m, self.order
        check_budget(m ** max(n, k), "marginal table")
        if n <= k:
            return self.stationary.reshape(m**n, m ** (k - n)).sum(axis=1)
        table = np.array(self.stationary)
        for j in range(k, n):
            states = np.arange(m**j) % m**k
            table = (table[:, None] * self.kernel[states, :]).ravel()
        return table

    def entropy(self):
        rows = -_xlogx(self.kernel).sum(axis=1)
        return float(np.dot(self.stationary, rows))

    def sample_batch(self, count, length, rng):
        count, length = int(count), int(length)
        m, k = self.m, self.order
        if length <= k:
            table = self.marginal(length)
            cdf = np.cumsum(table)
            codes = np.searchsorted(cdf, rng.random(count), side="right")
            codes = np.minimum(codes, table.size - 1)
            out = np.empty((count, length), dtype=np.int64)
            for j in range(length - 1, -1, -1):
                out[:, j] = codes % m
                codes //= m
            return out
        cdf0 = np.cumsum(self.stationary)
        states = np.searchsorted(cdf0, rng.random(count), side="right")
        states = np.minimum(states, self.stationary.size - 1)
        u = rng.random((count, length - k))
        out = np.empty((count, length), dtype=np.int64)
        tmp = states.copy()
        for j in range(k - 1, -1, -1):
            out[:, j] = tmp % m
            tmp //= m
        kernel_cdf = np.cumsum(self.kernel, axis=1)
        for t in range(length - k):
            rows = kernel_cdf[states]
            sym = (rows < u[:, t][:, None]).sum(axis=1)
            sym = np.minimum(sym, m - 1)
            out[:, k + t] = sym
            states = (states % m ** (k - 1)) * m + sym
        return out


def _state_graph(kernel, order, support):
    """Sparse positive-transition graph restricted to `support` states."""
    m = kernel.shape[1]
    pos_of = -np.ones(kernel.shape[0], dtype=np.int64)
    pos_of[support] = np.arange(support.size)
    rows, cols = [], []
    for i, s in enumerate(support):
        base = (s % m ** (order - 1)) * m
        for a in range(m):
            if kernel[s, a] > 0:
                j = pos_of[base + a]
                if j >= 0:
                    rows.append(i)
                    cols.append(j)
    data = np.ones(len(rows))
    return sp.coo_matrix(
        (data, (rows, cols)), shape=(support.size, support.size)
    ).tocsr()


def _restricted_operator(kernel, order, support):
    """Dense transition operator of the induced state chain on `support`."""
    m = kernel.shape[1]
    pos_of = -np.ones(kernel.shape[0], dtype=np.int64)
    pos_of[support] = np.arange(support.size)
    op = np.zeros((support.size, support.size))
    for i, s in enumerate(support):
        base = (s % m ** (order - 1)) * m
        for a in range(m):
            j = pos_of[base + a]
            if j >= 0:
                op[i, j] += kernel[s, a]
    return op


def as_markov(measure):
    if isinstance(measure, MarkovMeasure):
        return measure
    if isinstance(measure, BernoulliMeasure):
        return measure.as_markov()
    if isinstance(measure, GibbsMeasure):
        return measure.markov
    raise PreconditionError(f"not a sequence-space measure: {type(measure)!r}")


def is_ergodic(measure):
    """Whether every pair of positive-mass states is joined by positive words.

    Equivalent to strong connectivity of the positive-kernel graph on the
    positive-mass states (stationarity forces targets of positive steps from
    positive states to be positive themselves).
    """
    markov = as_markov(measure)
    support = np.flatnonzero(markov.stationary > 0)
    if support.size == 0:
        raise PreconditionError("measure has empty support")
    graph = _state_graph(markov.kernel, markov.order, support)
    ncomp, _ = connected_components(graph, directed=True, connection="strong")
    return bool(ncomp == 1)


def markov_approximation(measure, order):
    """Best k-step approximation: exact level-(k+1) marginals, ratio kernel.

    The result has initial distribution equal to the level-k marginal of the
    input and kernel equal to the ratio of its cylinder masses (zero where
    the conditioning block has mass zero).  Level-n marginals of the input
    are absolutely continuous with respect to the result for every n, and
    relative entropy distance decays to zero as the order grows.
    """
    order = int(order)
    if order < 1:
        raise PreconditionError("approximation order must be >= 1")
    m = measure.m
    table = measure.marginal(order + 1).reshape(m**order, m)
    stationary = table.sum(axis=1)
    kernel = np.zeros_like(table)
    pos = stationary > 0
    kernel[pos] = table[pos] / stationary[pos, None]
    return MarkovMeasure(order=order, stationary=stationary, kernel=kernel)


def relative_entropy(mu, nu):
    """h(mu || nu) in nats for nu a k-step Markov model.

    Computed as -h(mu) - sum over (k+1)-blocks of mu-mass times the log
    nu-kernel step.  Returns +inf when some mu-positive block has a zero
    nu step (absolute continuity of marginals fails).  For shift-invariant
    mu the level-(k+1) check settles every level.
    """
    nu = as_markov(nu)
    if mu.m != nu.m:
        raise PreconditionError("measures live on different alphabets")
    m, k = nu.m, nu.order
    blocks = mu.marginal(k + 1)
    steps = nu.kernel.ravel()  # aligned: code(w) = code(w[:k]) * m + w[k]
    pos = blocks > 0
    state_codes = np.arange(m ** (k + 1)) // m
    if np.any(pos & ((steps <= 0) | (nu.stationary[state_codes] <= 0))):
        return math.inf
    cross = float(np.dot(blocks[pos], np.log(steps[pos])))
    value = -mu.entropy() - cross
    return max(value, 0.0)


def rational_kernel_approximation(measure, denominator):
    """Replace kernel rows by fractions with the given denominator.

    Zero entries stay exactly zero and positive entries stay positive (at
    least 1/D), so ergodicity is preserved; the stationary distribution is
    recomputed by power iteration on the support.  Rejected when a row has
    more positive entries than D.
    """
    D = int(denominator)
    if D < 1:
        raise PreconditionError("denominator must be >= 1")
    markov = as_markov(measure)
    if not is_ergodic(markov):
        raise PreconditionError("rational approximation requires an ergodic input")
    kernel = np.array(markov.kernel)
    support = np.flatnonzero(markov.stationary > 0)
    new_kernel = np.zeros_like(kernel)
    for s in support:
        row = kernel[s]
        pos = np.flatnonzero(row > 0)
        if pos.size > D:
            raise PreconditionError(
                f"denominator {D} too small: row {s} has {pos.size} positive entries"
            )
        quota = D * row
        units = np.floor(quota).astype(np.int64)
        rem = quota - units
        shortfall = D - units.sum()
        if shortfall > 0:
            # hand out leftover units by largest remainder, index order on ties
            order = np.lexsort((np.arange(row.size), -rem))
            for idx in order[:shortfall]:
                units[idx] += 1
        # positivity floor: every positive entry keeps at least one unit
        for idx in pos:
            if units[idx] == 0:
                donor = max(
                    (j for j in pos if units[j] > 1),
                    key=lambda j: (units[j], -j),
                )
                units[donor] -= 1
                units[idx] = 1
        units[row == 0] = 0
        assert units.sum() == D
        new_kernel[s] = units / float(D)
    return MarkovMeasure.from_kernel(new_kernel, markov.order, support=support)


def sample_word(measure, length, seed, stream=()):
    """One word of the given length, deterministic in (seed, stream)."""
    rng = substream(seed, *stream)
    return measure.sample_batch(1, length, rng)[0]


def markov_from_word(word, order, m):
    """Empirical k-step model from the (k+1)-block frequencies of a word.

    The kernel is the exact ratio of block counts; the block distribution is
    re-solved as the kernel's stationary distribution so the result is a
    valid stationary measure (raw sliding-window frequencies are off by
    boundary terms).
    """
    word = np.asarray(word, dtype=np.int64)
    k = int(order)
    if k < 1:
        raise PreconditionError("order must be >= 1")
    if word.size < k + 1:
        raise PreconditionError("word shorter than order + 1")
    if np.any((word < 0) | (word >= m)):
        raise PreconditionError(f"word has symbols outside alphabet of size {m}")
    check_budget(m ** (k + 1), "block frequency table")
    powers = m ** np.arange(k, -1, -1)
    n_blocks = word.size - k
    codes = np.zeros(n_blocks, dtype=np.int64)
    for j in range(k + 1):
        codes += word[j : j + n_blocks] * powers[j]
    table = np.bincount(codes, minlength=m ** (k + 1)).astype(float)
    table = table.reshape(m**k, m)
    row_tot = table.sum(axis=1)
    kernel = np.zeros_like(table)
    pos = row_tot > 0
    kernel[pos] = table[pos] / row_tot[pos, None]
    return MarkovMeasure.from_kernel(kernel, k, support=np.flatnonzero(pos))


@dataclass(frozen=True)
class LocallyConstantPotential:
    """Potential depending on the first `depth` symbols only.

    table is flat with m**depth entries in word-code order; -inf entries are
    allowed and mark forbidden words.
    """

    depth: int
    m: int
    table: np.ndarray

    def __post_init__(self):
        depth, m = int(self.depth), int(self.m)
        if depth < 1 or m < 1:
            raise PreconditionError("potential depth and alphabet must be >= 1")
        table = np.array(self.table, dtype=float).ravel()
        if table.size != m**depth:
            raise PreconditionError(
                f"table has {table.size} entries, expected {m}**{depth}"
            )
        if np.any(np.isnan(table)) or np.any(table == math.inf):
            raise PreconditionError("potential entries must be finite or -inf")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "table", freeze(table))

    def sup_norm(self):
        finite = self.table[np.isfinite(self.table)]
        if finite.size == 0:
            raise PreconditionError("potential is identically -inf")
        return float(np.max(np.abs(finite)))

    def finite_range(self):
        finite = self.table[np.isfinite(self.table)]
        if finite.size == 0:
            raise PreconditionError("potential is identically -inf")
        return float(finite.min()), float(finite.max())


@dataclass(frozen=True)
class GibbsMeasure:
    """Gibbs state of a locally constant potential, as a Markov measure.

    constant is an explicit C valid in the two-sided Gibbs mass comparison
    for every admissible cylinder, derived from the transfer-operator
    eigendata (not fitted to data).
    """

    potential: LocallyConstantPotential
    pressure: float
    markov: MarkovMeasure
    constant: float

    @property
    def m(self):
        return self.markov.m

    @property
    def order(self):
        return self.markov.order

    def cylinder_mass(self, word):
        return self.markov.cylinder_mass(word)

    def log_cylinder_mass(self, word):
        return self.markov.log_cylinder_mass(word)

    def marginal(self, n):
        return self.markov.marginal(n)

    def entropy(self):
        return self.markov.entropy()

    def sample_batch(self, count, length, rng):
        return self.markov.sample_batch(count, length, rng)


def _perron_triplet(matrix):
    """Spectral radius and positive left/right eigenvectors.

    Dense eig supplies the starting point; a damped power iteration then
    certifies positivity and pushes the residual to roundoff.
    """
    n = matrix.shape[0]
    shift = 0.05 * float(matrix.sum(axis=1).max())
    damped = matrix + shift * np.eye(n)

    def lead(mat, init):
        x = np.abs(init) + 1e-12
        x /= x.sum()
        lam = 0.0
        for _ in range(200_000):
            y = mat @ x
            lam = y.sum()
            if np.max(np.abs(y - lam * x)) <= 1e-12 * lam:
                x = y / lam
                break
            x = y / lam
        if np.max(np.abs(mat @ x - lam * x)) > 1e-10 * lam:
            raise EstimationError("power iteration failed to certify eigenvector")
        return lam, x

    vals, vecs = np.linalg.eig(matrix)
    idx = int(np.argmax(np.abs(vals)))
    lam_r, h = lead(damped, vecs[:, idx].real)
    vals_l, vecs_l = np.linalg.eig(matrix.T)
    idx_l = int(np.argmax(np.abs(vals_l)))
    lam_l, v = lead(damped.T, vecs_l[:, idx_l].real)
    rho = 0.5 * (lam_r + lam_l) - shift
    if rho <= 0 or np.any(h <= 0) or np.any(v <= 0):
        raise EstimationError("Perron data is not strictly positive")
    return rho, v, h


def gibbs_from_potential(potential):
    """Equilibrium state and pressure of a locally constant potential.

    Depth-1 potentials give an exact Bernoulli state (constant 1).  Deeper
    potentials give a (depth-1)-step Markov state built from the transfer
    matrix on overlap states; the induced positive-transition structure must
    be strongly connected, otherwise the state is not unique at this scope
    and we reject.
    """
    pot = potential
    m, d = pot.m, pot.depth
    if d == 1:
        pressure = float(logsumexp(pot.table))
        p = np.exp(pot.table - pressure)
        markov = BernoulliMeasure(p / p.sum()).as_markov()
        return GibbsMeasure(pot, pressure, markov, 1.0)
    n_states = m ** (d - 1)
    check_budget(n_states * m, "transfer matrix")
    if np.max(pot.table) > 700.0:
        raise PreconditionError("potential values overflow the transfer matrix")
    with np.errstate(under="ignore"):
        weights = np.exp(pot.table)
    W = np.zeros((n_states, n_states))
    for u in range(n_states):
        for a in range(m):
            W[u, (u * m + a) % n_states] += weights[u * m + a]
    graph = sp.csr_matrix((W > 0).astype(float))
    ncomp, _ = connected_components(graph, directed=True, connection="strong")
    if ncomp != 1:
        raise PreconditionError(
            "induced transition structure is not irreducible; "
            "equilibrium state is not unique at this scope"
        )
    rho, v, h = _perron_triplet(W)
    pressure = math.log(rho)
    # normalize so <v, h> = 1; the state distribution is then pi = v * h
    v = v / float(np.dot(v, h))
    pi = v * h
    pi = pi / pi.sum()
    states = np.arange(n_states)
    targets = (states[:, None] * m + np.arange(m)[None, :]) % n_states
    kernel = W[states[:, None], targets] * h[targets] / (rho * h[:, None])
    kernel = kernel / kernel.sum(axis=1, keepdims=True)
    markov = MarkovMeasure(order=d - 1, stationary=pi, kernel=kernel)
    constant = _gibbs_constant(pot, pressure, markov, v, h, rho)
    return GibbsMeasure(pot, pressure, markov, constant)


def _gibbs_constant(pot, pressure, markov, v, h, rho):
    """Explicit two-sided constant from the eigendata.

    For n >= depth-1 the mass ratio against exp(-P n + Birkhoff sum) equals
    v(first state) * h(last state) * rho**(depth-1) * exp(-tail), where the
    tail collects the depth-1 potential terms that look past the cylinder;
    shorter cylinders are bounded directly from their marginal tables.
    """
    k = pot.depth - 1
    lo_phi, hi_phi = pot.finite_range()
    hi = float(np.max(v) * np.max(h) * rho**k * math.exp(-k * lo_phi))
    lo = float(np.min(v) * np.min(h) * rho**k * math.exp(-k * hi_phi))
    for n in range(1, k):
        table = markov.marginal(n)
        pos = table[table > 0]
        hi = max(hi, float(pos.max()) * math.exp(n * pressure - n * lo_phi))
        lo = min(lo, float(pos.min()) * math.exp(n * pressure - n * hi_phi))
    return max(hi, 1.0 / lo, 1.0)
