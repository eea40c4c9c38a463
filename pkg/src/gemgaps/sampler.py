"""Exact samplers for residual allocation models and per-sample statistics.

A residual allocation model drops a unit stick into bars: hazard fractions
H_1, H_2, ... cut the remaining stick, the cumulative cut positions are
Y_j = 1 - prod_{i<=j}(1 - H_i), and a sampled value is one plus the number of
bars strictly below its uniform mark. All samplers here are exact: bars are
grown lazily until they cover the highest mark, never truncated at a fixed
length.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceCapError, ValidationError
from .specfun import betainc_lower

__all__ = [
    "GEM",
    "ConstantHazard",
    "IidBeta",
    "Sample",
    "GapVector",
    "CountsProfile",
    "Composition",
    "substream",
    "sample_direct",
    "sample_via_poisson",
    "sample_two_stage",
    "gaps",
    "counts_profile",
    "compositions",
    "size_alpha_biased_permutation",
    "sample_max_counts_half_alpha",
    "sample_rows_csv",
    "sample_rows_json",
]

BAR_CAP_DEFAULT = 10_000_000
SECONDARY_CAP_DEFAULT = 1_000_000


@dataclass(frozen=True)
class GEM:
    """Two-parameter stick-breaking model: H_i ~ beta(1-alpha, theta+i*alpha)."""

    alpha: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValidationError(f"GEM requires 0 <= alpha < 1, got alpha={self.alpha}")
        if not self.theta > -self.alpha:
            raise ValidationError(
                f"GEM requires theta > -alpha, got theta={self.theta}, alpha={self.alpha}")


@dataclass(frozen=True)
class ConstantHazard:
    """Deterministic hazards H_i = p: sampled values are geometric on {1,2,...}."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValidationError(f"ConstantHazard requires 0 < p < 1, got p={self.p}")


@dataclass(frozen=True)
class IidBeta:
    """Independent identically distributed hazards H_i ~ beta(a, b)."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValidationError(f"IidBeta requires a, b > 0, got a={self.a}, b={self.b}")


RamSpec = (GEM, ConstantHazard, IidBeta)


def spec_as_dict(spec):
    """JSON-friendly description of a model spec."""
    if isinstance(spec, GEM):
        return {"variant": "GEM", "alpha": spec.alpha, "theta": spec.theta}
    if isinstance(spec, ConstantHazard):
        return {"variant": "ConstantHazard", "p": spec.p}
    if isinstance(spec, IidBeta):
        return {"variant": "IidBeta", "a": spec.a, "b": spec.b}
    raise ValidationError(f"not a model spec: {spec!r}")


@dataclass(frozen=True)
class Sample:
    """Allocation of n balls to integer boxes, insertion order preserved."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValidationError("Sample requires a non-empty 1-d value array")
        if (vals < 1).any():
            raise ValidationError("Sample values must all be >= 1")
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return int(self.values.size)


@dataclass(frozen=True)
class GapVector:
    """Top-down order-statistic gaps; the last entry is the gap below the minimum."""

    gaps: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gaps, dtype=np.int64)
        if g.ndim != 1 or g.size < 1 or (g < 0).any():
            raise ValidationError("GapVector requires non-negative gaps")
        object.__setattr__(self, "gaps", g)


@dataclass(frozen=True)
class CountsProfile:
    m_n: int            # maximum value
    k_n: int            # number of distinct values
    k_j: dict           # cluster size j -> number of values appearing j times
    k_0: int            # values in 1..m_n that are missing
    l_n: int            # ties at the maximum
    box_counts: dict    # box label -> occupancy (positive entries only)


@dataclass(frozen=True)
class Composition:
    """Ordered positive parts; the tag records which ordering produced them."""

    parts: tuple
    ordering_tag: str

    def __post_init__(self):
        if self.ordering_tag not in ("value_ordered", "appearance_ordered", "ranked"):
            raise ValidationError(f"unknown ordering_tag {self.ordering_tag!r}")
        if len(self.parts) == 0 or any(p < 1 for p in self.parts):
            raise ValidationError("Composition parts must be positive")
        if self.ordering_tag == "ranked" and list(self.parts) != sorted(self.parts, reverse=True):
            raise ValidationError("ranked composition must be weakly decreasing")


def substream(master_seed, index):
    """Independent generator for one replicate of a seeded computation.

    (master_seed, index) fully determines the stream, so work can be sharded
    across any number of workers without changing any drawn number.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def _draw_hazards(spec, start, count, rng):
    """Hazard fractions H_{start+1}, ..., H_{start+count}."""
    if isinstance(spec, GEM):
        ii = np.arange(start + 1, start + count + 1, dtype=np.float64)
        return rng.beta(1.0 - spec.alpha, spec.theta + spec.alpha * ii)
    if isinstance(spec, ConstantHazard):
        return np.full(count, spec.p)
    if isinstance(spec, IidBeta):
        return rng.beta(spec.a, spec.b, size=count)
    raise ValidationError(f"not a model spec: {spec!r}")


class _LazyBars:
    """One realization of the bar sequence, grown on demand."""

    def __init__(self, spec, rng, cap=BAR_CAP_DEFAULT):
        self.spec = spec
        self.rng = rng
        self.cap = cap
        self.ys = np.empty(0)
        self.residual = 1.0   # prod(1 - H_i) over bars generated so far
        self.count = 0
        self.block = 16

    def extend_past(self, target):
        while (self.ys.size == 0 or self.ys[-1] < target) and self.residual > 0.0:
            if self.count >= self.cap:
                raise ResourceCapError(
                    f"bar budget {self.cap} exceeded before reaching level {target}; "
                    "the hazard sequence may not be proper")
            h = _draw_hazards(self.spec, self.count, self.block, self.rng)
            cum = np.cumprod(1.0 - h)
            ys_new = 1.0 - self.residual * cum
            self.ys = np.concatenate([self.ys, ys_new])
            self.residual *= cum[-1]
            self.count += self.block
            self.block = min(self.block * 2, 8192)

    def count_below(self, u):
        """Number of bars strictly below each mark in u (scalar or array)."""
        self.extend_past(np.max(u))
        return np.searchsorted(self.ys, u, side="left")


def sample_direct(spec, n, rng, bar_cap=BAR_CAP_DEFAULT):
    """Draw a size-n sample by counting bars below n uniform marks.

    Exact by construction: bars are generated until they pass the highest
    mark, so no truncation error enters.
    """
    if n < 1:
        raise ValidationError(f"sample size must be >= 1, got {n}")
    u = rng.random(n)
    bars = _LazyBars(spec, rng, cap=bar_cap)
    x = 1 + bars.count_below(u)
    return Sample(x.astype(np.int64))


def sample_via_poisson(theta, n, rng, exponentials=None):
    """Size-n sample from the alpha=0 model via a homogeneous Poisson process.

    Marks are standard exponentials and bars are the points of a rate-theta
    Poisson process on (0, max mark]; a value is one plus the number of
    process points at or below its mark. ``exponentials`` overrides the
    drawn marks (test hook).
    """
    if not theta > 0.0:
        raise ValidationError(f"sample_via_poisson requires theta > 0, got {theta}")
    if n < 1:
        raise ValidationError(f"sample size must be >= 1, got {n}")
    if exponentials is None:
        eps = rng.standard_exponential(n)
    else:
        eps = np.asarray(exponentials, dtype=np.float64)
        if eps.shape != (n,) or (eps < 0).any():
            raise ValidationError("exponentials override must be n non-negative reals")
    t_max = float(eps.max())
    npts = rng.poisson(theta * t_max) if t_max > 0.0 else 0
    pts = np.sort(rng.random(npts) * t_max)
    x = 1 + np.searchsorted(pts, eps, side="right")
    return Sample(x.astype(np.int64))


def sample_two_stage(spec, n, rng, secondary_cap=SECONDARY_CAP_DEFAULT,
                     bar_cap=BAR_CAP_DEFAULT):
    """Species-discovery sampler: one stream, one shared frequency realization.

    An initial block of n draws fixes the species of interest; the stream then
    continues until each of those species has reappeared. The returned value
    for individual i is the discovery rank of its species within the
    continuation stream. For stick-breaking specs this is distributed exactly
    like a size-n sample of box labels.
    """
    if n < 1:
        raise ValidationError(f"sample size must be >= 1, got {n}")
    bars = _LazyBars(spec, rng, cap=bar_cap)
    initial = bars.count_below(rng.random(n))  # box ids (0-based is fine internally)
    waiting = set(initial.tolist())
    rank = {}
    x = np.zeros(n, dtype=np.int64)
    drawn = 0
    while waiting:
        if drawn >= secondary_cap:
            raise ResourceCapError(
                f"secondary stream cap {secondary_cap} hit with "
                f"{len(waiting)} species still unseen")
        block = min(64, secondary_cap - drawn)
        boxes = bars.count_below(rng.random(block))
        drawn += block
        for b in boxes.tolist():
            if b not in rank:
                rank[b] = len(rank) + 1
            if b in waiting:
                waiting.discard(b)
                if not waiting:
                    break
    for i, b in enumerate(initial.tolist()):
        x[i] = rank[b]
    return Sample(x)


def gaps(sample):
    """Top-down gaps between order statistics, ending with the gap below 1.

    For sorted values x_(1) <= ... <= x_(n), entry i (1-based) is
    x_(n+1-i) - x_(n-i), and the last entry is x_(1) - 1.
    """
    xs = np.sort(sample.values)
    n = xs.size
    g = np.empty(n, dtype=np.int64)
    if n > 1:
        g[:n - 1] = xs[:0:-1] - xs[-2::-1]
    g[n - 1] = xs[0] - 1
    return GapVector(g)


def counts_profile(sample):
    """Occupancy statistics of one sample."""
    values, counts = np.unique(sample.values, return_counts=True)
    box_counts = {int(v): int(c) for v, c in zip(values, counts)}
    m_n = int(values[-1])
    k_n = int(values.size)
    k_j = {}
    for c in counts:
        k_j[int(c)] = k_j.get(int(c), 0) + 1
    return CountsProfile(
        m_n=m_n,
        k_n=k_n,
        k_j=k_j,
        k_0=m_n - k_n,
        l_n=box_counts[m_n],
        box_counts=box_counts,
    )


def compositions(sample, rng=None):
    """The three orderings of the positive box counts.

    value_ordered lists counts by increasing box label, appearance_ordered by
    first occurrence in insertion order, ranked in weakly decreasing order.
    The rng argument is accepted for signature parity and unused: all three
    orderings are deterministic functions of the sample.
    """
    vals = sample.values
    values, counts = np.unique(vals, return_counts=True)
    count_of = {int(v): int(c) for v, c in zip(values, counts)}
    value_ordered = tuple(int(c) for c in counts)
    seen = {}
    order = []
    for v in vals.tolist():
        if v not in seen:
            seen[v] = True
            order.append(count_of[v])
    appearance_ordered = tuple(order)
    ranked = tuple(sorted(value_ordered, reverse=True))
    return (
        Composition(value_ordered, "value_ordered"),
        Composition(appearance_ordered, "appearance_ordered"),
        Composition(ranked, "ranked"),
    )


def size_alpha_biased_permutation(parts, alpha, rng):
    """Random rearrangement where the next pick has weight (part - alpha).

    alpha = 0 is the classical size-biased permutation; the weights stay
    positive because every part is a positive integer and alpha < 1.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValidationError(f"requires 0 <= alpha < 1, got alpha={alpha}")
    remaining = [int(p) for p in parts]
    if any(p < 1 for p in remaining):
        raise ValidationError("all parts must be positive integers")
    out = []
    while remaining:
        w = np.cumsum(np.asarray(remaining, dtype=np.float64) - alpha)
        r = rng.random() * w[-1]
        idx = int(np.searchsorted(w, r, side="right"))
        idx = min(idx, len(remaining) - 1)
        out.append(remaining.pop(idx))
    return tuple(out)


# ---------------------------------------------------------------------------
# direct sampling of the maximum at alpha = 1/2
# ---------------------------------------------------------------------------

def _log_gamma_vec(x):
    """Vectorized log Gamma for positive arrays (Stirling after a shift)."""
    y = np.asarray(x, dtype=np.float64).copy()
    shift = np.zeros_like(y)
    for _ in range(12):
        mask = y < 12.0
        if not mask.any():
            break
        shift[mask] += np.log(y[mask])
        y[mask] += 1.0
    inv = 1.0 / y
    inv2 = inv * inv
    series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    return (y - 0.5) * np.log(y) - y + 0.5 * math.log(2.0 * math.pi) + series - shift


def _betainc_lower_vec(a, b, x):
    """Regularized incomplete beta, scalar shape a, array (b, x).

    Same all-positive series around zero as the scalar version; callers must
    keep x <= 1/2 so the term ratio stays bounded away from one (the
    stopped-count dispatcher below reroutes larger x to the scalar routine,
    which switches to the symmetric branch). Terms are rescaled on the fly
    so b*x of a few hundred cannot overflow.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    log_pref = (a * np.log(x) + b * np.log1p(-x)
                + _log_gamma_vec(a + b) - math.lgamma(a + 1.0) - _log_gamma_vec(b))
    term = np.ones_like(x)
    total = np.ones_like(x)
    scale_log = np.zeros_like(x)
    n = 0
    while True:
        term = term * (a + b + n) / (a + 1.0 + n) * x
        total += term
        n += 1
        if n > 200_000:
            raise ArithmeticError("incomplete beta series did not converge")
        big = total > 1e250
        if big.any():
            total[big] *= 1e-250
            term[big] *= 1e-250
            scale_log[big] += 250.0 * math.log(10.0)
        if (term <= 1e-17 * total).all():
            break
    return np.minimum(np.exp(log_pref + np.log(total) + scale_log), 1.0)


def _betainc_lower_mixed(a, b, x):
    """Regularized incomplete beta for scalar a and arrays (b, x).

    Vectorized series where it is fast (x <= 1/2); the occasional element with
    a level past 1/2 falls back to the scalar routine with its symmetric
    branch, so no input can stall the series.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x <= 0.5
    if small.any():
        out[small] = _betainc_lower_vec(a, b[small], x[small])
    if not small.all():
        big = ~small
        out[big] = [betainc_lower(a, float(bb), float(xx))
                    for bb, xx in zip(b[big], x[big])]
    return out


def sample_max_counts_half_alpha(theta, n, replicates, rng):
    """Sample maxima M_n of the alpha = 1/2 model without growing bars.

    At alpha = 1/2 the residual stick mass after j bars is beta-distributed
    with parameters (theta + 1/2, j/2) because the per-bar beta factors
    telescope, so given the highest mark u the count of bars below u has the
    explicit distribution function j -> I_{1-u}(theta+1/2, (j+1)/2). Inverse
    transform over that function costs O(log^2 M) per replicate, which keeps
    the heavy upper tail of M_n affordable.

    Returns an int64 array of M_n values of length ``replicates``.
    """
    if not theta > -0.5:
        raise ValidationError(f"requires theta > -1/2, got {theta}")
    if n < 1 or replicates < 1:
        raise ValidationError("n and replicates must be >= 1")
    a = theta + 0.5
    u = rng.random(replicates)
    eps = -np.expm1(np.log(u) / n)     # 1 - (max of n uniforms), stably
    w = rng.random(replicates)

    def cdf_at(j):
        # P(M_n - 1 <= j | level) = P(residual after j+1 bars <= eps)
        return _betainc_lower_mixed(a, (j + 1.0) / 2.0, eps)

    lo = np.full(replicates, -1, dtype=np.int64)
    hi = np.ones(replicates, dtype=np.int64)
    for _ in range(64):
        need = cdf_at(hi.astype(np.float64)) < w
        if not need.any():
            break
        lo = np.where(need, hi, lo)
        hi = np.where(need, np.minimum(hi, 2 ** 61) * 2, hi)
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = np.where(active, (lo + hi) // 2, 0)
        ge = cdf_at(mid.astype(np.float64)) >= w
        hi = np.where(active & ge, mid, hi)
        lo = np.where(active & ~ge, mid, lo)
    return (hi + 1).astype(np.int64)   # M_n = count + 1


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def sample_rows_csv(rows):
    """CSV text for replicate samples: substream id, then the drawn values."""
    lines = []
    for stream_id, sample in rows:
        vals = ",".join(str(int(v)) for v in sample.values)
        lines.append(f"{int(stream_id)},{vals}")
    return "\n".join(lines) + "\n"


def sample_rows_json(rows):
    """JSON-ready list for replicate samples."""
    return [
        {"substream": int(stream_id), "values": [int(v) for v in sample.values]}
        for stream_id, sample in rows
    ]
