"""Closed-form finite-n distributions and identities.

Conventions: geometric(p) lives on {0, 1, 2, ...} with P(G = k) = p(1-p)^k and
mean (1-p)/p. Probability formulas with gamma or rising-factorial ratios are
evaluated in log space so they stay finite for large n and theta.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .specfun import digamma, hurwitz_zeta, log_gamma

__all__ = [
    "DiscretePmf",
    "GeometricLaw",
    "PrecisionLossWarning",
    "gap_law",
    "convolve_geometric_laws",
    "mn_pmf_product",
    "mn_cdf_tail_moments",
    "tail_prob_x1",
    "binom_moment_x1",
    "ewens_pmf",
    "dt_pmf",
    "enumerate_partitions",
    "enumerate_compositions",
    "multiplicities_of",
    "indicator_prob",
    "min_law",
    "beta_stopped_geom_params",
    "k0inf_pgf",
    "k0inf_pmf",
    "complete_sample_prob",
    "k0inf_levy_atoms",
    "linf_tail",
    "linf_mean",
    "linf_second_binom",
    "beta_log_series_params",
    "pmf_to_csv",
]


class PrecisionLossWarning(UserWarning):
    """An alternating sum lost enough digits that the result may be degraded."""


@dataclass(frozen=True)
class DiscretePmf:
    """Truncated pmf on integers >= support_offset with certified tail mass.

    probs[k] is the probability of the value support_offset + k; tail_bound
    bounds the mass beyond the truncation point. Entries are exact partial
    results (never renormalized), so sum(probs) + tail_bound is 1 up to
    floating-point accumulation.
    """

    probs: np.ndarray
    tail_bound: float
    support_offset: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("DiscretePmf requires a non-empty 1-d array")
        if (p < 0.0).any() or self.tail_bound < 0.0:
            raise ValidationError("probabilities and tail_bound must be non-negative")
        total = math.fsum(p.tolist()) + self.tail_bound
        if not (1.0 - 1e-9 <= total <= 1.0 + 1e-9):
            raise ValidationError(f"pmf plus tail bound sums to {total}, not 1")
        object.__setattr__(self, "probs", p)

    def prob(self, value):
        k = value - self.support_offset
        if 0 <= k < self.probs.size:
            return float(self.probs[k])
        return 0.0

    def cdf(self, value):
        k = value - self.support_offset
        if k < 0:
            return 0.0
        if k >= self.probs.size:
            return 1.0
        return float(np.cumsum(self.probs)[k])

    def mean(self):
        """Mean of the truncated part (the tail contributes at most
        tail_bound times its unknown location, left to the caller)."""
        ks = np.arange(self.probs.size) + self.support_offset
        return float(np.dot(ks, self.probs))


@dataclass(frozen=True)
class GeometricLaw:
    """Geometric on {0, 1, ...}: P(G = k) = p (1-p)^k."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValidationError(f"geometric parameter must be in (0, 1], got {self.p}")

    def pmf(self, k):
        if k < 0:
            return 0.0
        return self.p * (1.0 - self.p) ** k

    def mean(self):
        return (1.0 - self.p) / self.p

    def var(self):
        return (1.0 - self.p) / (self.p * self.p)

    def truncated(self, tol=1e-12):
        """DiscretePmf truncation with tail bound (1-p)^(K+1) <= tol."""
        if self.p == 1.0:
            return DiscretePmf(np.array([1.0]), 0.0)
        kmax = max(1, math.ceil(math.log(tol) / math.log1p(-self.p)))
        ks = np.arange(kmax + 1)
        probs = self.p * (1.0 - self.p) ** ks
        tail = (1.0 - self.p) ** (kmax + 1)
        return DiscretePmf(probs, tail)


def gap_law(theta, n):
    """Parameters of the independent gap laws: gap i is geometric(i/(i+theta))."""
    if not theta > 0.0:
        raise ValidationError(f"gap_law requires theta > 0, got {theta}")
    if n < 1:
        raise ValidationError(f"gap_law requires n >= 1, got {n}")
    return [GeometricLaw(i / (i + theta)) for i in range(1, n + 1)]


def beta_stopped_geom_params(theta, b, n):
    """Geometric parameters tau_i = (b+i-1)/(b+i-1+theta) for the
    beta(n, b)-stopped bar count; b = 1 reproduces gap_law exactly."""
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if not b > 0.0:
        raise ValidationError(f"requires b > 0, got {b}")
    if n < 1:
        raise ValidationError(f"requires n >= 1, got {n}")
    return [GeometricLaw((b + i - 1.0) / (b + i - 1.0 + theta)) for i in range(1, n + 1)]


def _convolve_one_geometric(probs, p):
    """Convolve a pmf array on {0..K} with geometric(p), exactly on {0..K}.

    The recursion C[k] = p A[k] + (1-p) C[k-1] is a one-pole filter; it is
    evaluated in rescaled chunks so the closed form stays in range, and every
    quantity is non-negative, so no cancellation occurs.
    """
    q = 1.0 - p
    if q == 0.0:
        return probs.copy()
    size = probs.size
    chunk = max(1, min(size, int(600.0 / -math.log(q))))
    out = np.empty_like(probs)
    carry = 0.0
    for s in range(0, size, chunk):
        e = min(s + chunk, size)
        j = np.arange(e - s, dtype=np.float64)
        qpow = q ** j
        seg = np.cumsum(probs[s:e] / qpow) * p
        out[s:e] = seg * qpow + carry * q ** (j + 1.0)
        carry = out[e - 1]
    return out


def convolve_geometric_laws(laws, tol=1e-10):
    """Distribution of the sum of independent geometric variables.

    Returns a DiscretePmf on {0, 1, ...} truncated once the directly computed
    tail mass 1 - sum(probs) falls below tol; the entries themselves are exact
    up to floating-point rounding regardless of the truncation point.
    """
    if not laws:
        raise ValidationError("need at least one geometric law")
    if tol <= 0.0:
        raise ValidationError("tol must be positive")
    mean = sum(g.mean() for g in laws)
    sd = math.sqrt(sum(g.var() for g in laws))
    pmin = min(g.p for g in laws)
    spread = 60.0 if pmin == 1.0 else math.log(tol) / math.log1p(-pmin)
    size = int(mean + 10.0 * sd + abs(spread) + 20.0)
    while True:
        probs = np.zeros(size)
        probs[0] = 1.0
        for g in laws:
            probs = _convolve_one_geometric(probs, g.p)
        tail = max(0.0, 1.0 - math.fsum(probs.tolist()))
        if tail <= tol:
            return DiscretePmf(probs, tail)
        size = int(size * 1.6) + 20


def mn_pmf_product(theta, n, tol=1e-10):
    """Exact law of the sample maximum: 1 plus the sum of the n gap laws."""
    base = convolve_geometric_laws(gap_law(theta, n), tol=tol)
    return DiscretePmf(base.probs, base.tail_bound, support_offset=1)


def tail_prob_x1(alpha, theta, k):
    """P(X_1 > k): product of k factors (theta+i alpha)/(1+theta+(i-1) alpha)."""
    _check_alpha_theta(alpha, theta)
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    out = 1.0
    for i in range(1, k + 1):
        out *= (theta + i * alpha) / (1.0 + theta + (i - 1.0) * alpha)
    return out


def binom_moment_x1(alpha, theta, k):
    """k-th binomial moment of X_1 - 1; +infinity once alpha >= 1/(k+1)."""
    _check_alpha_theta(alpha, theta)
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if alpha > 0.0 and alpha >= 1.0 / (k + 1.0):
        return math.inf
    out = 1.0
    for i in range(1, k + 1):
        out *= (theta + i * alpha) / (1.0 - (i + 1.0) * alpha)
    return out


def mn_cdf_tail_moments(alpha, theta, n, k):
    """P(M_n <= k) through the binomial alternating sum over tail moments.

    Restricted to n <= 30: the binomial weights reach 1e8 while the answer
    lives in [0, 1], so cancellation grows with n. A PrecisionLossWarning is
    attached when the estimated loss exceeds 1e-6.
    """
    _check_alpha_theta(alpha, theta)
    if n < 1 or n > 30:
        raise ValidationError(f"alternating-sum route requires 1 <= n <= 30, got n={n}")
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    total = 0.0
    comp = 0.0
    loss = 0.0
    for j in range(n + 1):
        log_er = 0.0
        log_mag = 0.0
        for i in range(1, k + 1):
            num = theta + i * alpha
            den = 1.0 + theta + (i - 1.0) * alpha
            g1 = log_gamma(num + j)
            g2 = log_gamma(num)
            g3 = log_gamma(den + j)
            g4 = log_gamma(den)
            log_er += g1 - g2 - g3 + g4
            log_mag += abs(g1) + abs(g2) + abs(g3) + abs(g4)
        term = math.comb(n, j) * math.exp(log_er)
        # first-order error: each log-gamma contributes ~eps of its own
        # magnitude to log_er, hence term * log_mag * eps absolutely
        loss += term * (log_mag + 1.0) * 1e-16
        signed = -term if j % 2 else term
        y = signed - comp
        t = total + y
        comp = (t - total) - y
        total = t
    if loss > 1e-6:
        warnings.warn(
            f"alternating sum lost ~{loss:.1e} absolute precision at n={n}, k={k}",
            PrecisionLossWarning, stacklevel=2)
    return total


def ewens_pmf(theta, multiplicities):
    """Probability of a partition given as {cluster size j: count m_j}."""
    if not theta > 0.0:
        raise ValidationError(f"ewens_pmf requires theta > 0, got {theta}")
    if not multiplicities:
        raise ValidationError("empty partition")
    n = 0
    k = 0
    for j, m in multiplicities.items():
        if j < 1 or m < 0 or j != int(j) or m != int(m):
            raise ValidationError(f"bad multiplicity entry {j}: {m}")
        n += j * m
        k += m
    if n < 1:
        raise ValidationError("partition must have positive total size")
    log_p = (log_gamma(n + 1.0) + k * math.log(theta)
             - (log_gamma(theta + n) - log_gamma(theta)))
    for j, m in multiplicities.items():
        if m:
            log_p -= log_gamma(m + 1.0) + m * math.log(j)
    return math.exp(log_p)


def dt_pmf(theta, composition):
    """Probability of an appearance/value-ordered composition (n_1, ..., n_k)."""
    if not theta > 0.0:
        raise ValidationError(f"dt_pmf requires theta > 0, got {theta}")
    parts = [int(p) for p in composition]
    if not parts or any(p < 1 for p in parts):
        raise ValidationError("composition parts must be positive")
    n = sum(parts)
    k = len(parts)
    log_p = (log_gamma(n + 1.0) + k * math.log(theta)
             - (log_gamma(theta + n) - log_gamma(theta)))
    tail = n
    for p in parts:
        log_p -= math.log(tail)
        tail -= p
    return math.exp(log_p)


def multiplicities_of(parts):
    """Multiplicity map {part: count} of a composition or partition."""
    out = {}
    for p in parts:
        out[int(p)] = out.get(int(p), 0) + 1
    return out


def enumerate_partitions(n):
    """All partitions of n as multiplicity maps, first part descending."""
    if n < 1 or n > 25:
        raise ValidationError(f"partition enumeration supports 1 <= n <= 25, got {n}")

    def rec(remaining, maxpart):
        if remaining == 0:
            yield ()
            return
        for first in range(min(remaining, maxpart), 0, -1):
            for rest in rec(remaining - first, first):
                yield (first,) + rest

    for parts in rec(n, n):
        yield multiplicities_of(parts)


def enumerate_compositions(n):
    """All 2^(n-1) compositions of n as tuples, by first-part splits."""
    if n < 1 or n > 14:
        raise ValidationError(f"composition enumeration supports 1 <= n <= 14, got {n}")

    def rec(remaining):
        if remaining == 0:
            yield ()
            return
        for first in range(1, remaining + 1):
            for rest in rec(remaining - first):
                yield (first,) + rest

    yield from rec(n)


def indicator_prob(theta, i):
    """P(gap i is positive) = theta/(i+theta), the same for every n >= i."""
    if not theta > 0.0:
        raise ValidationError(f"indicator_prob requires theta > 0, got {theta}")
    if i < 1:
        raise ValidationError(f"indicator_prob requires i >= 1, got {i}")
    return theta / (i + theta)


def min_law(theta, n):
    """Law of the sample minimum minus one: geometric(n/(n+theta))."""
    if not theta > 0.0:
        raise ValidationError(f"min_law requires theta > 0, got {theta}")
    if n < 1:
        raise ValidationError(f"min_law requires n >= 1, got {n}")
    return GeometricLaw(n / (n + theta))


# ---------------------------------------------------------------------------
# the limiting number of missing values
# ---------------------------------------------------------------------------

def k0inf_pgf(theta, z):
    """Generating function of the limiting number of missing values."""
    if not theta > 0.0:
        raise ValidationError(f"k0inf_pgf requires theta > 0, got {theta}")
    if not -1.0 <= z <= 1.0:
        raise ValidationError(f"k0inf_pgf requires z in [-1, 1], got {z}")
    return math.exp(log_gamma(1.0 + theta) + log_gamma(1.0 + (1.0 - z) * theta)
                    - log_gamma(1.0 + (2.0 - z) * theta))


def complete_sample_prob(theta):
    """Probability that no value below the maximum is missing in the limit."""
    return k0inf_pgf(theta, 0.0)


def k0inf_levy_atoms(theta, kmax):
    """Weights lambda_1..lambda_kmax of the compound-Poisson representation.

    These are the power-series coefficients of log of the generating function
    (minus its value at zero), written through digamma and Hurwitz zeta.
    """
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if kmax < 1:
        raise ValidationError(f"requires kmax >= 1, got {kmax}")
    atoms = [theta * (digamma(1.0 + 2.0 * theta) - digamma(1.0 + theta))]
    for k in range(2, kmax + 1):
        atoms.append(theta ** k / k
                     * (hurwitz_zeta(k, 1.0 + theta) - hurwitz_zeta(k, 1.0 + 2.0 * theta)))
    return atoms


def k0inf_pmf(theta, tol=1e-10):
    """Pmf of the limiting number of missing values, certified tail bound.

    Built from the compound-Poisson representation: with atom weights
    lambda_k, the coefficients E_m of exp(sum lambda_k z^k) satisfy
    m E_m = sum_{k<=m} k lambda_k E_{m-k}, and the pmf is pgf(0) * E_m.
    Every term is non-negative, so the recursion cannot cancel and
    1 - sum(probs) certifies the truncation tail.
    """
    if tol <= 0.0:
        raise ValidationError("tol must be positive")
    g0 = complete_sample_prob(theta)
    size = 64
    while True:
        atoms = k0inf_levy_atoms(theta, size)
        e = np.zeros(size + 1)
        e[0] = 1.0
        klam = np.arange(1, size + 1) * np.asarray(atoms)
        for m in range(1, size + 1):
            e[m] = np.dot(klam[:m], e[m - 1::-1]) / m
        probs = g0 * e
        tail = max(0.0, 1.0 - math.fsum(probs.tolist()))
        if tail <= tol:
            return DiscretePmf(probs, tail)
        if size > 1_000_000:
            raise ValidationError("tolerance unreachable (theta extremely large?)")
        size *= 2


# ---------------------------------------------------------------------------
# ties at the maximum, in the limit
# ---------------------------------------------------------------------------

def linf_tail(theta, k):
    """Limiting tail P(L > k) = (1)_k / (1+theta)_k."""
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if k < 0:
        raise ValidationError(f"requires k >= 0, got {k}")
    if k == 0:
        return 1.0
    return math.exp(log_gamma(k + 1.0) + log_gamma(1.0 + theta) - log_gamma(1.0 + theta + k))


def linf_mean(theta):
    """Limiting mean of the tie count: theta/(theta-1), infinite for theta <= 1."""
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if theta <= 1.0:
        return math.inf
    return theta / (theta - 1.0)


def linf_second_binom(theta):
    """Limiting second binomial moment: theta/((theta-1)(theta-2)) past theta = 2."""
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if theta <= 2.0:
        return math.inf
    return theta / ((theta - 1.0) * (theta - 2.0))


def beta_log_series_params(a, b, jmax):
    """Bernoulli/exponential parameters whose weighted series reproduces
    -log of a beta(a, b) variable, plus the truncated tail's exact mean.

    Term j is an independent Bernoulli(b/(a+b+j)) times an exponential with
    rate a+j; the tail mean of the dropped terms telescopes into a digamma
    difference, reported as the truncation bound.
    """
    if not (a > 0.0 and b > 0.0):
        raise ValidationError(f"requires a, b > 0, got a={a}, b={b}")
    if jmax < 0:
        raise ValidationError(f"requires jmax >= 0, got {jmax}")
    params = [(b / (a + b + j), a + j) for j in range(jmax + 1)]
    tail_mean = digamma(a + b + jmax + 1.0) - digamma(a + jmax + 1.0)
    return params, tail_mean


def pmf_to_csv(pmf):
    """Two-column CSV (value, probability) with a trailing tail-bound record."""
    lines = ["value,probability"]
    for k, p in enumerate(pmf.probs):
        lines.append(f"{k + pmf.support_offset},{float(p)!r}")
    lines.append(f"tail_bound,{float(pmf.tail_bound)!r}")
    return "\n".join(lines) + "\n"


def _check_alpha_theta(alpha, theta):
    if not (0.0 <= alpha < 1.0):
        raise ValidationError(f"requires 0 <= alpha < 1, got alpha={alpha}")
    if not theta > -alpha:
        raise ValidationError(f"requires theta > -alpha, got theta={theta}, alpha={alpha}")
