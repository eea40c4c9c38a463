"""Statistical verification harness.

Confronts Monte Carlo output of the samplers with the exact and limiting
laws, one named experiment per distributional claim. Replicate r of an
experiment always draws from substream(master_seed, r) and reductions fold
fixed-size blocks in index order, so a report is byte-identical for any
worker count.
"""

import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDataError,
    ResourceCapError,
    ValidationError,
)
from .exact import (
    DiscretePmf,
    beta_log_series_params,
    beta_stopped_geom_params,
    convolve_geometric_laws,
    dt_pmf,
    enumerate_compositions,
    enumerate_partitions,
    ewens_pmf,
    gap_law,
    indicator_prob,
    k0inf_pmf,
    linf_mean,
    linf_second_binom,
    linf_tail,
    min_law,
    mn_pmf_product,
)
from .limits import limit_cdf_half
from .sampler import (
    GEM,
    _LazyBars,
    compositions,
    counts_profile,
    gaps,
    sample_direct,
    sample_max_counts_half_alpha,
    size_alpha_biased_permutation,
    spec_as_dict,
    substream,
)
from .specfun import digamma, hurwitz_zeta, normal_cdf, reg_gamma_q

SIGNIFICANCE_DEFAULT = 0.001
REPLICATES_FINITE = 100_000
REPLICATES_LIMIT = 20_000

_BLOCK = 1024
_TEST_KINDS = ("chi_square", "ks", "moment_z")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestReport:
    experiment_name: str
    spec: object            # model spec the experiment sampled from, or None
    n: int
    replicates: int
    seed: int
    statistic_name: str
    test_kind: str
    statistic_value: float
    dof_or_n: int
    p_value: float
    decision: str
    notes: str

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "statistic_value", float(self.statistic_value))
        object.__setattr__(self, "dof_or_n", int(self.dof_or_n))
        object.__setattr__(self, "p_value", float(self.p_value))
        if self.test_kind not in _TEST_KINDS:
            raise ValidationError(f"unknown test_kind {self.test_kind!r}")
        if not (0.0 <= self.p_value <= 1.0):
            raise ValidationError(f"p_value must lie in [0, 1], got {self.p_value}")
        if self.decision not in ("pass", "fail"):
            raise ValidationError(f"decision must be pass or fail, got {self.decision!r}")


def report_to_json(report):
    """One JSON line per report, fields in a fixed order."""
    payload = {
        "experiment_name": report.experiment_name,
        "spec": spec_as_dict(report.spec) if report.spec is not None else None,
        "n": report.n,
        "replicates": report.replicates,
        "seed": report.seed,
        "statistic_name": report.statistic_name,
        "test_kind": report.test_kind,
        "statistic_value": report.statistic_value,
        "dof_or_n": report.dof_or_n,
        "p_value": report.p_value,
        "decision": report.decision,
        "notes": report.notes,
    }
    return json.dumps(payload, allow_nan=False, separators=(",", ":"))


def reports_to_json_lines(reports):
    return "\n".join(report_to_json(r) for r in reports) + "\n"


def format_table(reports):
    """Fixed-width human-readable summary, one row per report."""
    header = (f"{'experiment':<24}{'kind':<12}{'statistic':>14}"
              f"{'dof/n':>8}{'p_value':>12}  decision")
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.experiment_name:<24}{r.test_kind:<12}{r.statistic_value:>14.6g}"
            f"{r.dof_or_n:>8}{r.p_value:>12.4g}  {r.decision}")
    return "\n".join(lines) + "\n"


def any_hard_fail(reports):
    return any(r.decision == "fail" for r in reports)


# ---------------------------------------------------------------------------
# test statistics
# ---------------------------------------------------------------------------

class StatOutcome(NamedTuple):
    statistic_value: float
    dof_or_n: int
    p_value: float


def chi_square_gof(observed, expected, min_expected=5.0):
    """Pearson goodness of fit of integer-valued counts against a pmf.

    Support points are pooled left to right until each bin's expected count
    reaches min_expected; the final bin is open-ended and absorbs the pmf's
    certified tail mass, plus any observation outside the truncated support.
    """
    total = 0
    for c in observed.values():
        if c < 0:
            raise ValidationError("observed counts must be non-negative")
        total += int(c)
    if total < 1:
        raise ValidationError("chi_square_gof needs at least one observation")

    probs = expected.probs
    edges = []          # inclusive right edge of each closed bin, in k units
    expected_bins = []
    acc = 0.0
    for k in range(probs.size):
        acc += float(probs[k]) * total
        if acc >= min_expected:
            edges.append(k)
            expected_bins.append(acc)
            acc = 0.0
    leftover = acc + float(expected.tail_bound) * total
    if not edges:
        raise DegenerateDataError(
            "fewer than 2 bins reach the minimum expected count")
    if leftover >= min_expected:
        edges.append(probs.size)
        expected_bins.append(leftover)
    else:
        edges[-1] = probs.size
        expected_bins[-1] += leftover
    if len(edges) < 2:
        raise DegenerateDataError(
            "fewer than 2 bins reach the minimum expected count")

    edge_arr = np.asarray(edges)
    counts = [0] * len(edges)
    for value, c in observed.items():
        k = int(value) - expected.support_offset
        i = int(np.searchsorted(edge_arr, k, side="left"))
        counts[min(i, len(edges) - 1)] += int(c)

    stat = 0.0
    for o, e in zip(counts, expected_bins):
        stat += (o - e) * (o - e) / e
    dof = len(edges) - 1
    return StatOutcome(stat, dof, reg_gamma_q(dof / 2.0, stat / 2.0))


def chi_square_homogeneity(counts_a, counts_b, min_expected=5.0):
    """Pearson test that two independent batches of categories share a law.

    Categories are ranked by pooled count; the rarest ones are pooled into
    one leftover bin until every expected cell clears min_expected under the
    pooled proportions.
    """
    na = sum(counts_a.values())
    nb = sum(counts_b.values())
    if na < 1 or nb < 1:
        raise ValidationError("both batches need at least one observation")
    pooled = Counter(counts_a)
    pooled.update(counts_b)
    cats = sorted(pooled, key=lambda c: (-pooled[c], repr(c)))
    scale = min(na, nb) / (na + nb)
    keep = [c for c in cats if pooled[c] * scale >= min_expected]
    rest = cats[len(keep):]
    if rest:
        rest_total = sum(pooled[c] for c in rest)
        if rest_total * scale >= min_expected or not keep:
            keep.append(None)          # leftover bin
        # otherwise the leftover rides along with the last kept category
    if len(keep) < 2:
        raise DegenerateDataError(
            "fewer than 2 categories reach the minimum expected count")

    kept_set = set(keep)

    def binned(counter):
        out = {}
        for c, v in counter.items():
            key = c if c in kept_set else (None if None in kept_set else keep[-1])
            out[key] = out.get(key, 0) + v
        return out

    ba, bb = binned(counts_a), binned(counts_b)
    stat = 0.0
    for c in keep:
        tot_c = ba.get(c, 0) + bb.get(c, 0)
        for obs, nx in ((ba.get(c, 0), na), (bb.get(c, 0), nb)):
            e = tot_c * nx / (na + nb)
            stat += (obs - e) * (obs - e) / e
    dof = len(keep) - 1
    return StatOutcome(stat, dof, reg_gamma_q(dof / 2.0, stat / 2.0))


def chi_square_independence(table, min_expected=5.0):
    """Pearson independence test on a two-way contingency table.

    Lines with the smallest margins are pooled (columns first) until every
    expected cell clears min_expected or a 2x2 floor is reached.
    """
    t = np.array(table, dtype=np.float64)
    if t.ndim != 2:
        raise ValidationError("contingency table must be two-dimensional")
    if (t < 0).any():
        raise ValidationError("contingency counts must be non-negative")
    total = t.sum()
    if total < 1:
        raise ValidationError("contingency table needs at least one observation")

    def expected(tt):
        return np.outer(tt.sum(axis=1), tt.sum(axis=0)) / tt.sum()

    while expected(t).min() < min_expected:
        if t.shape[1] > 2 and t.shape[1] >= t.shape[0]:
            axis = 1
        elif t.shape[0] > 2:
            axis = 0
        else:
            break
        margins = t.sum(axis=1 - axis)
        i, j = sorted(np.argsort(margins, kind="stable")[:2].tolist())
        if axis == 1:
            t[:, i] += t[:, j]
            t = np.delete(t, j, axis=1)
        else:
            t[i] += t[j]
            t = np.delete(t, j, axis=0)

    if t.shape[0] < 2 or t.shape[1] < 2:
        raise DegenerateDataError("contingency table pooled below 2x2")
    e = expected(t)
    if e.min() <= 0.0:
        raise DegenerateDataError("contingency table has an empty margin")
    stat = float((((t - e) ** 2) / e).sum())
    dof = (t.shape[0] - 1) * (t.shape[1] - 1)
    return StatOutcome(stat, dof, reg_gamma_q(dof / 2.0, stat / 2.0))


def _kolmogorov_sf(lam):
    """Two-sided Kolmogorov statistic survival function Q(lam)."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        # dual series: converges fast exactly where the direct one is slow
        t = math.exp(-math.pi * math.pi / (8.0 * lam * lam))
        cdf = math.sqrt(2.0 * math.pi) / lam * (t + t ** 9 + t ** 25 + t ** 49)
        return min(1.0, max(0.0, 1.0 - cdf))
    s = 0.0
    for k in range(1, 200):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        s += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, s))


def ks_test(samples, cdf):
    """One-sample two-sided Kolmogorov-Smirnov test with asymptotic p-value."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = xs.size
    if n < 10:
        raise ValidationError(f"ks_test needs at least 10 samples, got {n}")
    if xs[0] == xs[-1]:
        raise DegenerateDataError("ks_test received constant samples")
    f = np.clip(np.array([cdf(float(x)) for x in xs]), 0.0, 1.0)
    grid = np.arange(1, n + 1, dtype=np.float64) / n
    d = float(max((grid - f).max(), (f - (grid - 1.0 / n)).max()))
    return StatOutcome(d, n, _kolmogorov_sf(math.sqrt(n) * d))


def ks_two_sample(samples_a, samples_b):
    """Two-sample Kolmogorov-Smirnov test with the small-sample-corrected
    asymptotic p-value."""
    xa = np.sort(np.asarray(samples_a, dtype=np.float64))
    xb = np.sort(np.asarray(samples_b, dtype=np.float64))
    if xa.size < 10 or xb.size < 10:
        raise ValidationError("ks_two_sample needs at least 10 samples per batch")
    if xa[0] == xa[-1] and xb[0] == xb[-1] and xa[0] == xb[0]:
        raise DegenerateDataError("ks_two_sample received constant samples")
    merged = np.concatenate([xa, xb])
    merged.sort()
    fa = np.searchsorted(xa, merged, side="right") / xa.size
    fb = np.searchsorted(xb, merged, side="right") / xb.size
    d = float(np.abs(fa - fb).max())
    en = math.sqrt(xa.size * xb.size / (xa.size + xb.size))
    p = _kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    return StatOutcome(d, int(round(en * en)), p)


def _two_sided_p(z):
    return 2.0 * normal_cdf(-abs(z))


def _mean_z(total, total_sq, count, target):
    """z-score of an empirical mean against a fixed target, with the
    spread estimated from the same integer-accumulated sums."""
    mean = total / count
    var = (total_sq - count * mean * mean) / (count - 1)
    if var <= 0.0:
        return (0.0, 1.0) if mean == target else (math.inf, 0.0)
    z = (mean - target) / math.sqrt(var / count)
    return z, _two_sided_p(z)


# ---------------------------------------------------------------------------
# replicate fan-out
# ---------------------------------------------------------------------------

def _run_blocks(replicates, threads, block_fn):
    """Map block_fn(start, stop) over fixed 1024-replicate blocks.

    The partition never depends on the worker count and results are folded
    in block order, so any reduction of the returned list is reproducible.
    """
    blocks = [(s, min(s + _BLOCK, replicates)) for s in range(0, replicates, _BLOCK)]
    workers = (os.cpu_count() or 1) if threads is None else max(1, int(threads))
    if workers == 1 or len(blocks) <= 1:
        return [block_fn(s, e) for s, e in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(block_fn, s, e) for s, e in blocks]
        return [f.result() for f in futures]


def _merge_counters(parts):
    out = Counter()
    for part in parts:
        out.update(part)
    return out


def _fmt_ps(ps):
    return "[" + ", ".join(f"{p:.3g}" for p in ps) + "]"


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

class _ExpResult(NamedTuple):
    n: int
    statistic_name: str
    outcome: StatOutcome
    notes: str
    replicates_used: int


def _exp_gap_marginals(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    laws = gap_law(cfg["theta"], n)

    def block(s, e):
        cnt = [Counter() for _ in range(n)]
        for r in range(s, e):
            g = gaps(sample_direct(spec, n, substream(seed, r))).gaps
            for i in range(n):
                cnt[i][int(g[i])] += 1
        return cnt

    parts = _run_blocks(replicates, threads, block)
    merged = [Counter() for _ in range(n)]
    for part in parts:
        for i in range(n):
            merged[i].update(part[i])
    outcomes = [chi_square_gof(merged[i], laws[i].truncated(1e-12))
                for i in range(n)]
    worst = min(range(n), key=lambda i: outcomes[i].p_value)
    notes = (f"smallest of {n} unadjusted marginal p-values, at gap index "
             f"{worst + 1}; all: {_fmt_ps([o.p_value for o in outcomes])}")
    return _ExpResult(n, "pearson_min_marginal", outcomes[worst], notes, replicates)


def _exp_gap_independence(spec, cfg, seed, replicates, threads):
    n, i, j = int(cfg["n"]), int(cfg["i"]), int(cfg["j"])
    if not (1 <= i < j <= n):
        raise ValidationError(f"need 1 <= i < j <= n, got i={i}, j={j}, n={n}")
    laws = gap_law(cfg["theta"], n)
    law_i, law_j = laws[i - 1], laws[j - 1]
    qi = [law_i.pmf(0), law_i.pmf(1), law_i.pmf(2), (1.0 - law_i.p) ** 3]
    qj = [law_j.pmf(0), law_j.pmf(1), law_j.pmf(2), (1.0 - law_j.p) ** 3]
    product = DiscretePmf(np.outer(qi, qj).ravel(), 0.0)

    def block(s, e):
        cnt = Counter()
        for r in range(s, e):
            g = gaps(sample_direct(spec, n, substream(seed, r))).gaps
            cnt[4 * min(int(g[i - 1]), 3) + min(int(g[j - 1]), 3)] += 1
        return cnt

    observed = _merge_counters(_run_blocks(replicates, threads, block))
    outcome = chi_square_gof(observed, product)
    notes = (f"joint law of gaps ({i}, {j}) truncated at 3 against the exact "
             f"product of marginals, 16 cells before pooling")
    return _ExpResult(n, "pearson_joint_vs_product", outcome, notes, replicates)


def _exp_max_identity(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    expected = mn_pmf_product(cfg["theta"], n)

    def block(s, e):
        cnt = Counter()
        for r in range(s, e):
            cnt[int(sample_direct(spec, n, substream(seed, r)).values.max())] += 1
        return cnt

    observed = _merge_counters(_run_blocks(replicates, threads, block))
    outcome = chi_square_gof(observed, expected)
    return _ExpResult(n, "pearson_maximum", outcome,
                      "sample maximum against the geometric convolution",
                      replicates)


def _exp_indicators(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    probs = [indicator_prob(cfg["theta"], i) for i in range(1, n + 1)]

    def block(s, e):
        pos = np.zeros(n, dtype=np.int64)
        for r in range(s, e):
            g = gaps(sample_direct(spec, n, substream(seed, r))).gaps
            pos += g > 0
        return pos.tolist()

    totals = [0] * n
    for part in _run_blocks(replicates, threads, block):
        for i in range(n):
            totals[i] += part[i]
    zs, ps = [], []
    for i in range(n):
        q = probs[i]
        z = (totals[i] / replicates - q) / math.sqrt(q * (1.0 - q) / replicates)
        zs.append(z)
        ps.append(_two_sided_p(z))
    worst = min(range(n), key=lambda i: ps[i])
    outcome = StatOutcome(abs(zs[worst]), replicates, ps[worst])
    notes = (f"positive-gap frequencies against their exact Bernoulli means; "
             f"smallest of {n} p-values at index {worst + 1}; all: {_fmt_ps(ps)}")
    return _ExpResult(n, "max_abs_z_indicator", outcome, notes, replicates)


def _partition_key(multiplicities):
    parts = [p for p, m in multiplicities.items() for _ in range(m)]
    return tuple(sorted(parts, reverse=True))


def _categorical_counts(spec, cfg, seed, replicates, threads, extract):
    def block(s, e):
        cnt = Counter()
        for r in range(s, e):
            cnt[extract(sample_direct(spec, int(cfg["n"]), substream(seed, r)))] += 1
        return cnt

    return _merge_counters(_run_blocks(replicates, threads, block))


def _exp_esf_frequencies(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    mults = list(enumerate_partitions(n))
    probs = np.array([ewens_pmf(cfg["theta"], m) for m in mults])
    index = {_partition_key(m): i for i, m in enumerate(mults)}
    expected = DiscretePmf(probs, 0.0)
    observed = _categorical_counts(
        spec, cfg, seed, replicates, threads,
        lambda sample: index[compositions(sample)[2].parts])
    outcome = chi_square_gof(observed, expected)
    return _ExpResult(n, "pearson_partition", outcome,
                      f"ranked partition frequencies over {len(mults)} partitions",
                      replicates)


def _composition_setup(theta, n):
    comps = list(enumerate_compositions(n))
    probs = np.array([dt_pmf(theta, c) for c in comps])
    index = {c: i for i, c in enumerate(comps)}
    return comps, DiscretePmf(probs, 0.0), index


def _exp_dt_frequencies(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    comps, expected, index = _composition_setup(cfg["theta"], n)
    observed = _categorical_counts(
        spec, cfg, seed, replicates, threads,
        lambda sample: index[compositions(sample)[0].parts])
    outcome = chi_square_gof(observed, expected)
    return _ExpResult(n, "pearson_composition", outcome,
                      f"value-ordered composition over {len(comps)} compositions",
                      replicates)


def _exp_dt_star_equality(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    comps, expected, index = _composition_setup(cfg["theta"], n)
    observed = _categorical_counts(
        spec, cfg, seed, replicates, threads,
        lambda sample: index[compositions(sample)[1].parts])
    outcome = chi_square_gof(observed, expected)
    return _ExpResult(n, "pearson_composition", outcome,
                      f"appearance-ordered composition over {len(comps)} "
                      f"compositions, same target law as the value ordering",
                      replicates)


def _exp_size_alpha_hypothesis(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    alpha = float(cfg["alpha"])
    half = replicates // 2
    if half < 1 or replicates - half < 1:
        raise ValidationError("needs at least 2 replicates to form two batches")

    def block_vo(s, e):
        cnt = Counter()
        for r in range(s, e):
            sample = sample_direct(spec, n, substream(seed, r))
            cnt[compositions(sample)[0].parts] += 1
        return cnt

    def block_perm(s, e):
        cnt = Counter()
        for r in range(s, e):
            rng = substream(seed, half + r)
            sample = sample_direct(spec, n, rng)
            ao = compositions(sample)[1].parts
            cnt[size_alpha_biased_permutation(ao, alpha, rng)] += 1
        return cnt

    counts_vo = _merge_counters(_run_blocks(half, threads, block_vo))
    counts_perm = _merge_counters(_run_blocks(replicates - half, threads, block_perm))
    outcome = chi_square_homogeneity(counts_vo, counts_perm)
    notes = (f"first {half} replicates give value-ordered compositions, the "
             f"rest give weight-(size-{alpha:g}) permuted appearance-ordered "
             f"ones; tested as two independent batches")
    return _ExpResult(n, "pearson_homogeneity", outcome, notes, replicates)


def _exp_min_independence(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    law = min_law(cfg["theta"], n)

    def block(s, e):
        joint = Counter()
        for r in range(s, e):
            sample = sample_direct(spec, n, substream(seed, r))
            joint[(int(sample.values.min()), compositions(sample)[2].parts)] += 1
        return joint

    joint = _merge_counters(_run_blocks(replicates, threads, block))
    col_totals = Counter()
    min_counts = Counter()
    truncated = Counter()
    for (m, rk), c in joint.items():
        col_totals[rk] += c
        min_counts[m] += c
        truncated[(min(m, 3), rk)] += c
    cols = sorted(col_totals, key=lambda t: (-col_totals[t], t))
    table = [[truncated.get((m, rk), 0) for rk in cols] for m in (1, 2, 3)]
    out_ind = chi_square_independence(table)
    # the truncated-at-3 row marginal is enough for independence; the full
    # minimum is tested against its exact shifted-geometric law separately
    out_gof = chi_square_gof({m - 1: c for m, c in min_counts.items()},
                             law.truncated(1e-12))
    outcome = min((out_ind, out_gof), key=lambda o: o.p_value)
    notes = (f"independence of the minimum (rows 1, 2, >=3) and the ranked "
             f"composition: p={out_ind.p_value:.3g}; minimum marginal against "
             f"its shifted geometric law: p={out_gof.p_value:.3g}; "
             f"smaller of the two reported")
    return _ExpResult(n, "pearson_min_of_two", outcome, notes, replicates)


def _exp_beta_stopped(spec, cfg, seed, replicates, threads):
    n, b = int(cfg["n"]), float(cfg["b"])
    expected = convolve_geometric_laws(
        beta_stopped_geom_params(cfg["theta"], b, n), tol=1e-12)

    def block(s, e):
        cnt = Counter()
        for r in range(s, e):
            rng = substream(seed, r)
            stop = rng.beta(n, b)
            bars = _LazyBars(spec, rng)
            cnt[int(bars.count_below(np.array([stop]))[0])] += 1
        return cnt

    observed = _merge_counters(_run_blocks(replicates, threads, block))
    outcome = chi_square_gof(observed, expected)
    notes = (f"bar count below an independent beta({n}, {b:g}) level against "
             f"the geometric convolution with shifted parameters")
    return _ExpResult(n, "pearson_stopped_count", outcome, notes, replicates)


def _exp_k0_limit(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    expected = k0inf_pmf(cfg["theta"])

    def block(s, e):
        cnt = Counter()
        for r in range(s, e):
            cnt[counts_profile(sample_direct(spec, n, substream(seed, r))).k_0] += 1
        return cnt

    observed = _merge_counters(_run_blocks(replicates, threads, block))
    outcome = chi_square_gof(observed, expected)
    notes = f"missing-value count at n={n} against its limiting law"
    return _ExpResult(n, "pearson_missing_count", outcome, notes, replicates)


def _exp_beta_log_identity(spec, cfg, seed, replicates, threads):
    a, b = float(cfg["a"]), float(cfg["b"])
    cap = float(cfg["tail_mean_cap"])
    if not cap > 0.0:
        raise ValidationError(f"tail_mean_cap must be positive, got {cap}")

    def tail_mean(j):
        return digamma(a + b + j + 1.0) - digamma(a + j + 1.0)

    jmax = 1
    while tail_mean(jmax) > cap:
        jmax *= 2
        if jmax > 50_000_000:
            raise ConvergenceError(
                f"truncation index for tail mean {cap} exceeds 5e7")
    lo = jmax // 2
    while jmax - lo > 1:
        mid = (lo + jmax) // 2
        if tail_mean(mid) > cap:
            lo = mid
        else:
            jmax = mid
    params, tail = beta_log_series_params(a, b, jmax)

    rng_series = substream(seed, 0)
    rng_beta = substream(seed, 1)
    sums = np.zeros(replicates)
    for p, rate in params:
        u = rng_series.random(replicates)
        hit = u < p
        k = int(hit.sum())
        if k:
            sums[hit] += rng_series.standard_exponential(k) / rate
    comparison = -np.log(rng_beta.beta(a, b, replicates))
    outcome = ks_two_sample(sums, comparison)
    notes = (f"truncated series (jmax={jmax}, dropped tail mean {tail:.2e}) "
             f"against -log of beta({a:g}, {b:g}) draws; vectorized single "
             f"stream, thread hint has no effect")
    return _ExpResult(jmax, "ks_two_sample", outcome, notes, replicates)


def _exp_frechet_limit(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    theta = float(cfg["theta"])
    ms = sample_max_counts_half_alpha(theta, n, replicates, substream(seed, 0))
    outcome = ks_test(ms / n, lambda x: limit_cdf_half(theta, x))
    notes = (f"scaled maxima M/n at n={n} against the closed-form limit; "
             f"lattice spacing 1/n is far below the detectable scale; "
             f"vectorized single stream, thread hint has no effect")
    return _ExpResult(n, "ks_scaled_maximum", outcome, notes, replicates)


def clt_sup_distance(theta, n, tol=1e-10):
    """Sup distance between the exact maximum CDF and the normal CDF with
    the exact mean and standard deviation, continuity corrected."""
    pmf = mn_pmf_product(theta, n, tol=tol)
    h1 = digamma(n + 1.0) - digamma(1.0)
    h2 = hurwitz_zeta(2.0, 1.0) - hurwitz_zeta(2.0, n + 1.0)
    mu = 1.0 + theta * h1
    sd = math.sqrt(theta * h1 + theta * theta * h2)
    cdf = np.cumsum(pmf.probs)
    worst = normal_cdf((pmf.support_offset - 0.5 - mu) / sd)
    for idx in range(pmf.probs.size):
        k = idx + pmf.support_offset
        gap = abs(float(cdf[idx]) - normal_cdf((k + 0.5 - mu) / sd))
        worst = max(worst, gap)
    return worst


def _exp_clt_check(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    threshold = float(cfg["threshold"])
    dist = clt_sup_distance(cfg["theta"], n)
    outcome = StatOutcome(dist, n, 1.0 if dist < threshold else 0.0)
    notes = (f"exact convolution, no Monte Carlo; sup distance between the "
             f"maximum CDF and the exact-moment normal CDF; p-value is an "
             f"indicator of distance < {threshold:g}, not a tail probability")
    return _ExpResult(n, "sup_cdf_distance", outcome, notes, 0)


# a moment z-score is only meaningful once its statistic has enough nonzero
# observations behind it; below this floor the normal approximation for a
# rare, highly skewed count is unusable and the z is skipped with a note
_MIN_MOMENT_OBS = 30


def _exp_linf_moments(spec, cfg, seed, replicates, threads):
    n = int(cfg["n"])
    theta = float(cfg["theta"])

    def block(s, e):
        acc = [0, 0, 0, 0, 0, 0, 0, 0]
        for r in range(s, e):
            ell = counts_profile(sample_direct(spec, n, substream(seed, r))).l_n
            b2 = ell * (ell - 1) // 2
            b3 = math.comb(ell, 3)
            acc[0] += ell
            acc[1] += ell * ell
            acc[2] += b2
            acc[3] += b2 * b2
            acc[4] += b3
            acc[5] += b3 * b3
            acc[6] += 1 if ell >= 2 else 0
            acc[7] += 1 if ell >= 3 else 0
        return acc

    sums = [0] * 8
    for part in _run_blocks(replicates, threads, block):
        for i in range(8):
            sums[i] += part[i]

    candidates = []
    m1 = linf_mean(theta)
    if math.isfinite(m1):
        candidates.append(("mean", sums[0], sums[1], replicates, m1))
    m2 = linf_second_binom(theta)
    if math.isfinite(m2):
        candidates.append(("second_binom", sums[2], sums[3], sums[6], m2))
    m3 = _linf_third_binom_series(theta)
    if m3 is not None:
        candidates.append(("third_binom", sums[4], sums[5], sums[7], m3))
    if not candidates:
        raise DegenerateDataError(
            f"no finite limiting moment to test at theta={theta}")

    tests = []
    skipped = []
    for name, total, total_sq, nonzero, target in candidates:
        if nonzero < _MIN_MOMENT_OBS:
            skipped.append(f"{name} ({nonzero} of {replicates} nonzero, "
                           f"needs >= {_MIN_MOMENT_OBS})")
            continue
        z, p = _mean_z(total, total_sq, replicates, target)
        tests.append((name, z, p))
    if not tests:
        raise DegenerateDataError(
            "too few nonzero tie counts for any moment z approximation "
            f"at {replicates} replicates")
    worst = min(tests, key=lambda t: t[2])
    outcome = StatOutcome(abs(worst[1]), replicates, worst[2])
    detail = ", ".join(f"{name}: z={z:.3g}, p={p:.3g}" for name, z, p in tests)
    notes = (f"tie-count moments at n={n} against limiting values ({detail}); "
             f"third binomial target summed numerically from the tail law, "
             f"no closed form assumed"
             + ("" if m3 is not None else "; third moment skipped (series "
                "diverges or converges too slowly)")
             + ("" if not skipped else "; skipped " + ", ".join(skipped)))
    return _ExpResult(n, "max_abs_z_moments", outcome, notes, replicates)


def _linf_third_binom_series(theta, rel_tol=1e-10):
    """Third binomial moment of the limiting tie count, summed from the
    tails; None when theta is too small for a usable numerical sum."""
    if theta <= 3.0:
        return None
    total = 0.0
    k = 2
    while k < 2_000_000:
        term = 0.5 * k * (k - 1) * linf_tail(theta, k)
        total += term
        # tails decay like k^(-theta), so bound the remainder by an integral
        if k > 10:
            remainder = term * k / (theta - 3.0)
            if remainder < rel_tol * total:
                return total
        k += 1
    return None


# ---------------------------------------------------------------------------
# catalog and driver
# ---------------------------------------------------------------------------

class _Entry(NamedTuple):
    fn: object
    defaults: dict
    default_replicates: int
    kind: str
    spec_fn: object


def _gem0(cfg):
    return GEM(0.0, float(cfg["theta"]))


_CATALOG = {
    "gap_marginals": _Entry(
        _exp_gap_marginals, {"theta": 1.0, "n": 10},
        REPLICATES_FINITE, "chi_square", _gem0),
    "gap_independence": _Entry(
        _exp_gap_independence, {"theta": 1.0, "n": 10, "i": 1, "j": 5},
        REPLICATES_FINITE, "chi_square", _gem0),
    "max_identity": _Entry(
        _exp_max_identity, {"theta": 1.0, "n": 10},
        REPLICATES_FINITE, "chi_square", _gem0),
    "indicators": _Entry(
        _exp_indicators, {"theta": 1.0, "n": 10},
        REPLICATES_FINITE, "moment_z", _gem0),
    "esf_frequencies": _Entry(
        _exp_esf_frequencies, {"theta": 1.0, "n": 6},
        REPLICATES_FINITE, "chi_square", _gem0),
    "dt_frequencies": _Entry(
        _exp_dt_frequencies, {"theta": 1.0, "n": 6},
        REPLICATES_FINITE, "chi_square", _gem0),
    "dt_star_equality": _Entry(
        _exp_dt_star_equality, {"theta": 1.0, "n": 6},
        REPLICATES_FINITE, "chi_square", _gem0),
    "size_alpha_hypothesis": _Entry(
        _exp_size_alpha_hypothesis, {"alpha": 0.5, "theta": 0.5, "n": 6},
        REPLICATES_FINITE, "chi_square",
        lambda cfg: GEM(float(cfg["alpha"]), float(cfg["theta"]))),
    "min_independence": _Entry(
        _exp_min_independence, {"theta": 1.0, "n": 5},
        REPLICATES_FINITE, "chi_square", _gem0),
    "beta_stopped": _Entry(
        _exp_beta_stopped, {"theta": 1.0, "b": 2.0, "n": 5},
        REPLICATES_FINITE, "chi_square", _gem0),
    "k0_limit": _Entry(
        _exp_k0_limit, {"theta": 1.0, "n": 10_000},
        REPLICATES_LIMIT, "chi_square", _gem0),
    "beta_log_identity": _Entry(
        _exp_beta_log_identity, {"a": 1.0, "b": 1.0, "tail_mean_cap": 1e-4},
        REPLICATES_FINITE, "ks", lambda cfg: None),
    "frechet_limit": _Entry(
        _exp_frechet_limit, {"theta": 0.5, "n": 10_000},
        REPLICATES_LIMIT, "ks",
        lambda cfg: GEM(0.5, float(cfg["theta"]))),
    "clt_check": _Entry(
        _exp_clt_check, {"theta": 1.0, "n": 10_000, "threshold": 0.05},
        REPLICATES_LIMIT, "ks", _gem0),
    "linf_moments": _Entry(
        _exp_linf_moments, {"theta": 8.0, "n": 1500},
        REPLICATES_LIMIT, "moment_z", _gem0),
}

EXPERIMENT_NAMES = tuple(_CATALOG)

# experiments whose target law is only asymptotically exact; a marginal
# p-value there is reported but is not strong evidence of a defect
_LIMIT_EXPERIMENTS = frozenset(
    {"k0_limit", "frechet_limit", "clt_check", "linf_moments"})


def run_experiment(name, config=None, master_seed=0, replicates=None,
                   threads=None, significance=SIGNIFICANCE_DEFAULT):
    """Run one catalog experiment and return its TestReport.

    Parameter problems raise immediately; resource or convergence failures
    during the Monte Carlo come back as a failed report with the error in
    the notes.
    """
    if name not in _CATALOG:
        raise ValidationError(
            f"unknown experiment {name!r}; known: {', '.join(EXPERIMENT_NAMES)}")
    if not (0.0 < significance < 1.0):
        raise ValidationError(f"significance must lie in (0, 1), got {significance}")
    entry = _CATALOG[name]
    cfg = dict(entry.defaults)
    if config:
        unknown = set(config) - set(entry.defaults)
        if unknown:
            raise ValidationError(
                f"experiment {name} does not take {sorted(unknown)}; "
                f"it takes {sorted(entry.defaults)}")
        cfg.update({k: v for k, v in config.items() if v is not None})
    reps = entry.default_replicates if replicates is None else int(replicates)
    if reps < 1:
        raise ValidationError(f"replicates must be >= 1, got {reps}")
    seed = int(master_seed)
    spec = entry.spec_fn(cfg)

    try:
        result = entry.fn(spec, cfg, seed, reps, threads)
    except (ResourceCapError, ConvergenceError, DegenerateDataError) as exc:
        return TestReport(
            experiment_name=name, spec=spec, n=int(cfg.get("n", 0)),
            replicates=reps, seed=seed, statistic_name="aborted",
            test_kind=entry.kind, statistic_value=0.0, dof_or_n=0,
            p_value=0.0, decision="fail",
            notes=f"{type(exc).__name__}: {exc}")

    p = result.outcome.p_value
    notes = result.notes
    if name in _LIMIT_EXPERIMENTS and 0.001 <= p <= 0.01:
        notes += ("; marginal p-value against an asymptotic target, finite-n "
                  "bias is plausible")
    return TestReport(
        experiment_name=name, spec=spec, n=result.n,
        replicates=result.replicates_used, seed=seed,
        statistic_name=result.statistic_name, test_kind=entry.kind,
        statistic_value=result.outcome.statistic_value,
        dof_or_n=result.outcome.dof_or_n, p_value=p,
        decision="pass" if p >= significance else "fail", notes=notes)


def run_suite(names=None, master_seed=0, replicates=None, threads=None,
              significance=SIGNIFICANCE_DEFAULT):
    """Run several experiments, each on its own derived master seed."""
    if names is None:
        names = EXPERIMENT_NAMES
    reports = []
    for k, name in enumerate(names):
        derived = int(np.random.SeedSequence([int(master_seed), k])
                      .generate_state(1, np.uint64)[0])
        reports.append(run_experiment(
            name, master_seed=derived, replicates=replicates,
            threads=threads, significance=significance))
    return reports
