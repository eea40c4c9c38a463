"""Scalar special functions and semi-infinite oscillatory quadrature.

Everything in this module is a pure function of its arguments. The functions
are deliberately self-contained (no numpy): they sit below the samplers and
the exact-law code and are called from tight loops one value at a time.
"""

import math
from dataclasses import dataclass

from .errors import ConvergenceError, ValidationError

__all__ = [
    "QuadratureResult",
    "log_gamma",
    "pochhammer",
    "hyp2f1",
    "bessel_j",
    "bessel_j_zeros",
    "integrate_bessel_tail",
    "reg_gamma_p",
    "reg_gamma_q",
    "normal_cdf",
    "betainc_lower",
    "digamma",
    "hurwitz_zeta",
]


@dataclass(frozen=True)
class QuadratureResult:
    """Value of an integral together with a certified-quality error estimate.

    abs_error_estimate bounds quadrature error plus series-truncation error
    in the same units as value; evaluations counts integrand calls.
    """

    value: float
    abs_error_estimate: float
    evaluations: int

    def __post_init__(self):
        if self.abs_error_estimate < 0:
            raise ValidationError("abs_error_estimate must be >= 0")
        if self.evaluations < 1:
            raise ValidationError("evaluations must be >= 1")


# ---------------------------------------------------------------------------
# gamma family
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(x):
    """Natural log of the gamma function for x > 0.

    Lanczos rational approximation; the reflection formula handles x < 0.5 so
    the rational part only ever sees arguments >= 0.5.
    """
    if not x > 0.0:
        raise ValidationError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # log Gamma(x) = log(pi / sin(pi x)) - log Gamma(1 - x)
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    xm = x - 1.0
    acc = _LANCZOS_C[0]
    for i in range(1, 9):
        acc += _LANCZOS_C[i] / (xm + i)
    t = xm + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (xm + 0.5) * math.log(t) - t + math.log(acc)


def pochhammer(x, n):
    """Rising factorial (x)_n as a direct n-term product.

    Exact semantics for every real x, including zero and negative values,
    which matters for the terminating hypergeometric series.
    """
    if n < 0 or n != int(n):
        raise ValidationError(f"pochhammer requires integer n >= 0, got {n}")
    out = 1.0
    for i in range(int(n)):
        out *= x + i
    return out


def digamma(x):
    """Logarithmic derivative of gamma, x > 0.

    Recurs upward to x >= 10 and then uses the asymptotic expansion with
    Bernoulli-number coefficients.
    """
    if not x > 0.0:
        raise ValidationError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # B_2/2, B_4/4, ... B_14/14 over x^{2k}
    tail = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (
        1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))))
    return acc + math.log(x) - 0.5 / x - tail


_BERNOULLI_EVEN = (
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0,
    5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0,
)


def hurwitz_zeta(s, q):
    """Hurwitz zeta for integer s >= 2 and q > 0.

    Direct summation of the first terms plus an Euler-Maclaurin tail. For
    large s the direct sum alone converges geometrically and the tail is
    skipped once terms fall below working precision.
    """
    if s != int(s) or s < 2:
        raise ValidationError(f"hurwitz_zeta requires integer s >= 2, got {s}")
    if not q > 0.0:
        raise ValidationError(f"hurwitz_zeta requires q > 0, got {q}")
    s = int(s)
    # push the Euler-Maclaurin expansion point far enough out that the
    # correction terms ((s+2k)/a)^2 shrink fast
    a_target = max(20.0, 1.5 * s)
    direct = 0.0
    j = 0
    while q + j < a_target:
        term = (q + j) ** (-s)
        direct += term
        j += 1
        if term < 1e-18 * direct:
            return direct  # geometric regime, tail negligible
    a = q + j
    tail = a ** (1.0 - s) / (s - 1.0) + 0.5 * a ** (-s)
    power = a ** (-s - 1.0)  # a^{-(s+2k-1)} for k = 1
    fact = float(s)  # (s)_{2k-1} for k = 1
    for k, b2k in enumerate(_BERNOULLI_EVEN, start=1):
        tail += b2k / math.factorial(2 * k) * fact * power
        power /= a * a
        fact *= (s + 2 * k - 1) * (s + 2 * k)
    return direct + tail


def reg_gamma_p(a, x):
    """Regularized lower incomplete gamma P(a, x), a > 0, x >= 0."""
    if not a > 0.0:
        raise ValidationError(f"reg_gamma_p requires a > 0, got {a}")
    if x < 0.0:
        raise ValidationError(f"reg_gamma_p requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_contfrac(a, x)


def reg_gamma_q(a, x):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if not a > 0.0:
        raise ValidationError(f"reg_gamma_q requires a > 0, got {a}")
    if x < 0.0:
        raise ValidationError(f"reg_gamma_q requires x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def _gamma_p_series(a, x):
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total * math.exp(a * math.log(x) - x - log_gamma(a))
    raise ConvergenceError("incomplete gamma series did not converge")


def _gamma_q_contfrac(a, x):
    # modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * math.exp(a * math.log(x) - x - log_gamma(a))
    raise ConvergenceError("incomplete gamma continued fraction did not converge")


def normal_cdf(x):
    """Standard normal distribution function, absolute error below 1e-12."""
    if x != x:  # NaN
        raise ValidationError("normal_cdf requires a real argument")
    if x == 0.0:
        return 0.5
    half = 0.5 * reg_gamma_q(0.5, 0.5 * x * x)  # = 0.5 erfc(|x|/sqrt 2)
    return half if x < 0.0 else 1.0 - half


def betainc_lower(a, b, x):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].

    Uses the all-positive power series around 0 (rescaled on the fly so huge
    intermediate terms cannot overflow) after reducing to the branch with
    x below the mean; accurate for very lopsided shapes such as b of order
    1e6 with b*x moderate, which the stopped-count samplers rely on.
    """
    if not (a > 0.0 and b > 0.0):
        raise ValidationError(f"betainc_lower requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"betainc_lower requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - betainc_lower(b, a, 1.0 - x)
    log_pref = (a * math.log(x) + b * math.log1p(-x)
                + log_gamma(a + b) - log_gamma(a + 1.0) - log_gamma(b))
    term = 1.0
    total = 1.0
    scale_log = 0.0
    n = 0
    while True:
        term *= (a + b + n) / (a + 1.0 + n) * x
        total += term
        n += 1
        if term < 1e-17 * total:
            break
        if total > 1e250:
            total *= 1e-250
            term *= 1e-250
            scale_log += 250.0 * math.log(10.0)
        if n > 10_000_000:
            raise ConvergenceError("incomplete beta series did not converge")
    value = math.exp(log_pref + math.log(total) + scale_log)
    return min(value, 1.0)


# ---------------------------------------------------------------------------
# Gauss hypergeometric
# ---------------------------------------------------------------------------

def hyp2f1(a, b, c, z):
    """Gauss hypergeometric 2F1(a, b; c; z) for real z < 1.

    Defining series on |z| < 1; the Pfaff transformation maps z <= -1 into
    (0, 1). Termination requires three consecutive negligible terms so a
    single accidentally small term cannot stop the sum early.
    """
    if c <= 0.0 and c == int(c):
        raise ValidationError(f"hyp2f1 requires c not a non-positive integer, got c={c}")
    if z >= 1.0:
        raise ValidationError(f"hyp2f1 requires z < 1, got z={z}")
    if z <= -1.0:
        # 2F1(a,b;c;z) = (1-z)^(-a) 2F1(a, c-b; c; z/(z-1))
        return (1.0 - z) ** (-a) * hyp2f1(a, c - b, c, z / (z - 1.0))
    term = 1.0
    total = 1.0
    small_streak = 0
    for n in range(2_000_000):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) <= 1e-16 * abs(total):
            small_streak += 1
            if small_streak == 3:
                return total
        else:
            small_streak = 0
    raise ConvergenceError("2F1 series did not converge (z too close to 1?)")


# ---------------------------------------------------------------------------
# Bessel J
# ---------------------------------------------------------------------------

def bessel_j(nu, x):
    """Bessel function of the first kind, nu >= 0, x >= 0.

    Ascending power series for x <= max(12, 2 nu); beyond that, Hankel
    asymptotic expansions seed the fractional orders mu, mu+1 in [0, 2) and
    the standard three-term recurrence walks upward to nu, which is stable
    there because the region guarantees nu < x/2.
    """
    if nu < 0.0 or x < 0.0:
        raise ValidationError(f"bessel_j requires nu >= 0 and x >= 0, got nu={nu}, x={x}")
    if x <= max(12.0, 2.0 * nu):
        return _bessel_j_series(nu, x)
    mu = nu - math.floor(nu)
    jm = _bessel_j_asymptotic(mu, x)
    if nu == mu:
        return jm
    jn = _bessel_j_asymptotic(mu + 1.0, x)
    order = mu + 1.0
    while order < nu - 0.5:
        jm, jn = jn, (2.0 * order / x) * jn - jm
        order += 1.0
    return jn


def _bessel_j_series(nu, x):
    if x == 0.0:
        return 1.0 if nu == 0.0 else 0.0
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    comp = 0.0  # Kahan compensation: the largest terms dominate the error
    k = 0
    while True:
        term *= -q / ((k + 1.0) * (nu + k + 1.0))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        k += 1
        if abs(term) < 1e-17 * (abs(total) + 1e-300) and k > 0.5 * x:
            break
        if k > 1000:
            raise ConvergenceError("Bessel series did not converge")
    return total * math.exp(nu * math.log(0.5 * x) - log_gamma(nu + 1.0))


def _bessel_j_asymptotic(mu, x):
    # Hankel expansion: J_mu(x) ~ sqrt(2/(pi x)) (P cos(chi) - Q sin(chi))
    four_mu2 = 4.0 * mu * mu
    p_sum = 1.0
    q_sum = 0.0
    term = 1.0
    prev = math.inf
    for k in range(1, 60):
        term *= (four_mu2 - (2.0 * k - 1.0) ** 2) / (8.0 * k * x)
        if abs(term) >= prev:
            break  # divergent tail reached; truncate at the smallest term
        if k % 2 == 1:
            q_sum += term if k % 4 == 1 else -term
        else:
            p_sum += term if k % 4 == 0 else -term
        prev = abs(term)
        if prev < 1e-18:
            break
    chi = x - (0.5 * mu + 0.25) * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p_sum * math.cos(chi) - q_sum * math.sin(chi))


def _mcmahon_zero_guess(nu, k):
    beta = (k + 0.5 * nu - 0.25) * math.pi
    mu = 4.0 * nu * nu
    return beta - (mu - 1.0) / (8.0 * beta) \
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * beta) ** 3)


def bessel_j_zeros(nu, count):
    """First `count` positive zeros of J_nu, in increasing order.

    Marches from just above nu (J_nu is positive there) in steps of pi/4,
    which is smaller than the minimal spacing of consecutive zeros, so each
    sign change brackets exactly one zero; bisection then refines it. The
    McMahon asymptotic guess fast-forwards the march once it is reliable.
    """
    if nu < 0.0:
        raise ValidationError(f"bessel_j_zeros requires nu >= 0, got {nu}")
    if count < 1:
        return []
    zeros = []
    step = 0.25 * math.pi
    x_prev = max(nu, 0.3)
    f_prev = bessel_j(nu, x_prev)
    k = 1
    while len(zeros) < count:
        guess = _mcmahon_zero_guess(nu, k)
        if k > nu + 1 and guess - 0.5 > x_prev:
            # safe to jump: McMahon is well within half a spacing here
            x_prev = guess - 0.5
            f_prev = bessel_j(nu, x_prev)
        while True:
            x_next = x_prev + step
            f_next = bessel_j(nu, x_next)
            if (f_prev < 0.0) != (f_next < 0.0):
                break
            x_prev, f_prev = x_next, f_next
        lo, hi, flo = x_prev, x_next, f_prev
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = bessel_j(nu, mid)
            if (flo < 0.0) != (fm < 0.0):
                hi = mid
            else:
                lo, flo = mid, fm
            if hi - lo < 1e-13 * max(1.0, hi):
                break
        zeros.append(0.5 * (lo + hi))
        x_prev, f_prev = x_next, f_next
        k += 1
    return zeros


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

# Gauss-Kronrod 15-point rule on [-1, 1] with the embedded 7-point Gauss rule.
_KRONROD_NODES = (
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
)
_KRONROD_WEIGHTS = (
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
)
_GAUSS_WEIGHTS = (  # matched to nodes 1, 3, 5, 7 above (the Gauss subset)
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
)


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    fk = 0.0
    fg = 0.0
    for i, xn in enumerate(_KRONROD_NODES):
        w = _KRONROD_WEIGHTS[i]
        if xn == 0.0:
            fv = f(mid)
            fk += w * fv
            fg += _GAUSS_WEIGHTS[3] * fv
        else:
            fv = f(mid - half * xn) + f(mid + half * xn)
            fk += w * fv
            if i % 2 == 1:
                fg += _GAUSS_WEIGHTS[i // 2] * fv
    return half * fk, abs(half * (fk - fg)), 15


def _adaptive_gk(f, a, b, tol, depth=0):
    val, err, ev = _gk15(f, a, b)
    # the round-off floor keeps a tolerance below machine precision from
    # forcing full-depth refinement on every branch; the Kronrod-Gauss
    # difference itself bottoms out near 5e-16 * interval * max|f|
    if err <= tol or err <= 4e-15 * abs(val) or depth >= 24:
        return val, err, ev
    mid = 0.5 * (a + b)
    v1, e1, n1 = _adaptive_gk(f, a, mid, 0.5 * tol, depth + 1)
    v2, e2, n2 = _adaptive_gk(f, mid, b, 0.5 * tol, depth + 1)
    return v1 + v2, e1 + e2, ev + n1 + n2


def _averaged(partials):
    """Repeated pairwise averaging of the trailing partial sums (Euler style).

    The window is capped so the per-call cost stays bounded however long the
    panel series runs; 48 averaging levels reduce the alternating remainder
    far below any tolerance this module accepts.
    """
    row = list(partials[-48:])
    while len(row) > 1:
        row = [0.5 * (row[i] + row[i + 1]) for i in range(len(row) - 1)]
    return row[0]


def integrate_bessel_tail(f_smooth, nu, scale, tol=1e-8, panel_budget=10000,
                          oscillator="bessel"):
    """Integrate f_smooth(v) * J_nu(scale * v) over (0, infinity).

    Panels are cut at consecutive zeros of the oscillating factor, each panel
    integrated by adaptive Gauss-Kronrod; the alternating panel series is
    accelerated by repeated averaging of its partial sums and stops when the
    accelerated increment falls below tolerance. ``oscillator="one"``
    replaces J by the constant 1 (self-test mode for plain decaying
    integrands; panels are then unit intervals).

    Returns a QuadratureResult whose abs_error_estimate covers both the
    accumulated quadrature error and the series truncation.
    """
    if nu < 0.0:
        raise ValidationError(f"integrate_bessel_tail requires nu >= 0, got {nu}")
    if oscillator not in ("bessel", "one"):
        raise ValidationError(f"unknown oscillator mode {oscillator!r}")
    if tol <= 0.0:
        raise ValidationError("tol must be positive")

    evals = 0
    panel_tol = tol / 64.0

    if oscillator == "one":
        total = 0.0
        quad_err = 0.0
        small_streak = 0
        a = 0.0
        for _ in range(panel_budget):
            b = a + 1.0
            val, err, ev = _adaptive_gk(f_smooth, a, b, panel_tol)
            total += val
            quad_err += err
            evals += ev
            if abs(val) < 0.125 * tol:
                small_streak += 1
                if small_streak == 3:
                    return QuadratureResult(total, quad_err + 3.0 * abs(val) + 0.125 * tol, evals)
            else:
                small_streak = 0
            a = b
        raise ConvergenceError("plain-panel integral did not settle within the panel budget")

    if scale <= 0.0:
        raise ValidationError(f"oscillator scale must be positive, got {scale}")

    def integrand(v):
        return f_smooth(v) * bessel_j(nu, scale * v)

    head_panels = 2
    head = 0.0
    quad_err = 0.0
    partials = []
    prev_est = None
    est = None
    small_streak = 0
    zero_block = 64
    zeros = bessel_j_zeros(nu, zero_block)
    a = 0.0
    for m in range(panel_budget):
        if m >= len(zeros):
            zero_block *= 2
            zeros = bessel_j_zeros(nu, min(zero_block, panel_budget + 1))
        b = zeros[m] / scale
        val, err, ev = _adaptive_gk(integrand, a, b, panel_tol)
        quad_err += err
        evals += ev
        a = b
        if m < head_panels:
            head += val
            continue
        if partials:
            partials.append(partials[-1] + val)
        else:
            partials.append(val)
        if len(partials) >= 4:
            est = head + _averaged(partials)
            if prev_est is not None:
                inc = abs(est - prev_est)
                if inc < 0.5 * tol:
                    small_streak += 1
                    if small_streak == 2:
                        return QuadratureResult(est, quad_err + 2.0 * inc + 0.5 * tol, evals)
                else:
                    small_streak = 0
            prev_est = est
    raise ConvergenceError(
        "oscillatory tail did not converge within the panel budget "
        "(integrand decay may be too weak)")
