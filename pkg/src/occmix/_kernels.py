"""Compiled inner loops for the probability functions in :mod:`occmix.model`."""

import math

import numpy as np
from numba import njit

_EPS = 2.220446049250313e-16


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def closed_form(mu, r, c, T, rtol, log_f, reliable):
    """Alternating-sum form of f(0..T), compensated; writes into the outputs."""
    d = 1.0 - c
    log1mr = math.log1p(-r) if r < 1.0 else -np.inf
    a = np.empty(T + 1)
    mag = np.empty(T + 1)
    lg_T = math.lgamma(T + 1.0)
    for y in range(T + 1):
        lg_y = math.lgamma(y + 1.0)
        amax = -np.inf
        for k in range(y + 1):
            j = T - y + k
            lb = lg_y - math.lgamma(k + 1.0) - math.lgamma(y - k + 1.0)
            # c mu {(1-r)^j - 1} and -d mu r j, formed without cancellation
            if j == 0:
                resident = 0.0
            elif r < 1.0:
                resident = c * mu * math.expm1(j * log1mr)
            else:
                resident = -c * mu
            transient = -d * mu * r * j
            a[k] = lb + resident + transient
            mag[k] = abs(lb) + abs(resident) + abs(transient) + 8.0
            if a[k] > amax:
                amax = a[k]
        total = 0.0
        comp = 0.0
        err = 0.0
        for k in range(y + 1):
            t = math.exp(a[k] - amax)
            err += mag[k] * t
            if k % 2 == 1:
                t = -t
            s = total + t
            if abs(total) >= abs(t):
                comp += (total - s) + t
            else:
                comp += (t - s) + total
            total = s
        total += comp
        err *= _EPS
        ok = total > 0.0 and err <= rtol * total and math.isfinite(amax)
        reliable[y] = ok
        if ok:
            log_f[y] = (
                lg_T - lg_y - math.lgamma(T - y + 1.0) + amax + math.log(total)
            )
        else:
            log_f[y] = np.nan


_LOG_SQRT_2PI = 0.9189385332046728


@njit(cache=True)
def _stirlerr(n):
    """log(n!) - log(sqrt(2 pi n) (n/e)^n)."""
    if n <= 15.0:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _LOG_SQRT_2PI
    nn = n * n
    return (
        1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - (1.0 / 1680 - 1.0 / (1188 * nn)) / nn) / nn) / nn
    ) / n


@njit(cache=True)
def _bd0(x, m):
    """x log(x/m) + m - x, accurate when x is close to m."""
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 1000):
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * math.log(x / m) + m - x


@njit(cache=True)
def log_poisson(k, lam):
    """Log Poisson probability via the saddle-point form (no large cancellations)."""
    if lam == 0.0:
        return 0.0 if k == 0 else -np.inf
    if k == 0:
        return -lam
    x = float(k)
    return -_stirlerr(x) - _bd0(x, lam) - 0.5 * math.log(2.0 * math.pi * x)


@njit(cache=True)
def _add_term(k, mu, r, c, T, lam, log1mr, log_binom, ref, acc, term):
    """Accumulate the K = k contribution to every cell; writes its log into ``term``."""
    log_w = log_poisson(k, lam)
    log_q = -(1.0 - c) * mu * r
    if k > 0:
        log_q += k * log1mr
    log_1mq = math.log(-math.expm1(log_q)) if log_q < 0.0 else -np.inf
    for y in range(T + 1):
        t = log_w + log_binom[y]
        if y > 0:
            t += y * log_1mq
        if y < T:
            t += (T - y) * log_q
        term[y] = t
        if t == -np.inf:
            continue
        if t > ref[y]:
            acc[y] = acc[y] * math.exp(ref[y] - t) + 1.0
            ref[y] = t
        else:
            acc[y] += math.exp(t - ref[y])
    return log_w


_LOG_TINY = -750.0


@njit(cache=True)
def _negligible(log_bound, ref, acc, log_eps, T):
    """True when ``log_bound[y]`` is below ``eps`` times every cell's running sum.

    A cell that is still empty counts as zero once its bound underflows.
    """
    for y in range(T + 1):
        if log_bound[y] == -np.inf:
            continue
        if acc[y] <= 0.0:
            if log_bound[y] < _LOG_TINY:
                continue
            return False
        if log_bound[y] >= log_eps + ref[y] + math.log(acc[y]):
            return False
    return True


@njit(cache=True)
def conditional_sum(mu, r, c, T, tail_eps, log_f):
    """Poisson mixture over the resident count K of Binomial(T, 1 - q_K) cells.

    Terms are added outward from the Poisson mode.  Each direction stops once
    a bound on its remaining contribution falls below ``tail_eps`` times every
    cell's partial sum.
    """
    lam = c * mu
    log1mr = math.log1p(-r) if r < 1.0 else -np.inf
    log_eps = math.log(tail_eps)
    log_binom = np.empty(T + 1)
    for y in range(T + 1):
        log_binom[y] = (
            math.lgamma(T + 1.0) - math.lgamma(y + 1.0) - math.lgamma(T - y + 1.0)
        )
    # each cell is held as ref[y] + log(acc[y]), rescaled when a term exceeds ref
    ref = np.full(T + 1, -np.inf)
    acc = np.zeros(T + 1)
    term = np.empty(T + 1)
    bound = np.empty(T + 1)
    k_mode = int(math.floor(lam))
    # downward first, so every reachable cell is nonempty before the upward
    # stopping test; stepping from k to k - 1 scales a cell's term by at most
    # rho = (k / lam) (1 - r)^-(T - y)
    k = k_mode
    while k >= 0:
        _add_term(k, mu, r, c, T, lam, log1mr, log_binom, ref, acc, term)
        if (k_mode - k) % 8 == 7 and k > 0:
            for y in range(T + 1):
                log_rho = math.log(k / lam) - (T - y) * log1mr
                if log_rho >= 0.0:
                    bound[y] = np.inf
                else:
                    bound[y] = term[y] + log_rho - math.log(-math.expm1(log_rho))
            if _negligible(bound, ref, acc, log_eps, T):
                break
        k -= 1
    # upward: terms are at most the Poisson weight, whose tail beyond k is
    # bounded geometrically once k + 2 > lam
    k = k_mode + 1
    while lam > 0.0:
        log_w = _add_term(k, mu, r, c, T, lam, log1mr, log_binom, ref, acc, term)
        if k + 2.0 > lam and (k - k_mode) % 8 == 0:
            log_tail = log_w + math.log(lam / (k + 1.0)) - math.log1p(-lam / (k + 2.0))
            for y in range(T + 1):
                bound[y] = log_tail
            if _negligible(bound, ref, acc, log_eps, T):
                break
        k += 1
    for y in range(T + 1):
        log_f[y] = ref[y] + math.log(acc[y]) if acc[y] > 0.0 else -np.inf


@njit(cache=True)
def log_cells(mu, r, c, T, max_closed_t, rtol, tail_eps, out):
    """log f(0..T): closed form where trustworthy, conditional sum elsewhere."""
    reliable = np.zeros(T + 1, dtype=np.bool_)
    if T <= max_closed_t:
        closed_form(mu, r, c, T, rtol, out, reliable)
        done = True
        for y in range(T + 1):
            if not reliable[y]:
                done = False
        if done:
            return
    alt = np.empty(T + 1)
    conditional_sum(mu, r, c, T, tail_eps, alt)
    for y in range(T + 1):
        if not reliable[y]:
            out[y] = alt[y]


PLAIN = 0
ZERO_INFLATED = 1
CONDITIONAL = 2


@njit(cache=True)
def loglik_counts(mu, r, c, psi, m, mode, max_closed_t, rtol, tail_eps):
    """Multinomial log-likelihood of frequencies m under the chosen likelihood."""
    T = m.shape[0] - 1
    lp = np.empty(T + 1)
    log_cells(mu, r, c, T, max_closed_t, rtol, tail_eps, lp)
    fplus = -math.expm1(lp[0])
    start = 0
    if mode == ZERO_INFLATED:
        log_psi = math.log(psi) if psi > 0.0 else -np.inf
        for y in range(1, T + 1):
            lp[y] += log_psi
        lp[0] = math.log1p(-psi * fplus) if psi * fplus < 1.0 else -np.inf
    elif mode == CONDITIONAL:
        log_fplus = math.log(fplus) if fplus > 0.0 else -np.inf
        for y in range(1, T + 1):
            lp[y] -= log_fplus
        start = 1
    total = 0.0
    for y in range(start, T + 1):
        if m[y] > 0:
            v = lp[y]
            if not (v > -np.inf) or math.isnan(v):
                return -np.inf
            total += m[y] * v
    return total
