"""Second, independent transcription of the three energies.

Scalar loops over coordinates, no shared helpers with the package, and the
Lagrangian evaluated directly from f, g and K.
"""

import math


def _lag(problem, x, y):
    kx = [sum(problem.K[j][i] * x[i] for i in range(len(x))) for j in range(len(y))]
    return problem.f_eval(x) + sum(kx[j] * y[j] for j in range(len(y))) - problem.g_eval(y)


def _gap(problem, xs, ys, x, y):
    return _lag(problem, x, ys) - _lag(problem, xs, y)


def fast(t, x, y, vx, vy, alpha, q, p, c, r, xs, ys, problem):
    beta = t ** r
    sq = sum(v * v for v in x) + sum(v * v for v in y)
    e1 = (t ** q) ** 2 * beta * (_gap(problem, xs, ys, x, y) + c * sq / (2 * t ** p))
    out = [e1]
    for z, vz, zs in ((x, vx, xs), (y, vy, ys)):
        a = sum(((alpha - 1) * (z[i] - zs[i]) + t ** q * vz[i]) ** 2 for i in range(len(z))) / 2
        b = (alpha - 1) / 2 * (1 - q * t ** (q - 1)) * sum((z[i] - zs[i]) ** 2 for i in range(len(z)))
        out.append(a + b)
    return out


def slow(t, x, y, vx, vy, alpha, q, p, c, r, xs, ys, problem):
    beta = t ** r
    sq = sum(v * v for v in x) + sum(v * v for v in y)
    e1 = beta * (_gap(problem, xs, ys, x, y) + c * sq / (2 * t ** p))
    out = [e1]
    for z, vz, zs in ((x, vx, xs), (y, vy, ys)):
        a = sum(((alpha - 1) / t ** q * (z[i] - zs[i]) + vz[i]) ** 2 for i in range(len(z))) / 2
        b = (alpha - 1) / 2 * (q / t ** (q + 1) + 1 / t ** (2 * q)) * sum((z[i] - zs[i]) ** 2 for i in range(len(z)))
        out.append(a + b)
    return out


def strong(t, x, y, vx, vy, alpha, q, p, c, r, xb, yb, problem):
    nb = sum(v * v for v in xb) + sum(v * v for v in yb)
    return sum(slow(t, x, y, vx, vy, alpha, q, p, c, r, xb, yb, problem)) - c * t ** r / (2 * t ** p) * nb


def assumption_verdicts(alpha, q, p, c, r):
    """Eventual verdicts straight from the power-law inequalities."""
    M = q * (1 + 1 / (2 * alpha - 1))
    growth = True  # (alpha-1) t^{1-q} eventually exceeds any constant
    floor = c > 0 and (2 - p + r > 0 or (2 - p + r == 0 and q * (1 - q) / c <= 1))
    fast_int = q - p + r < -1
    slow_int = -q - p + r < -1
    persist = c > 0 and M - p + r > 0
    return {
        "growth_fast": growth, "tikhonov_floor": floor, "fast_integrable": fast_int,
        "growth_slow": growth, "slow_integrable": slow_int, "tikhonov_persistent": persist,
        "regime_fast": growth and floor and fast_int,
        "regime_slow": growth and slow_int,
        "regime_strong": growth and persist and slow_int and c > 0,
    }


TRUTH_TABLE_SETS = [
    dict(alpha=3.0, q=0.8, p=2.5, c=1.0, r=0.5),   # fast regime run
    dict(alpha=3.0, q=0.8, p=0.8, c=1.0, r=0.5),   # slow regime run
    dict(alpha=3.0, q=0.8, p=0.8, c=0.0, r=0.5),   # no regularisation
    dict(alpha=6.0, q=0.2, p=2.0, c=10.0, r=0.1),  # regression case 1
    dict(alpha=6.0, q=0.4, p=2.0, c=10.0, r=0.2),  # regression case 2
    dict(alpha=6.0, q=0.6, p=2.0, c=10.0, r=0.3),  # regression case 3
]


def energy_example_value():
    # t=1, x=(1,0), y=0, v=0, origin saddle, alpha=3, q=0.8, p=2.5, c=1, r=0.5:
    # E1 = (e - 1) + 0.5, E2 = 0.5*4 + 1*0.2 = 2.2, E3 = 0
    return math.e - 0.5 + 2.2
