"""Independent reference values for the evidence tests.

Integrates the (unnormalized) posterior with scipy's adaptive quadrature on
fixed synthetic datasets; the Rust tests rebuild the same datasets and compare
against the printed constants.
"""
import math

import numpy as np
from scipy import integrate, optimize, special

N = 30


def design(d):
    x = np.empty((N, d))
    for i in range(N):
        row = [1.0, ((i * 7) % 11 - 5) / 5.0, math.sin(i)]
        x[i] = row[:d]
    return x


def y_logistic():
    return np.array([1.0 if (3 * i + 1) % 5 < 2 else 0.0 for i in range(N)])


def y_poisson():
    return np.array([float((5 * i + 2) % 4) for i in range(N)])


def y_gaussian():
    return np.array([math.cos(1.3 * i) + 0.2 * i / N for i in range(N)])


def loglik(family, x, y, beta):
    eta = x @ beta
    if family == "logistic":
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    if family == "poisson":
        return float(np.sum(y * eta - np.exp(eta) - special.gammaln(y + 1)))
    return float(np.sum(-0.5 * (y - eta) ** 2 - 0.5 * math.log(2 * math.pi)))


def log_prior(prior, beta):
    kind, *p = prior
    if kind == "laplace":
        k = p[0]
        return float(np.sum(math.log(k / 2) - k * np.abs(beta)))
    if kind == "gaussian":
        s = p[0]
        return float(np.sum(-0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * (beta / s) ** 2))
    if kind == "student":
        df, s = p
        c = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi) - math.log(s)
        return float(np.sum(c - (df + 1) / 2 * np.log1p(beta**2 / (df * s * s))))
    lo, hi = p
    return float(np.sum(np.where((beta >= lo) & (beta <= hi), -math.log(hi - lo), -np.inf)))


def log_z(family, x, y, prior, breaks):
    d = x.shape[1]
    f = lambda b: loglik(family, x, y, np.asarray(b)) + log_prior(prior, np.asarray(b))
    start = np.zeros(d)
    mode = optimize.minimize(lambda b: -f(b), start, method="Nelder-Mead",
                             options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000}).x
    peak = f(mode)
    width = 12.0
    lo, hi = mode - width, mode + width
    if prior[0] == "uniform":
        lo, hi = np.maximum(lo, prior[1]), np.minimum(hi, prior[2])
    g = lambda *b: math.exp(f(np.array(b[::-1])) - peak)
    pts = [list(breaks)] * d
    if d == 1:
        val, _ = integrate.quad(lambda b: g(b), lo[0], hi[0], points=pts[0] or None,
                                epsabs=0, epsrel=1e-12, limit=500)
    else:
        opts = {"epsabs": 0, "epsrel": 1e-11 if d == 2 else 1e-9, "limit": 200}
        opts_list = []
        for j in range(d):
            inside = [p for p in pts[j] if lo[j] < p < hi[j]]
            opts_list.append(dict(opts, points=inside) if inside else dict(opts))
        opts_list = opts_list[::-1]
        val, _ = integrate.nquad(g, [(lo[j], hi[j]) for j in range(d)][::-1], opts=opts_list)
    return peak + math.log(val)


def conjugate(x, y, tau):
    # y ~ N(0, I + tau² X X')
    cov = np.eye(N) + tau * tau * x @ x.T
    sign, logdet = np.linalg.slogdet(cov)
    return float(-0.5 * (N * math.log(2 * math.pi) + logdet + y @ np.linalg.solve(cov, y)))


if __name__ == "__main__":
    cases = {
        "GAUSSIAN_CONJUGATE_D3": lambda: conjugate(design(3), y_gaussian(), 1.5),
        "LOGISTIC_UNIFORM_D1": lambda: log_z("logistic", design(1), y_logistic(), ("uniform", -3.0, 3.0), [-3.0, 3.0]),
        "LOGISTIC_LAPLACE_D2": lambda: log_z("logistic", design(2), y_logistic(), ("laplace", 1.0), [0.0]),
        "POISSON_STUDENT_D2": lambda: log_z("poisson", design(2), y_poisson(), ("student", 3.0, 2.0), []),
        "GAUSSIAN_GAUSSIAN_D2_QUAD": lambda: log_z("gaussian", design(2), y_gaussian(), ("gaussian", 1.5), []),
        "POISSON_LAPLACE_D3": lambda: log_z("poisson", design(3), y_poisson(), ("laplace", 0.5), [0.0]),
    }
    for k, f in cases.items():
        print(f"const {k}: f64 = {f()!r};", flush=True)
