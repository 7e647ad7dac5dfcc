"""Extended-precision oracle for the normalized alpha differences.

Builds beta_k = (c/k) * sum_{n>=k} u_n with u_n = 1/sqrt(n^3 l(n)) from
direct summation to M terms plus an integral tail, runs the renewal
recursion alpha_n = sum_k beta_k alpha_{n-k} in numpy longdouble, and
prints sup (alpha_n - alpha_{n+1}) * sqrt(n^3 / l(n)) over 100 <= n <= 1e5.
"""
import sys
import mpmath as mp
import numpy as np

mp.mp.dps = 30
LD = np.longdouble
M = 10**7
N = 10**5 + 2


def ell_np(n, family):
    if family == "const":
        return np.ones_like(n)
    return np.maximum(1.0, np.log(n))


def ell_mp(x, family):
    if family == "const":
        return mp.mpf(1)
    return max(mp.mpf(1), mp.log(x))


def run(family):
    n = np.arange(1, M + 1, dtype=LD)
    u = 1 / np.sqrt(n**3 * ell_np(n, family))
    a = M + 1
    uf = lambda x: 1 / mp.sqrt(x**3 * ell_mp(x, family))
    tail_u = mp.quad(uf, [a, 10 * a, 100 * a, mp.inf]) + uf(a) / 2 - mp.diff(uf, a) / 12
    # T_k = sum_{n>=k} u_n for k = 1..M
    T = np.cumsum(u[::-1])[::-1] + LD(str(tail_u))
    H = np.cumsum(1 / n)
    Hf = lambda x: mp.log(x) + mp.euler + 1 / (2 * x) - 1 / (12 * x**2)
    hf = lambda x: Hf(x) * uf(x)
    tail_h = mp.quad(hf, [a, 10 * a, 100 * a, mp.inf]) + hf(a) / 2 - mp.diff(hf, a) / 12
    total = np.sum(H * u) + LD(str(tail_h))
    c = 1 / total
    k = np.arange(1, N + 1, dtype=LD)
    beta = c * T[:N] / k
    alpha = np.zeros(N + 1, dtype=LD)
    alpha[0] = 1
    rb = beta  # beta[0] = beta_1
    for m in range(1, N + 1):
        alpha[m] = np.dot(rb[:m], alpha[m - 1 :: -1][:m])
    nn = np.arange(100, 10**5 + 1)
    diff = alpha[nn] - alpha[nn + 1]
    ratio = diff * np.sqrt(nn.astype(LD) ** 3 / ell_np(nn.astype(LD), family))
    print(family, "c =", repr(float(c)))
    print(family, "min diff", float(diff.min()))
    print(family, "sup ratio", repr(float(ratio.max())), "at n =", int(nn[ratio.argmax()]))
    print(family, "ratio at 1e5", repr(float(ratio[-1])))
    print(family, "alpha[1e5]", repr(float(alpha[10**5])))


if __name__ == "__main__":
    for fam in sys.argv[1:] or ["const", "log"]:
        run(fam)
