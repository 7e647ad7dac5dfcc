"""Pass probability of the FLIL no-exceedance check for i.i.d. N(0,1) steps.

Across the ladder 1e5, 1e6, 1e7 the walk is sampled through Gaussian block
increments: for a block of length L, the increment and the block integral of
the centred walk are jointly normal with var L, var L^3/3 and cov L^2/2.
Discrete corrections are O(n^-1/2) relative and ignored.  Prints the
per-replication exceedance rates and the probability that the max over
32 replications stays below 1.15 (endpoint) and 1.15/sqrt(3) (integral).
"""
import numpy as np

LADDER = [10**5, 10**6, 10**7]
REPS = 32
SIMS = 2_000_000


def scale(n):
    return np.sqrt(2 * n * np.log(np.log(n)))


def main():
    rng = np.random.default_rng(20261016)
    b = np.zeros(SIMS)
    area = np.zeros(SIMS)
    t = 0
    end_hit = np.zeros(SIMS, bool)
    int_hit = np.zeros(SIMS, bool)
    for n in LADDER:
        L = n - t
        cov = np.array([[L, L**2 / 2], [L**2 / 2, L**3 / 3]], float)
        z = rng.multivariate_normal([0, 0], cov, size=SIMS)
        area += b * L + z[:, 1]
        b += z[:, 0]
        t = n
        d = scale(n)
        end_hit |= b / d > 1.15
        int_hit |= area / (n * d) > 1.15 / np.sqrt(3)
    pe, pi, pa = end_hit.mean(), int_hit.mean(), (end_hit | int_hit).mean()
    print(f"per replication: endpoint {pe:.5f}, integral {pi:.5f}, either {pa:.5f}")
    print(f"P(32-replication max within both limits) = {(1 - pa) ** REPS:.4f}")
    print(f"P(endpoint only) = {(1 - pe) ** REPS:.4f}, P(integral only) = {(1 - pi) ** REPS:.4f}")


if __name__ == "__main__":
    main()
