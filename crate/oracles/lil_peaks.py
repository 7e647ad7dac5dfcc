"""Monte Carlo calibration of the LIL peak statistic for IID N(0,1) steps.

peak = max_{3<=n<=N} S_n / sqrt(2 n max(log log n, log log 3)).
Prints the median of the peak law and the probability that a 32-rep
median falls in [0.85, 1.10], estimated by resampling.
"""
import sys

import numpy as np

N = int(float(sys.argv[1])) if len(sys.argv) > 1 else 10**7
REPS = int(sys.argv[2]) if len(sys.argv) > 2 else 200
CHUNK = 10**6
LNLN3 = np.log(np.log(3.0))

rng = np.random.default_rng(20261016)
peaks = np.empty(REPS)
early = np.empty(REPS)
for r in range(REPS):
    s0, best, best_early = 0.0, -np.inf, -np.inf
    for start in range(1, N + 1, CHUNK):
        stop = min(start + CHUNK, N + 1)
        n = np.arange(start, stop, dtype=np.float64)
        s = s0 + np.cumsum(rng.standard_normal(stop - start))
        s0 = s[-1]
        d = np.sqrt(2 * n * np.maximum(np.log(np.log(np.maximum(n, 2))), LNLN3))
        ratio = s / d
        ratio[n < 3] = -np.inf
        best = max(best, ratio.max())
        if start == 1:
            best_early = ratio[: 1000].max()
    peaks[r] = best
    early[r] = best_early
med = np.median(peaks)
boot = np.median(rng.choice(peaks, size=(20000, 32)), axis=1)
print(f"N={N} reps={REPS}")
print(f"median peak = {med:.4f}  q10 = {np.quantile(peaks, .1):.4f}  q90 = {np.quantile(peaks, .9):.4f}")
print(f"fraction of peaks attained for n <= 1000: {np.mean(early >= peaks):.3f}")
print(f"P(32-rep median in [0.85, 1.10]) ~ {np.mean((boot >= 0.85) & (boot <= 1.10)):.3f}")
print(f"P(32-rep median > 1.10) ~ {np.mean(boot > 1.10):.3f}")
