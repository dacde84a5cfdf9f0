# g-and-k: octile summaries with Newton steps, then a Wasserstein fit on full samples.
import numpy as np

from flimo.models import gandk
from flimo.optimize import empirical_distribution

y = gandk.generate(theta=gandk.THETA_TRUE, n=1000, seed=42)

prob = gandk.build_problem(y, kind="oflimo", n_sim=1000)
res = prob.solve(prob.quantiles(seed=0))
print("octiles:", np.round(res.theta_hat, 3), "converged:", res.converged)

# with a single simulation per fit, repeating over seeds gives a sample of estimates
wprob = gandk.build_problem(y, kind="wflimo", n_sim=1)
dist = empirical_distribution(wprob, n_repeats=50, base_seed=0)
est = np.array([r.theta_hat for r in dist])
print("wasserstein median:", np.round(np.median(est, axis=0), 3))
print("wasserstein sd    :", np.round(est.std(axis=0), 3))
