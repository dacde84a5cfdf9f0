"""The objective is a plain deterministic function once the quantiles are drawn."""
import numpy as np

from flimo.models import gandk
from flimo.objective import evaluate
from flimo.randomness import make_quantile_matrix

y = gandk.generate(seed=1)
spec = gandk.octile_objective(1000)
obs = gandk.observed_summary(y)

# one matrix of uniforms, reused for every evaluation
R = make_quantile_matrix(seed=7, n_sim=50, n_draw=8)
print(R.entries.shape)

# scanning g with the other parameters at their true values: a smooth curve,
# no Monte Carlo jitter between neighbouring points
for g in np.linspace(1.0, 3.0, 9):
    print(f"g={g:.2f}  J={evaluate(spec, [3.0, 1.0, g, 0.5], R, obs):.6f}")

# a new seed gives a different, equally smooth curve
R2 = make_quantile_matrix(seed=8, n_sim=50, n_draw=8)
print(evaluate(spec, gandk.THETA_TRUE, R, obs), evaluate(spec, gandk.THETA_TRUE, R2, obs))
