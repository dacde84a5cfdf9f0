# Ricker map with Poisson observations; the discrete kernel needs a derivative-free optimizer.
import math

from flimo.models import ricker

y = ricker.generate(theta=ricker.THETA_TRUE, seed=5)
print("observed counts:", y[:15], "...")

prob = ricker.build_problem(y, n_sim=100)
res = prob.solve(prob.quantiles(seed=1))
log_r, sigma, phi = res.theta_hat
print(f"r={math.exp(log_r):.1f}  sigma={sigma:.3f}  phi={phi:.2f}  J={res.objective_value:.4f}")
