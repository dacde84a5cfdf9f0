"""Fitting a normal mean and variance, checked against its closed-form optimum."""
import numpy as np

from flimo.models import normal_toy

y = normal_toy.generate(theta=(2.0, 0.5), n=100, seed=3)
prob = normal_toy.build_problem(y, m=100)

Q = prob.quantiles(seed=11)
res = prob.solve(Q)
exact = normal_toy.analytic_normal_oracle(y, Q.entries[0])

print("optimizer :", res.theta_hat, f"({res.evaluations} evaluations)")
print("closed form:", exact)
print("difference :", np.abs(res.theta_hat - exact).max())
