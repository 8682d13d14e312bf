"""Run DPnP on a sharp linear problem and watch annealing approach the posterior.

With a fixed ``eta`` the chain settles on ``pi_eta``, a smoothed version of the
posterior.  Shrinking ``eta`` over the run moves the final law toward the
posterior itself, at the cost of slower mixing at the small levels.
"""

from diffpnp import DpnpProblem, GaussianMixtureOracle, make_linear_beta_schedule, run_many
from diffpnp.benchmarks import sharp_linear
from diffpnp.dpnp import make_constant_plan, make_geometric_plan
from diffpnp.verify import binned_tv, grid_pi_eta, grid_posterior, make_grid, tv_distance

b = sharp_linear()
s = make_linear_beta_schedule()
grid = make_grid(b.prior, 2001)
post = grid_posterior(b.prior, b.model, b.y, grid)

for eta_K in (0.4, 0.15, 0.05):
    plan = make_constant_plan(0.4, 20) if eta_K == 0.4 else make_geometric_plan(0.4, eta_K, 4, 20)
    x, diag = run_many(DpnpProblem(b.y, b.model, GaussianMixtureOracle(b.prior, s), s, plan), 2000, seed=0)
    gap = tv_distance(grid_pi_eta(b.prior, b.model, b.y, eta_K, grid), post)
    print(f"eta_K={eta_K:<5} TV(samples, posterior)={binned_tv(x[:, 0], post):.4f}   "
          f"TV(pi_eta, posterior)={gap:.4f}")
