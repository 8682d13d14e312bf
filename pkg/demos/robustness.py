"""Perturb the score with a constant bias and measure how far DPnP drifts.

The same master seed is used for every bias level, so the chains share their
random numbers and the differences reflect the bias rather than Monte Carlo
noise.
"""

from diffpnp import DpnpProblem, GaussianMixtureOracle, make_linear_beta_schedule, run_many
from diffpnp.benchmarks import bimodal_linear
from diffpnp.dpnp import make_constant_plan
from diffpnp.prior import ScoreCorruption, corrupt
from diffpnp.verify import binned_tv, grid_pi_eta, make_grid

b = bimodal_linear()
s = make_linear_beta_schedule()
ref = grid_pi_eta(b.prior, b.model, b.y, b.eta, make_grid(b.prior, 401))
base = GaussianMixtureOracle(b.prior, s)
for bias in (0.0, 0.1, 0.3):
    oracle = base if bias == 0 else corrupt(base, ScoreCorruption(additive_bias=bias))
    x, _ = run_many(DpnpProblem(b.y, b.model, oracle, s, make_constant_plan(b.eta, 60)), 4000, seed=0)
    print(f"bias={bias}: mean={x.mean():.4f} (pi_eta mean {ref.mean():.4f}), TV={binned_tv(x[:, 0], ref):.4f}")
