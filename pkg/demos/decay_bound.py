"""How the gradient bound scales with curvature.

Choosing the CGO frequency tau = 4 K ln K^rho leaves four terms whose sum
controls the interior gradient at the apex. Their common envelope
(ln K)^(3/2) K^(mu - 1/2) goes to zero when mu < 1/2 (alpha = delta = 1), but
only after a peak at K = exp(3 / (1 - 2 mu)). For mu = 0.1 that peak sits at
K ~ 42.5, inside the range [10, 1e6] one might plot.
"""
import numpy as np

from curvinc.analysis import decay_bound, envelope_turning_point

for mu in (0.1, 0.3, 0.6):
    peak = envelope_turning_point(mu)
    where = "never turns" if peak is None else f"peaks at K = {peak:.4g}"
    print(f"mu = {mu}: envelope {where}; condition flagged: {decay_bound(10.0, mu).violates_condition}")

print("\n        K      envelope(mu=0.1)   total(mu=0.1)")
for K in np.logspace(1, 6, 11):
    b = decay_bound(K, 0.1)
    print(f"{K:10.4g}   {b.envelope:14.6e}   {b.total:14.6e}")
