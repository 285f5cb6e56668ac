"""Smoothed spectrum of the Kneser graph K(15,7) from noisy matvecs only.

The graph has 6435 vertices and nine distinct adjacency eigenvalues with
known multiplicities, so the estimated curve can be drawn on top of the
exact smoothed reference.  Every matvec is corrupted with additive noise
to mimic a minibatch / subsampled setting; the estimator never sees the
matrix itself.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from specden.ensembles import (KneserSpec, kneser_operator, kneser_spectrum,
                               smoothed_truth)
from specden.operators import NoiseModel, rescale
from specden.pipeline import RunConfig, chebyshev_grid, estimate_density

spec = KneserSpec(15, 7)
print(f"K({spec.n},{spec.k}): {spec.dim} vertices, degree {spec.degree}")

noise = NoiseModel.additive(1.0 / spec.dim**2)
op = rescale(kneser_operator(spec, noise), float(spec.degree))

grid = chebyshev_grid(200)
cfg = RunConfig(kappa=1000.0, grid=grid, n_probes=64, seed=5,
                mode="shared_moments")
est = estimate_density(op, cfg)
truth = smoothed_truth(kneser_spectrum(spec).rescaled(op.divisor), 1000.0, grid)

gap = np.max(np.abs(est.density - truth))
print(f"{cfg.n_probes} probes, k_max {est.k_max}, "
      f"max |estimate - reference| = {gap:.3e}")

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(grid, truth, "k--", lw=1, label="exact, smoothed")
ax.plot(grid, est.density, color="C0", lw=1.5, label="estimate")
ax.fill_between(grid, est.density - 2 * est.stderr,
                est.density + 2 * est.stderr, color="C0", alpha=0.3,
                label="2 stderr")
for lam, mult in zip(kneser_spectrum(spec).values,
                     kneser_spectrum(spec).multiplicities):
    ax.axvline(lam / op.divisor, color="0.8", lw=0.5, zorder=0)
ax.set_xlabel("eigenvalue / degree")
ax.set_ylabel("smoothed density")
ax.set_title("K(15,7) adjacency spectrum from stochastic matvecs")
ax.legend(loc="upper right", fontsize=8)
fig.tight_layout()
fig.savefig("kneser_smoothed_spectrum.png", dpi=150)
print("wrote kneser_smoothed_spectrum.png")
