"""Multi-start maximization over box domains.

Candidate seeds are the domain center, caller-provided warm starts, a
seeded Latin hypercube, and (for problems of at most two dimensions) a
dense reference grid.  The best seeds are refined with bounded L-BFGS.
The returned point is never worse than any candidate evaluated, and
ties break on the lowest candidate index, so results are deterministic
for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .domain import BoxDomain

REFERENCE_GRID_PER_DIM = 51


def maximize_box(f_batch, domain: BoxDomain, *, restarts: int = 10, seed: int = 0,
                 warm_starts=None, refine_top: int = 5, maxiter: int = 60,
                 grid_per_dim: int | None = None):
    """Maximize a batched objective f_batch((n, D) -> (n,)) over a box.

    Returns (x_best, f_best).
    """
    rng = np.random.default_rng(seed)
    seeds = [domain.center[None, :]]
    if warm_starts is not None:
        ws = np.atleast_2d(np.asarray(warm_starts, dtype=float))
        if ws.size:
            seeds.append(np.clip(ws, domain.lower, domain.upper))
    if restarts > 0:
        seeds.append(domain.latin_hypercube(rng, restarts))
    if grid_per_dim is None and domain.dim <= 2:
        grid_per_dim = REFERENCE_GRID_PER_DIM
    if grid_per_dim is not None and domain.dim <= 2:
        seeds.append(domain.grid(grid_per_dim))
    cand = np.concatenate(seeds, axis=0)
    vals = np.asarray(f_batch(cand), dtype=float)
    vals = np.where(np.isfinite(vals), vals, -np.inf)

    order = np.argsort(-vals, kind="stable")
    best_x = cand[order[0]].copy()
    best_v = float(vals[order[0]])

    bounds = list(zip(domain.lower, domain.upper))

    def neg(x):
        return -float(f_batch(x[None, :])[0])

    for idx in order[: max(refine_top, 0)]:
        x0 = cand[idx]
        res = minimize(neg, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter})
        if np.all(np.isfinite(res.x)):
            v = float(f_batch(np.clip(res.x, domain.lower, domain.upper)[None, :])[0])
            if v > best_v + 1e-15:
                best_v = v
                best_x = np.clip(res.x, domain.lower, domain.upper)
    return best_x, best_v
