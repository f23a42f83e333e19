"""Pure numpy sweeps, used when the compiled extension is unavailable.

The first-order recurrence ``I[c] = decay[c] * I[c-1] + J[c]`` is evaluated as a
parallel prefix scan over affine maps, O(N log N) work but vectorized across
nodes and lines. Products of decays only shrink, so the scan is as stable as
the serial loop.
"""

import numpy as np


def sweep(J, decay):
    B = np.array(J, dtype=float, copy=True)
    B[:, 0] = 0.0
    A = np.broadcast_to(np.asarray(decay, dtype=float), B.shape).copy()
    n = B.shape[1]
    s = 1
    while s < n:
        B[:, s:] += A[:, s:] * B[:, :-s]
        A[:, s:] *= A[:, :-s]
        s *= 2
    return B


def quad_sweep(v, gather, weights, decay):
    J = np.zeros(v.shape, dtype=float)
    J[:, 1:] = np.einsum("mcj,cj->mc", v[:, gather], weights)
    return sweep(J, decay)
