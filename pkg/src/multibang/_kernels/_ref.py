"""NumPy fallback implementations of the hot kernels.

Operation order inside each kernel mirrors the compiled extension so both
backends produce bitwise-identical output.
"""

import numpy as np

COMPILED = False


def laplacian(u, n, inv_h2, out):
    """5-point -Laplacian with zero Dirichlet ghost values; u, out flat (n*n,)."""
    v = u.reshape(n, n)
    o = out.reshape(n, n)
    np.multiply(v, 4.0, out=o)
    o[1:, :] -= v[:-1, :]
    o[:-1, :] -= v[1:, :]
    o[:, 1:] -= v[:, :-1]
    o[:, :-1] -= v[:, 1:]
    o *= inv_h2


def schur_matvec(v, d, n, inv_h2, tmp, out):
    """out = A(A v) + d*v for the 5-point stencil A and a diagonal d."""
    laplacian(v, n, inv_h2, tmp)
    laplacian(tmp, n, inv_h2, out)
    out += d * v


def prox_field(p, values, thresholds, centers, gamma, out_u, out_band):
    """Nodewise resolvent of the strongly convexified penalty.

    thresholds holds the transition-band edges [lo_0, hi_0, lo_1, hi_1, ...]
    (nondecreasing), centers the per-band offsets (alpha/2)(u_i + u_{i+1}).
    Band membership is closed on both edges; out_band is 1 on band nodes.
    """
    idx_lo = np.searchsorted(thresholds, p, side="left")
    idx_hi = np.searchsorted(thresholds, p, side="right")
    band = ((idx_lo | idx_hi) & 1).astype(bool)
    region = idx_lo >> 1
    reg_b = np.minimum(region, centers.size - 1)
    t = (p - centers[reg_b]) / gamma
    t = np.minimum(np.maximum(t, values[reg_b]), values[reg_b + 1])
    np.copyto(out_u, np.where(band, t, values[region]))
    np.copyto(out_band, band)
