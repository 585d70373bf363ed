# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: stencil application, Schur matvec, nodewise prox."""

COMPILED = True


def laplacian(const double[::1] u, Py_ssize_t n, double inv_h2, double[::1] out):
    """5-point -Laplacian with zero Dirichlet ghost values; u, out flat (n*n,)."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        for i in range(n):
            k = j * n + i
            s = 4.0 * u[k]
            if j > 0:
                s -= u[k - n]
            if j < n - 1:
                s -= u[k + n]
            if i > 0:
                s -= u[k - 1]
            if i < n - 1:
                s -= u[k + 1]
            out[k] = s * inv_h2


def schur_matvec(const double[::1] v, const double[::1] d, Py_ssize_t n, double inv_h2,
                 double[::1] tmp, double[::1] out):
    """out = A(A v) + d*v for the 5-point stencil A and a diagonal d."""
    cdef Py_ssize_t k
    laplacian(v, n, inv_h2, tmp)
    laplacian(tmp, n, inv_h2, out)
    for k in range(n * n):
        out[k] = out[k] + d[k] * v[k]


def prox_field(const double[::1] p, const double[::1] values, const double[::1] thresholds,
               const double[::1] centers, double gamma, double[::1] out_u,
               unsigned char[::1] out_band):
    """Nodewise resolvent of the strongly convexified penalty.

    thresholds holds the transition-band edges [lo_0, hi_0, lo_1, hi_1, ...]
    (nondecreasing), centers the per-band offsets (alpha/2)(u_i + u_{i+1}).
    Band membership is closed on both edges; out_band is 1 on band nodes.
    """
    cdef Py_ssize_t nn = p.shape[0]
    cdef Py_ssize_t m = thresholds.shape[0]
    cdef Py_ssize_t nb = centers.shape[0]
    cdef Py_ssize_t k, j, lo_count, le_count, region, b
    cdef double pk, t
    cdef bint band
    for k in range(nn):
        pk = p[k]
        lo_count = 0
        le_count = 0
        for j in range(m):
            if thresholds[j] < pk:
                lo_count += 1
            if thresholds[j] <= pk:
                le_count += 1
        band = (lo_count & 1) or (le_count & 1)
        region = lo_count >> 1
        if band:
            b = region if region < nb else nb - 1
            t = (pk - centers[b]) / gamma
            if t < values[b]:
                t = values[b]
            elif t > values[b + 1]:
                t = values[b + 1]
            out_u[k] = t
            out_band[k] = 1
        else:
            out_u[k] = values[region]
            out_band[k] = 0
