"""Pointwise multi-bang penalty and its convex-analysis toolbox.

For admissible values u_1 < ... < u_d the scalar penalty g is piecewise
affine with kinks exactly at the u_i, equal to
(1/2)((u_i + u_{i+1}) v - u_i u_{i+1}) on [u_i, u_{i+1}] and +inf outside
[u_1, u_d]. This module provides g and its integral version, the
subdifferentials of g and of its Fenchel conjugate, Bregman distances, the
strict-complementarity subgradient selection, and the single-valued
resolvent H_gamma of the strongly convexified penalty together with its
Newton derivative.

Breakpoint membership (v equal to some u_i, q equal to a subdifferential
midpoint) is decided by exact floating-point comparison; callers needing
robustness can snap their inputs first via snap().
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .poisson import ScalarField, _check_same_grid

INF = float("inf")


class InvalidSubgradientError(ValueError):
    """A supplied q is not a subgradient of g at the given base point."""


class AdmissibleSet:
    """Sorted admissible parameter values u_1 < ... < u_d, d >= 2."""

    def __init__(self, values):
        vals = np.asarray(values, dtype=np.float64).ravel()
        if vals.size < 2:
            raise ValueError("need at least two admissible values")
        if not np.all(np.diff(vals) > 0):
            raise ValueError("admissible values must be strictly increasing")
        vals.setflags(write=False)
        self.values = vals
        self.d = int(vals.size)
        self.min_gap = float(np.min(np.diff(vals)))
        mids = 0.5 * (vals[:-1] + vals[1:])
        mids.setflags(write=False)
        self.midpoints = mids
        self._vals_list = vals.tolist()
        self._mids_list = mids.tolist()

    @property
    def lo(self) -> float:
        return self._vals_list[0]

    @property
    def hi(self) -> float:
        return self._vals_list[-1]

    def __repr__(self):
        return f"AdmissibleSet({self._vals_list})"

    def segment(self, v: float) -> int:
        """Index i of the affine piece [u_i, u_{i+1}] containing v (0-based).

        Values at an interior node u_i resolve to the right piece i; u_d
        resolves to the last piece d-2.
        """
        i = bisect_right(self._vals_list, v) - 1
        return min(max(i, 0), self.d - 2)


@dataclass(frozen=True)
class Interval:
    """Closed/open real interval with extended endpoints; may be empty."""

    lower: float
    upper: float
    lower_open: bool = False
    upper_open: bool = False

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"interval endpoints out of order: {self}")

    @classmethod
    def empty(cls) -> "Interval":
        return cls(0.0, 0.0, True, True)

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(v, v, False, False)

    @classmethod
    def closed(cls, a: float, b: float) -> "Interval":
        return cls(a, b, False, False)

    @property
    def is_empty(self) -> bool:
        return self.lower == self.upper and (self.lower_open or self.upper_open)

    def contains(self, x: float) -> bool:
        if self.is_empty:
            return False
        above = x > self.lower or (x == self.lower and not self.lower_open)
        below = x < self.upper or (x == self.upper and not self.upper_open)
        return above and below


@dataclass(frozen=True)
class ProxParams:
    """Regularization weight alpha and strong-convexification parameter gamma."""

    alpha: float
    gamma: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def snap(v: float, U: AdmissibleSet, tol: float | None = None) -> float:
    """Snap v to the nearest admissible value if within tol (default 1e-12*range)."""
    if tol is None:
        tol = 1e-12 * (U.hi - U.lo)
    i = bisect_left(U._vals_list, v)
    for j in (i - 1, i):
        if 0 <= j < U.d and abs(v - U._vals_list[j]) <= tol:
            return U._vals_list[j]
    return v


def _g_piece(i: int, v: float, vals) -> float:
    return 0.5 * ((vals[i] + vals[i + 1]) * v - vals[i] * vals[i + 1])


def g_value(v: float, U: AdmissibleSet) -> float:
    """Scalar penalty; +inf outside [u_1, u_d]."""
    if v < U.lo or v > U.hi:
        return INF
    return _g_piece(U.segment(v), v, U._vals_list)


def g_value_array(v: np.ndarray, U: AdmissibleSet) -> np.ndarray:
    """Vectorized g over an array; +inf where outside [u_1, u_d]."""
    vals = U.values
    idx = np.clip(np.searchsorted(vals, v, side="right") - 1, 0, U.d - 2)
    out = 0.5 * ((vals[idx] + vals[idx + 1]) * v - vals[idx] * vals[idx + 1])
    out[(v < vals[0]) | (v > vals[-1])] = INF
    return out


def G_value(u: ScalarField, U: AdmissibleSet) -> float:
    """Integral penalty by quadrature; +inf if any node leaves [u_1, u_d]."""
    return u.grid.quad_weight * float(np.sum(g_value_array(u.data, U)))


def subdiff_g(v: float, U: AdmissibleSet) -> Interval:
    """Convex subdifferential of g; empty outside [u_1, u_d]."""
    if v < U.lo or v > U.hi:
        return Interval.empty()
    vals, mids = U._vals_list, U._mids_list
    i = bisect_left(vals, v)
    if i < U.d and vals[i] == v:
        if i == 0:
            return Interval(-INF, mids[0], True, False)
        if i == U.d - 1:
            return Interval(mids[-1], INF, False, True)
        return Interval.closed(mids[i - 1], mids[i])
    return Interval.point(mids[i - 1])


def subdiff_g_star(q: float, U: AdmissibleSet) -> Interval:
    """Subdifferential of the Fenchel conjugate g*; never empty."""
    vals, mids = U._vals_list, U._mids_list
    j = bisect_left(mids, q)
    if j < U.d - 1 and mids[j] == q:
        return Interval.closed(vals[j], vals[j + 1])
    return Interval.point(vals[j])


def strict_subgradient(v: float, U: AdmissibleSet) -> float:
    """Subgradient selection lying strictly inside the subdifferential.

    Returns the segment midpoint for v strictly between admissible values
    and v itself when v is an admissible value; the latter lies strictly
    inside the required open interval at interior and boundary nodes alike.
    """
    if v < U.lo or v > U.hi:
        raise ValueError(f"{v} outside the admissible range [{U.lo}, {U.hi}]")
    vals = U._vals_list
    i = bisect_left(vals, v)
    if i < U.d and vals[i] == v:
        return vals[i]
    return U._mids_list[i - 1]


def bregman_g(v2: float, v1: float, q: float, U: AdmissibleSet) -> float:
    """Bregman distance g(v2) - g(v1) - q(v2 - v1) for q in subdiff_g(v1).

    Evaluated through the affine structure of g so that the distance is
    exactly zero whenever v2 lies on the active piece of v1 and q is that
    piece's slope.
    """
    if not subdiff_g(v1, U).contains(q):
        raise InvalidSubgradientError(f"q={q} not in subdiff_g({v1})")
    if v2 < U.lo or v2 > U.hi:
        return INF
    vals = U._vals_list
    i1 = U.segment(v1)
    if vals[i1] <= v2 <= vals[i1 + 1]:
        gap = 0.0
    else:
        gap = _g_piece(U.segment(v2), v2, vals) - _g_piece(i1, v2, vals)
    d = gap + (U._mids_list[i1] - q) * (v2 - v1)
    return max(d, 0.0)


def bregman_G(
    u2: ScalarField, u1: ScalarField, p: ScalarField, U: AdmissibleSet
) -> float:
    """Integral Bregman distance, computed nodewise; nonnegative."""
    _check_same_grid(u2, u1)
    _check_same_grid(u1, p)
    vals, mids = U.values, U.midpoints
    a, b, q = u1.data, u2.data, p.data

    idx = np.searchsorted(vals, a, side="left")
    idx_c = np.minimum(idx, U.d - 1)
    is_node = vals[idx_c] == a
    node_i = np.where(is_node, idx_c, 0)
    seg = np.clip(np.searchsorted(vals, a, side="right") - 1, 0, U.d - 2)

    lo = np.where(is_node, np.where(node_i > 0, mids[np.maximum(node_i - 1, 0)], -INF),
                  mids[seg])
    hi = np.where(is_node, np.where(node_i < U.d - 1, mids[np.minimum(node_i, U.d - 2)], INF),
                  mids[seg])
    bad = (a < vals[0]) | (a > vals[-1]) | (q < lo) | (q > hi)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise InvalidSubgradientError(
            f"p={q[k]} not in subdiff_g(u1={a[k]}) at flat node index {k}"
        )

    seg2 = np.clip(np.searchsorted(vals, b, side="right") - 1, 0, U.d - 2)
    same = (vals[seg] <= b) & (b <= vals[seg + 1])
    gap = np.where(
        same,
        0.0,
        0.5 * ((vals[seg2] + vals[seg2 + 1]) * b - vals[seg2] * vals[seg2 + 1])
        - (0.5 * ((vals[seg] + vals[seg + 1]) * b - vals[seg] * vals[seg + 1])),
    )
    d = np.maximum(gap + (mids[seg] - q) * (b - a), 0.0)
    return u1.grid.quad_weight * float(np.sum(d))


class ProxTables:
    """Precomputed threshold tables for evaluating H_gamma at fixed (alpha, gamma).

    The transition band of piece i is [c_i + gamma*u_i, c_i + gamma*u_{i+1}]
    with c_i = (alpha/2)(u_i + u_{i+1}); inside it the resolvent is
    (p - c_i)/gamma, between bands it is constant equal to an admissible
    value. Bands are closed, constant branches open.
    """

    def __init__(self, params: ProxParams, U: AdmissibleSet):
        vals = U.values
        c = (0.5 * params.alpha) * (vals[:-1] + vals[1:])
        thresholds = np.empty(2 * (U.d - 1))
        thresholds[0::2] = c + params.gamma * vals[:-1]
        thresholds[1::2] = c + params.gamma * vals[1:]
        self.values = vals
        self.centers = c
        self.thresholds = thresholds
        self.gamma = params.gamma

    def apply(self, p: np.ndarray, out_u: np.ndarray, out_band: np.ndarray):
        _kernels.prox_field(
            p, self.values, self.thresholds, self.centers, self.gamma, out_u, out_band
        )


def prox_H(p: float, params: ProxParams, U: AdmissibleSet) -> float:
    """Scalar resolvent H_gamma(p): argmin of alpha*g(u) + (gamma/2)u^2 - p*u."""
    tables = ProxTables(params, U)
    out_u = np.empty(1)
    out_band = np.empty(1, dtype=np.uint8)
    tables.apply(np.array([float(p)]), out_u, out_band)
    return float(out_u[0])


def prox_H_field(
    p: ScalarField, params: ProxParams, U: AdmissibleSet
) -> tuple[ScalarField, np.ndarray]:
    """Nodewise H_gamma; returns the field and the transition-band node indices."""
    tables = ProxTables(params, U)
    out_u = np.empty(p.grid.size)
    out_band = np.empty(p.grid.size, dtype=np.uint8)
    tables.apply(p.data, out_u, out_band)
    return ScalarField(p.grid, out_u), np.flatnonzero(out_band)


def newton_deriv_H(
    p: ScalarField, h: ScalarField, params: ProxParams, U: AdmissibleSet
) -> ScalarField:
    """Newton derivative of H_gamma at p applied to h: (1/gamma)h on bands, else 0."""
    _check_same_grid(p, h)
    tables = ProxTables(params, U)
    out_u = np.empty(p.grid.size)
    out_band = np.empty(p.grid.size, dtype=np.uint8)
    tables.apply(p.data, out_u, out_band)
    return ScalarField(p.grid, np.where(out_band != 0, h.data / params.gamma, 0.0))
