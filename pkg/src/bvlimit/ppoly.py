"""Piecewise polynomials with endpoint-Hermite segment construction.

The appendix potential is assembled from low-degree segments that match
(value, first, second derivative) at both endpoints, optionally with a
prescribed integral over the segment (one extra coefficient).  Coefficients
are stored ascending, local to the left breakpoint of each piece; the first
and last pieces extrapolate polynomially, which the callers exploit for the
exact cubic left tail and quartic right tail.
"""

from __future__ import annotations

import numpy as np


def hermite_segment(h, left, right, integral=None):
    """Lowest-degree polynomial on [0, h] matching endpoint jets.

    ``left`` and ``right`` are (value, d1, d2) triples.  Without an integral
    condition the result is the quintic Hermite interpolant; with one it is
    the sextic whose integral over the segment equals ``integral``.
    """
    v0, d0, s0 = left
    v1, d1, s1 = right
    c0, c1, c2 = float(v0), float(d0), float(s0) / 2.0
    degs = (3, 4, 5) if integral is None else (3, 4, 5, 6)
    n = len(degs)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for j, d in enumerate(degs):
        a[0, j] = h**d
        a[1, j] = d * h ** (d - 1)
        a[2, j] = d * (d - 1) * h ** (d - 2)
        if integral is not None:
            a[3, j] = h ** (d + 1) / (d + 1)
    b[0] = v1 - (c0 + c1 * h + c2 * h * h)
    b[1] = d1 - (c1 + 2 * c2 * h)
    b[2] = s1 - 2 * c2
    if integral is not None:
        b[3] = integral - (c0 * h + c1 * h * h / 2 + c2 * h**3 / 3)
    tail = np.linalg.solve(a, b)
    return np.concatenate([[c0, c1, c2], tail])


def poly_integral(coeffs, h):
    """Integral over [0, h] of a local-coefficient polynomial."""
    ci = np.concatenate([[0.0], np.asarray(coeffs) / np.arange(1, len(coeffs) + 1)])
    return float(np.polyval(ci[::-1], h))


class PiecewisePoly:
    """Breakpoints ``breaks`` (K+1,) and K coefficient rows, ascending order.

    Evaluation outside [breaks[0], breaks[-1]] extrapolates the edge pieces.
    """

    def __init__(self, breaks, coeffs):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if len(self.breaks) != len(self.coeffs) + 1:
            raise ValueError("breaks/coeffs length mismatch")

    def _der_coeffs(self, c, der):
        for _ in range(der):
            c = c[1:] * np.arange(1, len(c))
        return c

    def __call__(self, x, der=0):
        if isinstance(x, float) or isinstance(x, int):
            return self._scalar(float(x), der)
        x_arr = np.asarray(x, dtype=float)
        if x_arr.ndim == 0:
            return self._scalar(float(x_arr), der)
        idx = np.clip(
            np.searchsorted(self.breaks, x_arr, side="right") - 1,
            0,
            len(self.coeffs) - 1,
        )
        out = np.empty_like(x_arr)
        for i in np.unique(idx):
            m = idx == i
            c = self._der_coeffs(self.coeffs[i], der)
            out[m] = np.polyval(c[::-1], x_arr[m] - self.breaks[i])
        return out

    def _scalar(self, x, der=0):
        breaks = self.breaks
        lo, hi = 0, len(self.coeffs) - 1
        if x >= breaks[hi]:
            i = hi
        elif x < breaks[1]:
            i = 0
        else:  # binary search on the breakpoints
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if x >= breaks[mid]:
                    lo = mid
                else:
                    hi = mid
            i = lo
        c = self.coeffs[i]
        tau = x - breaks[i]
        if der:
            c = self._der_coeffs(c, der)
        acc = 0.0
        for j in range(len(c) - 1, -1, -1):
            acc = acc * tau + c[j]
        return acc

    def antiderivative(self):
        coeffs = []
        acc = 0.0
        for i, c in enumerate(self.coeffs):
            ci = np.concatenate([[acc], c / np.arange(1, len(c) + 1)])
            if i + 1 < len(self.breaks):
                acc = float(np.polyval(ci[::-1], self.breaks[i + 1] - self.breaks[i]))
            coeffs.append(ci)
        return PiecewisePoly(self.breaks, coeffs)
