"""Quadrature rules on the reference interval [0, 1] and triangle (0,0),(1,0),(0,1)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(n_points):
    x, w = np.polynomial.legendre.leggauss(int(n_points))
    return 0.5 * (x + 1.0), 0.5 * w


# symmetric 6-point rule, exact for degree 4
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322


@lru_cache(maxsize=None)
def triangle_rule(degree=4):
    """Points (n, 2) and weights on the reference triangle (weights sum to 1/2)."""
    if degree <= 4:
        bary = []
        wts = []
        for a, w in ((_A1, _W1), (_A2, _W2)):
            b = 1.0 - 2.0 * a
            for pt in ((a, a, b), (a, b, a), (b, a, a)):
                bary.append(pt)
                wts.append(w)
        bary = np.array(bary)
        pts = bary[:, 1:]
        return pts, 0.5 * np.array(wts)
    return collapsed_gauss(degree // 2 + 1)


@lru_cache(maxsize=None)
def collapsed_gauss(n_points):
    """Conical product rule; exact for polynomials of degree 2 * n_points - 2."""
    u, wu = gauss_interval(n_points)
    v, wv = gauss_interval(n_points)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def reference_rule(dim, degree):
    if dim == 1:
        x, w = gauss_interval(max(1, (degree + 2) // 2))
        return x[:, None], w
    pts, w = triangle_rule(degree)
    return pts, w
