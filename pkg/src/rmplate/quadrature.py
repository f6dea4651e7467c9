"""Quadrature rules on the reference triangle and on segments."""

import numpy as np

_S15 = np.sqrt(15.0)

# 7-point symmetric rule, exact for polynomials of degree <= 5.
# Barycentric coordinates, weights normalised to sum to one.
_A1 = (6.0 - _S15) / 21.0
_B1 = (9.0 + 2.0 * _S15) / 21.0
_A2 = (6.0 + _S15) / 21.0
_B2 = (9.0 - 2.0 * _S15) / 21.0
_W1 = (155.0 - _S15) / 1200.0
_W2 = (155.0 + _S15) / 1200.0

TRI_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [_B1, _A1, _A1],
        [_A1, _B1, _A1],
        [_A1, _A1, _B1],
        [_B2, _A2, _A2],
        [_A2, _B2, _A2],
        [_A2, _A2, _B2],
    ]
)
TRI_WEIGHTS = np.array([9.0 / 40.0, _W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss-Legendre on [0, 1], exact for degree <= 5.
EDGE_POINTS = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def triangle_points(vertices):
    """Physical quadrature points for triangles.

    ``vertices`` has shape (m, 3, 2); the result has shape (m, 7, 2).
    """
    return np.einsum("qi,mik->mqk", TRI_BARY, vertices)


def segment_points(a, b):
    """Gauss points on segments a->b, shape (m, 3, 2)."""
    t = EDGE_POINTS[None, :, None]
    return a[:, None, :] + t * (b - a)[:, None, :]


def gauss_legendre(n, lo=0.0, hi=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w
