"""Compiled inner loops for trajectory integration."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def rect_gradients(corners, x, y, z, out):
    """Unit-voltage potential gradient of each rectangle at (x, y, z) into ``out`` (n, 3)."""
    k = 1.0 / (2.0 * math.pi)
    y2 = y * y
    for n in range(corners.shape[0]):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for i in range(2):
            X = corners[n, i] - x
            X2 = X * X
            ax = X2 + y2
            for j in range(2):
                Z = corners[n, 2 + j] - z
                Z2 = Z * Z
                az = Z2 + y2
                R = math.sqrt(X2 + Z2 + y2)
                s = 1.0 if i == j else -1.0
                gx -= s * Z * y / (ax * R)
                gz -= s * X * y / (az * R)
                gy -= s * X * Z * (X2 + Z2 + 2.0 * y2) / (ax * az * R)
        out[n, 0] = k * gx
        out[n, 1] = k * gy
        out[n, 2] = k * gz


@njit(cache=True)
def combined_gradient(corners, weights, x, y, z, work):
    rect_gradients(corners, x, y, z, work)
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for n in range(corners.shape[0]):
        w = weights[n]
        gx += w * work[n, 0]
        gy += w * work[n, 1]
        gz += w * work[n, 2]
    return gx, gy, gz


def gradient_matrix(corners, point):
    out = np.empty((corners.shape[0], 3))
    rect_gradients(corners, float(point[0]), float(point[1]), float(point[2]), out)
    return out
