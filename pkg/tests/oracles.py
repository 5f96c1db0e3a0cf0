"""Brute-force references for the subspace metrics."""

import numpy as np


def projector(a):
    return a @ np.linalg.inv(a.T @ a) @ a.T


def trace_corr_loop(a, b):
    pa, pb = projector(a), projector(b)
    p = a.shape[0]
    total = 0.0
    for i in range(p):
        for j in range(p):
            total += pa[i, j] * pb[j, i]
    return total / a.shape[1]


def r_squared_grid(beta, b, sigma, steps=20_001):
    """Maximize the squared correlation over unit vectors in span(b) by grid search."""
    d = b.shape[1]
    if d == 1:
        dirs = b
    else:
        th = np.linspace(0, np.pi, steps)
        dirs = b @ np.vstack([np.cos(th), np.sin(th)])
    num = (beta @ sigma @ dirs) ** 2
    den = (beta @ sigma @ beta) * np.einsum("ij,ij->j", dirs, sigma @ dirs)
    best = np.max(num / den)
    if d == 2:
        # refine around the best grid angle
        i = np.argmax(num / den)
        th = np.linspace(np.pi * (i - 1) / (steps - 1), np.pi * (i + 1) / (steps - 1), 2001)
        dirs = b @ np.vstack([np.cos(th), np.sin(th)])
        num = (beta @ sigma @ dirs) ** 2
        den = (beta @ sigma @ beta) * np.einsum("ij,ij->j", dirs, sigma @ dirs)
        best = max(best, np.max(num / den))
    return best
