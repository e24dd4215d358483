"""Dynamic Path Warping: monotone alignment of path sequences.

Given target paths ``s_1..s_n`` and generated paths ``s'_1..s'_m`` with
distance matrix ``d[i, j]``, DPW minimizes ``sum_j d[match(j), j]`` over
nondecreasing maps ``match: {1..m} -> {1..n}``.  Each generated path matches
exactly one target; targets may be skipped or reused by consecutive
generated paths.  The dynamic program keeps two tables:

* ``P[i, j]``: best cost of the first ``j`` generated paths with ``s'_j``
  matched to ``s_i``;
* ``Q[i, j]``: best cost with ``s'_j`` matched to some target before ``s_i``.

    P[i, j] = d[i, j] + softmin(Q[i, j-1], P[i, j-1])
    Q[i, j] = softmin(Q[i-1, j], P[i-1, j])

and the result is ``softmin(P[n, m], Q[n, m])``.  Every matching is exactly
one route through these transitions, so for ``gamma > 0`` the result is the
soft minimum over all ``C(n+m-1, m)`` matchings.

SoftDTW is included as the one-to-many baseline.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import PathSequence

# Stand-in for +inf on table borders.
BIG = 1e30
BRUTEFORCE_LIMIT = 1_000_000


class DpwError(ValueError):
    pass


@dataclass
class DpwTables:
    P: np.ndarray
    Q: np.ndarray
    gamma: float


def softmin(values, gamma: float) -> float:
    """Hard min for ``gamma == 0``, else ``-gamma * log(sum(exp(-a / gamma)))``."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise DpwError("softmin of an empty sequence")
    if gamma < 0:
        raise DpwError("gamma must be non-negative")
    lo = float(a.min())
    if gamma == 0 or a.size == 1 or lo >= BIG:
        return lo
    return lo - gamma * math.log(float(np.sum(np.exp(-(a - lo) / gamma))))


def _softmin2(a: float, b: float, gamma: float) -> float:
    lo = a if a < b else b
    if gamma == 0 or lo >= BIG:
        return lo
    hi = b if a < b else a
    return lo - gamma * math.log1p(math.exp(-(hi - lo) / gamma))


def _check_matrix(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] < 1 or D.shape[1] < 1:
        raise DpwError(f"distance matrix must be a non-empty 2-D array, got shape {D.shape}")
    if not np.all(np.isfinite(D)) or np.any(D < 0):
        raise DpwError("distances must be finite and non-negative")
    return D


def dpw_forward(D, gamma: float = 0.0):
    """Soft DPW value and the ``(n+1, m+1)`` tables used by the backward pass.

    Tables are 1-indexed as in the recurrences; row/column 0 are borders:
    ``P[i, 0] = 0`` (nothing matched yet) and every other border is +inf.
    """
    D = _check_matrix(D)
    if gamma < 0:
        raise DpwError("gamma must be non-negative")
    n, m = D.shape
    P = np.full((n + 1, m + 1), BIG)
    Q = np.full((n + 1, m + 1), BIG)
    P[1:, 0] = 0.0
    for j in range(1, m + 1):
        for i in range(1, n + 1):
            P[i, j] = D[i - 1, j - 1] + _softmin2(Q[i, j - 1], P[i, j - 1], gamma)
            Q[i, j] = _softmin2(Q[i - 1, j], P[i - 1, j], gamma)
    return _softmin2(P[n, m], Q[n, m], gamma), DpwTables(P, Q, float(gamma))


def dpw_backward(tables: DpwTables, D) -> np.ndarray:
    """Gradient of the soft DPW value w.r.t. every ``d[i, j]``.

    Entry ``(i, j)`` is the Gibbs probability that the matching pairs
    ``s_i`` with ``s'_j``, so every column sums to one.
    """
    D = _check_matrix(D)
    P, Q, gamma = tables.P, tables.Q, tables.gamma
    if gamma <= 0:
        raise DpwError("dpw_backward needs gamma > 0; the hard alignment is not differentiable")
    n, m = D.shape
    if P.shape != (n + 1, m + 1):
        raise DpwError("tables do not match the distance matrix")
    adjP = np.zeros((n + 2, m + 2))
    adjQ = np.zeros((n + 2, m + 2))
    final = _softmin2(P[n, m], Q[n, m], gamma)
    adjP[n, m] = _weight(P[n, m], final, gamma)
    adjQ[n, m] = _weight(Q[n, m], final, gamma)
    for j in range(m, 0, -1):
        for i in range(n, 0, -1):
            # softmin(Q[i, j], P[i, j]) feeds both P[i, j+1] and Q[i+1, j]
            a = adjP[i, j + 1] + adjQ[i + 1, j]
            if a == 0.0:
                continue
            s = _softmin2(Q[i, j], P[i, j], gamma)
            adjP[i, j] += a * _weight(P[i, j], s, gamma)
            adjQ[i, j] += a * _weight(Q[i, j], s, gamma)
    return adjP[1:n + 1, 1:m + 1].copy()


def _weight(x: float, s: float, gamma: float) -> float:
    return 0.0 if x >= BIG else math.exp(-(x - s) / gamma)


def n_matchings(n: int, m: int) -> int:
    """Number of nondecreasing maps from m generated to n target paths."""
    return math.comb(n + m - 1, m)


def dpw_bruteforce(D, gamma: float = 0.0):
    """Enumerate every nondecreasing matching.

    Returns ``(value, match)`` where ``match`` is a 0-based argmin matching
    (length m).  With ``gamma > 0`` the value is the soft minimum over all
    matchings, which must equal :func:`dpw_forward`.
    """
    D = _check_matrix(D)
    n, m = D.shape
    if n_matchings(n, m) > BRUTEFORCE_LIMIT:
        raise DpwError(f"{n_matchings(n, m)} matchings exceed the enumeration limit")
    cols = np.arange(m)
    costs = []
    best, best_match = np.inf, None
    for match in itertools.combinations_with_replacement(range(n), m):
        c = float(D[list(match), cols].sum())
        costs.append(c)
        if c < best:
            best, best_match = c, np.array(match)
    return softmin(costs, gamma), best_match


def dpw_match(D) -> np.ndarray:
    """Hard argmin matching (0-based) recovered by backtracking the tables."""
    D = _check_matrix(D)
    n, m = D.shape
    _, t = dpw_forward(D, 0.0)
    P, Q = t.P, t.Q
    match = np.empty(m, dtype=int)
    i, j = n, m
    in_p = P[n, m] <= Q[n, m]
    while j >= 1:
        if in_p:
            match[j - 1] = i - 1
            in_p = P[i, j - 1] <= Q[i, j - 1]
            j -= 1
        else:
            i -= 1
            in_p = P[i, j] <= Q[i, j]
    return match


def softdtw_forward(D, gamma: float = 0.0):
    """SoftDTW value and its ``(n+1, m+1)`` accumulated-cost table."""
    D = _check_matrix(D)
    n, m = D.shape
    R = np.full((n + 1, m + 1), BIG)
    R[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            R[i, j] = D[i - 1, j - 1] + softmin([R[i - 1, j], R[i, j - 1], R[i - 1, j - 1]], gamma)
    return float(R[n, m]), R


def softdtw_backward(R: np.ndarray, D, gamma: float) -> np.ndarray:
    """Expected alignment matrix, the gradient of SoftDTW w.r.t. ``D``."""
    D = _check_matrix(D)
    if gamma <= 0:
        raise DpwError("softdtw_backward needs gamma > 0")
    n, m = D.shape
    E = np.zeros((n + 2, m + 2))
    E[n, m] = 1.0
    for i in range(n, 0, -1):
        for j in range(m, 0, -1):
            if i == n and j == m:
                continue
            e = 0.0
            for di, dj in ((1, 0), (0, 1), (1, 1)):
                ii, jj = i + di, j + dj
                if ii <= n and jj <= m and E[ii, jj] != 0.0:
                    # R[ii, jj] = D + softmin(R[ii-1, jj], R[ii, jj-1], R[ii-1, jj-1])
                    s = R[ii, jj] - D[ii - 1, jj - 1]
                    e += E[ii, jj] * _weight(R[i, j], s, gamma)
            E[i, j] = e
    return E[1:n + 1, 1:m + 1].copy()


def dtw_path(D) -> list[tuple[int, int]]:
    """Hard DTW alignment as 0-based ``(target, generated)`` index pairs."""
    D = _check_matrix(D)
    n, m = D.shape
    _, R = softdtw_forward(D, 0.0)
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        moves = [(R[i - 1, j - 1], i - 1, j - 1), (R[i - 1, j], i - 1, j), (R[i, j - 1], i, j - 1)]
        _, i, j = min(moves, key=lambda t: t[0])
        path.append((i - 1, j - 1))
    return path[::-1]


def path_distance(a, b) -> float:
    """Squared Euclidean distance between two 28-parameter path vectors."""
    a = a.to_vector() if hasattr(a, "to_vector") else np.asarray(a, dtype=float)
    b = b.to_vector() if hasattr(b, "to_vector") else np.asarray(b, dtype=float)
    diff = a - b
    return float(diff @ diff)


def distance_matrix(target: PathSequence, generated: PathSequence) -> np.ndarray:
    """``d[i, j] = path_distance(target[i], generated[j])``."""
    t, g = target.params, generated.params
    diff = t[:, None, :] - g[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def dpw_loss(target: PathSequence, generated: PathSequence, gamma: float):
    """DPW between path sequences and its gradient w.r.t. ``generated.params``."""
    D = distance_matrix(target, generated)
    value, tables = dpw_forward(D, gamma)
    G = dpw_backward(tables, D)
    # d d[i, j] / d generated[j] = 2 (generated[j] - target[i])
    grad = 2.0 * (G.sum(axis=0)[:, None] * generated.params - G.T @ target.params)
    return value, grad


def softdtw_loss(target: PathSequence, generated: PathSequence, gamma: float):
    """SoftDTW counterpart of :func:`dpw_loss`."""
    D = distance_matrix(target, generated)
    value, R = softdtw_forward(D, gamma)
    E = softdtw_backward(R, D, gamma)
    grad = 2.0 * (E.sum(axis=0)[:, None] * generated.params - E.T @ target.params)
    return value, grad


def save_alignment_csv(G, path) -> None:
    """Write an alignment weight matrix as CSV, one row per target.

    The header names generated indices; the first column names the target.
    """
    G = np.asarray(G, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target"] + [f"gen{j}" for j in range(G.shape[1])])
        for i, row in enumerate(G):
            writer.writerow([i] + [repr(float(v)) for v in row])
