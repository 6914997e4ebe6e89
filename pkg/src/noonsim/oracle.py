"""Dense brute-force reference for linear-optical Fock transformations.

Builds the full transfer matrix of a mode unitary on a fixed photon-number
sector from permanents of repeated-row/column submatrices, with the permanent
itself evaluated by summing over all permutations. Slow by design; it only
exists to cross-check :func:`noonsim.fock.apply_mode_pair_unitary`.
"""

import itertools
import math

import numpy as np


def permanent(mat) -> complex:
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    if n == 0:
        return 1.0 + 0j
    total = 0j
    for perm in itertools.permutations(range(n)):
        prod = 1.0 + 0j
        for row, col in enumerate(perm):
            prod *= mat[row, col]
        total += prod
    return total


def sector_basis(n_modes: int, n_photons: int) -> list:
    """All occupation tuples with exactly ``n_photons``, lexicographic order."""
    return sorted(
        occ for occ in itertools.product(range(n_photons + 1), repeat=n_modes) if sum(occ) == n_photons
    )


def embed(u2, n_modes: int, i: int, j: int) -> np.ndarray:
    full = np.eye(n_modes, dtype=complex)
    full[np.ix_([i, j], [i, j])] = np.asarray(u2, dtype=complex)
    return full


def fock_transfer_matrix(u, basis: list) -> np.ndarray:
    """Matrix elements <out|U|in> over ``basis`` for mode unitary ``u``.

    Convention: a_j^dagger -> sum_k u[k, j] a_k^dagger.
    """
    u = np.asarray(u, dtype=complex)
    dim = len(basis)
    mat = np.zeros((dim, dim), dtype=complex)
    for c, n_in in enumerate(basis):
        cols = [j for j, n in enumerate(n_in) for _ in range(n)]
        norm_in = math.prod(math.factorial(n) for n in n_in)
        for r, n_out in enumerate(basis):
            rows = [k for k, n in enumerate(n_out) for _ in range(n)]
            norm_out = math.prod(math.factorial(n) for n in n_out)
            sub = u[np.ix_(rows, cols)]
            mat[r, c] = permanent(sub) / math.sqrt(norm_in * norm_out)
    return mat
