# -*- coding: utf-8 -*-
"""
    twr_kernels

    Dense complex linear algebra shared by the twr_* modules: Kronecker products, column-major
    vectorization, Hermitian eigen/factor helpers, PSD projections and the selection matrix E that
    turns vec(S kron I) into a linear map of vec(S).

    Eigenvalues are always returned in descending order. Callers that need ascending order
    permute explicitly.

    :license: BSD, see LICENSE for more details.
"""

import logging
from collections import namedtuple

import numpy as np
import scipy.linalg

from twr_training import DimensionMismatch, NotPSD, NotJointlyDiagonalizable, SingularGram

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
PSD_FLOOR = 1e-10

# irrational mixing weight for joint_eig, keeps accidental eigenvalue ties unlikely
JOINT_EIG_MIX = 0.7548776662466927

HermitianEig = namedtuple('HermitianEig', ('vectors', 'values'))


def kron(a, b):
    return np.kron(np.asarray(a), np.asarray(b))


def vec(a):
    """Stack the columns of ``a`` into one vector."""
    return np.asarray(a).reshape(-1, order='F')


def unvec(v, rows, cols):
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionMismatch('unvec', rows * cols, v.size)
    return v.reshape((rows, cols), order='F')


def hermitize(a):
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * max(scale, np.finfo(float).tiny)


def hermitian_eig(a):
    """Eigendecomposition of a Hermitian matrix with eigenvalues sorted descending.

    Returns a ``HermitianEig(vectors, values)``; ``vectors`` is unitary and
    ``vectors @ diag(values) @ vectors^H`` reconstructs ``a``.
    """
    values, vectors = scipy.linalg.eigh(hermitize(a))
    return HermitianEig(vectors[:, ::-1], values[::-1])


def psd_floor(a):
    """Tolerance floor below which an eigenvalue is treated as a genuine negative one."""
    a = np.asarray(a)
    n = a.shape[0]
    return -PSD_FLOOR * abs(np.trace(a).real) / n


def hermitian_factor(z):
    """Return C = U Sigma^(1/2) with C C^H = z.

    Eigenvalues are clipped at zero once they pass the PSD tolerance floor; anything below the
    floor raises ``NotPSD``.
    """
    eig = hermitian_eig(z)
    floor = psd_floor(z)
    if eig.values.size and eig.values[-1] < floor:
        raise NotPSD(eig.values[-1], floor)
    if eig.values.size and eig.values[-1] < 0.0:
        logger.debug("clipping eigenvalue %g of a numerically PSD matrix" % eig.values[-1])
    return eig.vectors * np.sqrt(np.clip(eig.values, 0.0, None))[np.newaxis, :]


def psd_project(a):
    """Euclidean projection of a Hermitian matrix onto the PSD cone (eigenvalue clipping)."""
    eig = hermitian_eig(a)
    clipped = np.clip(eig.values, 0.0, None)
    return hermitize((eig.vectors * clipped) @ eig.vectors.conj().T)


def project_capped_simplex(values, budget):
    """Euclidean projection of a real vector onto {x >= 0, sum(x) <= budget}."""
    values = np.asarray(values, dtype=float)
    clipped = np.clip(values, 0.0, None)
    if clipped.sum() <= budget:
        return clipped
    if budget <= 0.0:
        return np.zeros_like(clipped)
    # projection onto the simplex sum(x) = budget
    ordered = np.sort(values)[::-1]
    cumulative = np.cumsum(ordered) - budget
    index = np.arange(1, values.size + 1)
    rho = np.nonzero(ordered - cumulative / index > 0)[0][-1]
    shift = cumulative[rho] / (rho + 1.0)
    return np.clip(values - shift, 0.0, None)


def project_psd_trace(a, budget):
    """Euclidean projection of a Hermitian matrix onto {Q PSD, Tr(Q) <= budget}."""
    eig = hermitian_eig(a)
    values = project_capped_simplex(eig.values, budget)
    return hermitize((eig.vectors * values) @ eig.vectors.conj().T)


def psd_sqrt(a):
    eig = hermitian_eig(a)
    root = np.sqrt(np.clip(eig.values, 0.0, None))
    return hermitize((eig.vectors * root) @ eig.vectors.conj().T)


def inv_sqrt(a):
    """Hermitian inverse square root; ``a`` must be positive definite."""
    eig = hermitian_eig(a)
    if eig.values.size and eig.values[-1] <= 0.0:
        raise SingularGram('inverse square root of a matrix with eigenvalue %g' % eig.values[-1])
    root = 1.0 / np.sqrt(eig.values)
    return hermitize((eig.vectors * root) @ eig.vectors.conj().T)


def hermitian_solve(a, b):
    """Solve a x = b for Hermitian positive definite ``a`` via Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(hermitize(a), lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularGram('Cholesky factorization failed: %s' % e)
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def solve(a, b):
    """Generic LU solve for matrices without Hermitian structure."""
    try:
        return scipy.linalg.solve(a, b, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularGram('LU factorization failed: %s' % e)


def joint_eig(a, b, tol=1e-8):
    """Common eigenbasis of two commuting Hermitian matrices.

    Returns ``(vectors, values_a, values_b)`` with ``values_a`` descending and ``values_b`` paired
    with the same eigenvectors. Raises ``NotJointlyDiagonalizable`` when the matrices do not share
    an eigenbasis.
    """
    a = hermitize(a)
    b = hermitize(b)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    weight = JOINT_EIG_MIX * norm_a / norm_b if norm_a > 0.0 and norm_b > 0.0 else 1.0
    vectors = hermitian_eig(a + weight * b).vectors
    da = vectors.conj().T @ a @ vectors
    db = vectors.conj().T @ b @ vectors
    off_a = np.linalg.norm(da - np.diag(np.diag(da)))
    off_b = np.linalg.norm(db - np.diag(np.diag(db)))
    if off_a > tol * max(norm_a, 1.0) or off_b > tol * max(norm_b, 1.0):
        raise NotJointlyDiagonalizable('off-diagonal residuals %g and %g' % (off_a, off_b))
    values_a = np.diag(da).real
    values_b = np.diag(db).real
    # stable so that ties keep their index order
    order = np.argsort(-values_a, kind='stable')
    return vectors[:, order], values_a[order], values_b[order]


def selection_matrix_E(n_rows, m, l):
    """Matrix E with vec(S kron I_m) = E vec(S) for every S of shape (n_rows, l).

    E is block diagonal with l copies of the block that places column j of S into the
    corresponding column block of S kron I_m.
    """
    block = np.zeros((n_rows * m * m, n_rows))
    for i in range(n_rows):
        for b in range(m):
            block[i * m + b + b * n_rows * m, i] = 1.0
    return scipy.linalg.block_diag(*([block] * l))


def is_majorized(x, y, tol=1e-9):
    """True when x is majorized by y (partial sums of the sorted entries, equal totals)."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    y = np.sort(np.asarray(y, dtype=float))[::-1]
    if x.size != y.size:
        raise DimensionMismatch('majorization', y.size, x.size)
    scale = tol * max(1.0, np.abs(y).sum())
    if abs(x.sum() - y.sum()) > scale:
        return False
    return bool(np.all(np.cumsum(x) <= np.cumsum(y) + scale))
