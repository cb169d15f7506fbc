"""
Numerical subspace algebra on small complex vector spaces.

Every subspace is carried as a column-orthonormal basis together with its
ambient dimension. The empty subspace keeps its ambient dimension and has a
basis with zero columns, so none of the set operations need special cases.

Ranks are decided with a relative singular-value threshold. Subspace
equality is decided through projectors, never through bases, because bases
are not unique.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

__all__ = [
    "RANK_TOL",
    "Subspace",
    "orthonormal_basis",
    "null_space",
    "intersect",
    "intersect_all",
    "subspace_sum",
    "sum_all",
    "complement",
    "full_space",
    "zero_space",
    "span",
    "same_subspace",
    "effective_dim",
]

RANK_TOL = 1e-9
EQUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Subspace:
    """A subspace of C^ambient_dim stored as an orthonormal basis.

    Parameters
    ----------
    ambient_dim : int
        Dimension of the enclosing space.
    basis : ndarray, shape (ambient_dim, dim)
        Column-orthonormal basis. ``dim`` may be zero.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=complex)
        if basis.ndim != 2 or basis.shape[0] != self.ambient_dim:
            raise ValueError(
                f"basis shape {basis.shape} incompatible with ambient "
                f"dimension {self.ambient_dim}"
            )
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def is_zero(self):
        return self.dim == 0

    @property
    def is_full(self):
        return self.dim == self.ambient_dim

    def projector(self):
        """Orthogonal projector onto the subspace."""
        return self.basis @ self.basis.conj().T

    def contains(self, vectors, tol=EQUAL_TOL):
        """True if every column of `vectors` lies in the subspace."""
        vectors = np.asarray(vectors, dtype=complex).reshape(self.ambient_dim, -1)
        residual = vectors - self.basis @ (self.basis.conj().T @ vectors)
        scale = max(np.linalg.norm(vectors), 1.0)
        return np.linalg.norm(residual) <= tol * scale

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def zero_space(n):
    return Subspace(n, np.zeros((n, 0), dtype=complex))


def full_space(n):
    return Subspace(n, np.eye(n, dtype=complex))


def _singular_split(M, tol, ref):
    """SVD of M with the numerical rank at threshold ``tol * ref``.

    `ref` defaults to the largest singular value, which gives the relative
    rank rule. Projector stacks pass ``ref=1`` because their natural scale
    is one and a numerically-zero stack must not be rescaled into noise.
    """
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return None, np.zeros(0), None, 0
    u, s, vh = np.linalg.svd(M)
    if ref is None:
        ref = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * ref)) if ref > 0 else 0
    return u, s, vh, rank


def orthonormal_basis(M, tol=RANK_TOL, ref=None):
    """Orthonormal basis of the column span of `M`.

    Parameters
    ----------
    M : array_like, shape (n, m)
        Matrix whose columns span the subspace. ``m`` may be zero.
    tol : float
        Singular values above ``tol * sigma_max`` count toward the rank.

    Returns
    -------
    Subspace
    """
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    n = M.shape[0]
    if M.shape[1] == 0:
        return zero_space(n)
    u, _, _, rank = _singular_split(M, tol, ref)
    return Subspace(n, u[:, :rank])


def null_space(M, tol=RANK_TOL, ref=None):
    """Subspace of vectors ``x`` with ``M x = 0`` up to the rank threshold."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    n = M.shape[1]
    if M.shape[0] == 0:
        return full_space(n)
    _, _, vh, rank = _singular_split(M, tol, ref)
    return Subspace(n, vh[rank:].conj().T)


def span(*vectors):
    """Span of the given vectors (each a 1-D array or a matrix of columns)."""
    cols = [np.asarray(v, dtype=complex).reshape(len(v), -1) for v in vectors]
    return orthonormal_basis(np.hstack(cols))


def _check_ambient(a, b):
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(
            f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}"
        )


def intersect(a, b, tol=RANK_TOL):
    """Largest subspace contained in both `a` and `b`.

    Computed from the part of `a`'s basis that sticks out of `b`. Its
    singular values are the sines of the principal angles, so they keep
    full relative precision near an intersection.
    """
    _check_ambient(a, b)
    if a.is_zero or b.is_zero:
        return zero_space(a.ambient_dim)
    if a.is_full:
        return b
    if b.is_full:
        return a
    if a.dim > b.dim:
        a, b = b, a
    A = a.basis
    outside = A - b.basis @ (b.basis.conj().T @ A)
    _, _, vh, rank = _singular_split(outside, tol, 1.0)
    return Subspace(a.ambient_dim, A @ vh[rank:].conj().T)


def intersect_all(spaces, n=None):
    spaces = list(spaces)
    if not spaces:
        return full_space(n)
    return reduce(intersect, spaces)


def subspace_sum(a, b, tol=RANK_TOL):
    """Span of the union of `a` and `b`."""
    _check_ambient(a, b)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return orthonormal_basis(np.hstack([a.basis, b.basis]), tol, ref=1.0)


def sum_all(spaces, n=None):
    spaces = list(spaces)
    if not spaces:
        return zero_space(n)
    return reduce(subspace_sum, spaces)


def complement(a, tol=RANK_TOL):
    """Orthogonal complement of `a`."""
    if a.is_zero:
        return full_space(a.ambient_dim)
    if a.is_full:
        return zero_space(a.ambient_dim)
    return orthonormal_basis(np.eye(a.ambient_dim) - a.projector(), tol, ref=1.0)


def same_subspace(a, b, tol=EQUAL_TOL):
    """Projector equality in Frobenius norm."""
    _check_ambient(a, b)
    if a.dim != b.dim:
        return False
    return np.linalg.norm(a.projector() - b.projector()) < tol


def effective_dim(w, null, tol=RANK_TOL):
    """Dimension of `w` that survives a map whose kernel is `null`.

    Equals ``dim(w) - dim(w & null)``, i.e. the rank of the projection of
    `w` onto the complement of `null`. It coincides with
    ``dim(w & complement(null))`` whenever `w` is spanned by vectors of
    `null` and of its complement.
    """
    _check_ambient(w, null)
    if w.is_zero or null.is_zero:
        return w.dim
    if null.is_full:
        return 0
    W = w.basis
    outside = W - null.basis @ (null.basis.conj().T @ W)
    return int(np.sum(np.linalg.svd(outside, compute_uv=False) > tol))
