"""Dense linear-algebra primitives and instance-level complexity measures.

This module holds the numerical substrate for the rest of the package: a thin
SVD with relative rank truncation, row leverage scores, the unlabeled-mass
trace ``reduced_rank`` that governs label-query complexity, the regularized
spectrum sums ``statistical_dimension`` and ``effective_dimension``, and a
symmetric PSD matrix square root.

All operations are pure functions of immutable inputs and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NotPsdError, SingularMatrixError

__all__ = [
    "Dataset",
    "SvdFactors",
    "as_matrix",
    "as_vector",
    "thin_svd",
    "leverage_scores",
    "reduced_rank",
    "statistical_dimension",
    "effective_dimension",
    "psd_sqrt",
]

DEFAULT_RANK_TOL = 1e-10

# Tolerances baked into the SvdFactors contract.
ORTHONORMALITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8


def as_matrix(x, name: str = "matrix", allow_empty: bool = False) -> np.ndarray:
    """Coerce ``x`` to a read-only float64 2-D array, rejecting non-finite entries."""
    arr = np.array(x, dtype=float, order="C")
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size == 0 and not allow_empty:
        raise InvalidInputError(f"{name} must be non-empty")
    if arr.size and not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def as_vector(x, name: str = "vector", allow_empty: bool = False) -> np.ndarray:
    """Coerce ``x`` to a read-only float64 1-D array, rejecting non-finite entries."""
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise InvalidInputError(f"{name} must be non-empty")
    if arr.size and not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """A semi-supervised regression instance.

    ``x_unlabeled`` holds the rows whose labels must be bought one by one;
    ``x_labeled`` holds the rows whose labels ``y_labeled`` come for free.
    Row ``i`` of the stacked design refers to ``x_unlabeled[i]`` for
    ``i < n1`` and to ``x_labeled[i - n1]`` otherwise.
    """

    x_unlabeled: np.ndarray
    x_labeled: np.ndarray
    y_labeled: np.ndarray

    def __post_init__(self):
        x1 = as_matrix(self.x_unlabeled, "x_unlabeled")
        x2 = as_matrix(self.x_labeled, "x_labeled", allow_empty=True)
        y2 = as_vector(self.y_labeled, "y_labeled", allow_empty=True)
        if x2.ndim != 2 or x2.shape[1] != x1.shape[1]:
            raise InvalidInputError(
                f"column mismatch: x_unlabeled has {x1.shape[1]}, x_labeled has {x2.shape[1]}"
            )
        if y2.shape[0] != x2.shape[0]:
            raise InvalidInputError(
                f"y_labeled has {y2.shape[0]} entries for {x2.shape[0]} labeled rows"
            )
        if x1.shape[0] + x2.shape[0] < x1.shape[1]:
            raise InvalidInputError(
                "underconstrained instance: n1 + n2 must be at least d"
            )
        object.__setattr__(self, "x_unlabeled", x1)
        object.__setattr__(self, "x_labeled", x2)
        object.__setattr__(self, "y_labeled", y2)

    @property
    def n1(self) -> int:
        return self.x_unlabeled.shape[0]

    @property
    def n2(self) -> int:
        return self.x_labeled.shape[0]

    @property
    def d(self) -> int:
        return self.x_unlabeled.shape[1]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def stacked(self) -> np.ndarray:
        """All rows, unlabeled block first."""
        return np.vstack([self.x_unlabeled, self.x_labeled])


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``X = U diag(sigma) V^T`` truncated at a relative rank tolerance.

    ``u`` is (n, r) and ``v`` is (d, r), both with orthonormal columns;
    ``sigma`` is strictly positive and non-increasing.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank_tol: float

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    @property
    def d(self) -> int:
        return self.v.shape[0]

    def validate(self, x: np.ndarray | None = None) -> None:
        """Check orthonormality, ordering and (optionally) reconstruction error."""
        u, s, v = self.u, self.sigma, self.v
        r = self.rank
        if u.shape != (self.n, r) or v.shape != (self.d, r):
            raise InvalidInputError("inconsistent factor shapes")
        if r == 0:
            raise InvalidInputError("factors have rank zero")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise InvalidInputError("singular values must be positive and non-increasing")
        eye = np.eye(r)
        if np.max(np.abs(u.T @ u - eye)) > ORTHONORMALITY_TOL:
            raise InvalidInputError("left factor columns are not orthonormal")
        if np.max(np.abs(v.T @ v - eye)) > ORTHONORMALITY_TOL:
            raise InvalidInputError("right factor columns are not orthonormal")
        if x is not None:
            x = np.asarray(x, dtype=float)
            err = np.linalg.norm((u * s) @ v.T - x)
            if err > RECONSTRUCTION_TOL * max(np.linalg.norm(x), 1e-300):
                raise InvalidInputError("factors do not reconstruct the input matrix")

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def thin_svd(x, rank_tol: float = DEFAULT_RANK_TOL) -> SvdFactors:
    """Thin SVD of ``x`` with singular values below ``rank_tol * sigma_max`` dropped.

    Parameters
    ----------
    x : array_like, shape (n, d)
        Design matrix.  All entries must be finite.
    rank_tol : float
        Relative truncation threshold, required in (0, 1e-3].

    Returns
    -------
    SvdFactors
    """
    if not (0.0 < rank_tol <= 1e-3):
        raise InvalidInputError(f"rank_tol must lie in (0, 1e-3], got {rank_tol}")
    arr = as_matrix(x, "x")
    u, s, vt = np.linalg.svd(arr, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise InvalidInputError("matrix has numerical rank zero")
    keep = s > rank_tol * s[0]
    r = int(np.count_nonzero(keep))
    if r == 0:
        raise InvalidInputError("matrix has numerical rank zero")
    factors = SvdFactors(
        u=np.ascontiguousarray(u[:, :r]),
        sigma=np.ascontiguousarray(s[:r]),
        v=np.ascontiguousarray(vt[:r].T),
        rank_tol=float(rank_tol),
    )
    factors.validate(arr)
    return factors


def leverage_scores(svd: SvdFactors) -> np.ndarray:
    """Squared row norms of the left singular factor.

    Entries lie in [0, 1] and sum to the rank of the design matrix.
    """
    return np.einsum("ij,ij->i", svd.u, svd.u)


def reduced_rank(
    ds: Dataset,
    rank_tol: float = DEFAULT_RANK_TOL,
    method: str = "svd",
) -> float:
    """Share of the stacked design's spectral mass carried by the unlabeled block.

    Defined as ``Tr((X1^T X1 + X2^T X2)^{-1} X1^T X1)``, which equals the sum
    of leverage scores of the unlabeled rows in the stacked design.  The value
    lies in [0, min(d, n1)] and upper-bounds how much label-querying an
    importance sampler must do relative to the labeled block.

    Parameters
    ----------
    ds : Dataset
    rank_tol : float
        Relative rank threshold used by either method.
    method : {"svd", "inverse"}
        "svd" (default) sums unlabeled-row leverage scores of the stacked
        design and is well defined even when the stacked Gram matrix is
        singular.  "inverse" evaluates the trace formula directly and raises
        :class:`SingularMatrixError` when the Gram matrix is rank deficient;
        it exists as an independent cross-check of the svd route.
    """
    if method == "svd":
        svd = thin_svd(ds.stacked(), rank_tol=rank_tol)
        return float(leverage_scores(svd)[: ds.n1].sum())
    if method == "inverse":
        x1, x2 = ds.x_unlabeled, ds.x_labeled
        g1 = x1.T @ x1
        gram = g1 + x2.T @ x2
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= (rank_tol ** 2) * max(eigs[-1], 0.0) or eigs[-1] <= 0.0:
            raise SingularMatrixError(
                "stacked Gram matrix is numerically singular; use method='svd'"
            )
        return float(np.trace(np.linalg.solve(gram, g1)))
    raise InvalidInputError(f"unknown method {method!r}")


def statistical_dimension(sigma, lam: float) -> float:
    """Regularized spectrum sum ``sum_i sigma_i^2 / (sigma_i^2 + lam)``.

    ``sigma`` are the singular values of the unlabeled design; at ``lam = 0``
    this is the rank.  Equals :func:`reduced_rank` of the instance obtained by
    stacking ``sqrt(lam) * I`` below the design with zero labels.
    """
    if lam < 0:
        raise InvalidInputError(f"lam must be nonnegative, got {lam}")
    s = as_vector(sigma, "sigma")
    if np.any(s <= 0):
        raise InvalidInputError("singular values must be positive")
    s2 = s * s
    return float(np.sum(s2 / (s2 + lam)))


def effective_dimension(eigs, lam: float) -> float:
    """Regularized eigenvalue sum ``sum_i e_i / (e_i + lam)`` over positive ``e_i``.

    ``eigs`` are eigenvalues of a PSD kernel matrix; nonpositive entries
    (numerically zero modes) contribute nothing and are ignored.
    """
    if lam < 0:
        raise InvalidInputError(f"lam must be nonnegative, got {lam}")
    e = as_vector(eigs, "eigs")
    e = e[e > 0]
    if e.size == 0:
        return 0.0
    return float(np.sum(e / (e + lam)))


def psd_sqrt(
    k,
    rel_asym_tol: float = 1e-8,
    neg_eig_tol: float = 1e-8,
    zero_tol: float = 1e-12,
) -> np.ndarray:
    """Symmetric PSD square root ``Z`` of a kernel matrix, ``Z @ Z = K``.

    Eigenvalues in ``[-neg_eig_tol * ||K||_2, 0)`` are clamped to zero;
    anything lower raises :class:`NotPsdError`.  Asymmetry beyond
    ``rel_asym_tol`` relative to the largest entry is rejected.

    Eigenvalues within ``zero_tol * ||K||_2`` of zero are treated as exact
    zero modes.  Keeping them would turn eigendecomposition round-off of
    order ``eps`` into spurious ``sqrt(eps)``-sized directions of ``Z``,
    inflating the numerical rank of anything built on top of the root.
    """
    arr = as_matrix(k, "k")
    n0, n1 = arr.shape
    if n0 != n1:
        raise InvalidInputError(f"kernel matrix must be square, got {arr.shape}")
    scale = max(float(np.max(np.abs(arr))), 1e-300)
    if np.max(np.abs(arr - arr.T)) > rel_asym_tol * scale:
        raise InvalidInputError("kernel matrix is not symmetric")
    sym = 0.5 * (arr + arr.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    top = max(float(eigvals[-1]), 0.0)
    if eigvals[0] < -neg_eig_tol * max(top, 1e-300):
        raise NotPsdError(
            f"kernel matrix has eigenvalue {eigvals[0]:.3e}, below the PSD tolerance"
        )
    clamped = np.where(eigvals <= zero_tol * top, 0.0, eigvals)
    root = (eigvecs * np.sqrt(clamped)) @ eigvecs.T
    return 0.5 * (root + root.T)
