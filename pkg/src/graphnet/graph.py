"""Penalty graphs: lattice adjacency, Laplacians and augmented block forms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, ParameterError, ShapeError
from .tensor_io import LatticeShape


@dataclass(frozen=True, eq=False)
class PenaltyGraph:
    """Sparse symmetric PSD ``p x p`` matrix used in the quadratic penalty.

    ``base`` holds the graph without any identity shift; ``diag_shift`` is
    added to every diagonal entry on access.
    """

    base: sp.csr_matrix
    kind: str = "custom"
    diag_shift: float = 0.0

    def __post_init__(self):
        base = sp.csr_matrix(self.base, dtype=float)
        if base.shape[0] != base.shape[1]:
            raise GraphError(f"penalty graph must be square, got {base.shape}")
        base.sum_duplicates()
        base.eliminate_zeros()
        base.sort_indices()
        if abs(base - base.T).max() > 1e-12 if base.nnz else False:
            raise GraphError("penalty graph must be symmetric")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "diag_shift", float(self.diag_shift))

    @property
    def size(self) -> int:
        return self.base.shape[0]

    @property
    def matrix(self) -> sp.csr_matrix:
        if self.diag_shift == 0.0:
            return self.base
        return (self.base + self.diag_shift * sp.identity(self.size, format="csr")).tocsr()

    def entry(self, i, j) -> float:
        return float(self.base[i, j]) + (self.diag_shift if i == j else 0.0)

    def diagonal(self) -> np.ndarray:
        return self.base.diagonal() + self.diag_shift

    def neighbors(self, j):
        """Off-diagonal ``(indices, weights)`` of row ``j``."""
        lo, hi = self.base.indptr[j], self.base.indptr[j + 1]
        idx = self.base.indices[lo:hi]
        w = self.base.data[lo:hi]
        keep = idx != j
        return idx[keep], w[keep]

    def offdiagonal_csr(self):
        """CSR arrays of the off-diagonal part, for the solver kernels."""
        off = self.base - sp.diags(self.base.diagonal())
        off = sp.csr_matrix(off)
        off.eliminate_zeros()
        off.sort_indices()
        return (
            off.indptr.astype(np.int64),
            off.indices.astype(np.int64),
            off.data.astype(float),
        )

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class AugmentedGraph:
    """Zero-padded block form of a graph for the auxiliary-variable problems.

    Layout is ``[beta, alpha]`` (size p + n) or ``[b0, beta, alpha]``
    (size 1 + p + n) when ``with_intercept`` is set.
    """

    base: PenaltyGraph
    n: int
    with_intercept: bool = False

    @property
    def offset(self) -> int:
        return 1 if self.with_intercept else 0

    @property
    def total_size(self) -> int:
        return self.offset + self.base.size + self.n

    @property
    def matrix(self) -> sp.csr_matrix:
        p = self.base.size
        blocks = [[self.base.matrix, sp.csr_matrix((p, self.n))],
                  [sp.csr_matrix((self.n, p)), sp.csr_matrix((self.n, self.n))]]
        m = sp.bmat(blocks, format="csr")
        if self.with_intercept:
            m = sp.bmat([[sp.csr_matrix((1, 1)), None], [None, m]], format="csr")
        return m

    def entry(self, i, j) -> float:
        i, j = i - self.offset, j - self.offset
        p = self.base.size
        if 0 <= i < p and 0 <= j < p:
            return self.base.entry(i, j)
        return 0.0

    def penalty_value(self, gamma) -> float:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.total_size,):
            raise ShapeError(f"expected vector of length {self.total_size}")
        beta = gamma[self.offset:self.offset + self.base.size]
        return graph_penalty_value(self.base, beta)


def lattice_adjacency(shape: LatticeShape, connect_time: bool = True) -> sp.csr_matrix:
    """Unit-weight adjacency between masked voxels one step apart along an axis."""
    if shape.p == 0:
        raise GraphError("lattice mask is empty")
    grid = shape.column_grid()
    rows, cols = [], []
    axes = (0, 1, 2, 3) if connect_time else (0, 1, 2)
    for axis in axes:
        if grid.shape[axis] < 2:
            continue
        a = np.take(grid, np.arange(grid.shape[axis] - 1), axis=axis).ravel()
        b = np.take(grid, np.arange(1, grid.shape[axis]), axis=axis).ravel()
        keep = (a >= 0) & (b >= 0)
        rows.append(a[keep])
        cols.append(b[keep])
    p = shape.p
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.empty(0, dtype=np.int64)
    upper = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(p, p))
    return (upper + upper.T).tocsr()


def read_edge_list(path, p: int) -> sp.csr_matrix:
    """Read a weighted ``i j weight`` edge list (0-based) into an adjacency matrix."""
    edges = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) not in (2, 3):
                raise GraphError(f"{path}:{lineno}: expected 'i j [weight]'")
            i, j = int(fields[0]), int(fields[1])
            w = float(fields[2]) if len(fields) == 3 else 1.0
            if not (0 <= i < p and 0 <= j < p):
                raise GraphError(f"{path}:{lineno}: node index out of range for p={p}")
            if i == j:
                raise GraphError(f"{path}:{lineno}: self-edge on node {i}")
            # an edge listed in both directions is the same edge
            edges[(min(i, j), max(i, j))] = w
    r = np.array([e[0] for e in edges], dtype=np.int64)
    c = np.array([e[1] for e in edges], dtype=np.int64)
    w = np.array(list(edges.values()), dtype=float)
    upper = sp.coo_matrix((w, (r, c)), shape=(p, p))
    return (upper + upper.T).tocsr()


def laplacian(adjacency) -> PenaltyGraph:
    """``L = D - A`` for a symmetric adjacency matrix without self-edges."""
    A = sp.csr_matrix(adjacency, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise GraphError("adjacency must be square")
    if A.nnz and abs(A - A.T).max() > 1e-12:
        raise GraphError("adjacency must be symmetric")
    if np.any(A.diagonal() != 0):
        raise GraphError("adjacency must not contain self-edges")
    degree = np.asarray(A.sum(axis=1)).ravel()
    L = sp.diags(degree) - A
    return PenaltyGraph(sp.csr_matrix(L), kind="laplacian")


def identity_graph(p: int) -> PenaltyGraph:
    return PenaltyGraph(sp.identity(p, format="csr"), kind="identity")


def zero_graph(p: int) -> PenaltyGraph:
    return PenaltyGraph(sp.csr_matrix((p, p)), kind="laplacian")


def lattice_laplacian(shape: LatticeShape, connect_time: bool = True) -> PenaltyGraph:
    return laplacian(lattice_adjacency(shape, connect_time))


def shift_diagonal(G: PenaltyGraph, lambda2: float, lambdaG: float) -> PenaltyGraph:
    """Return ``G + (lambda2 / lambdaG) I``, or ``G + lambda2 I`` when ``lambdaG == 0``."""
    if lambda2 < 0 or lambdaG < 0:
        raise ParameterError("lambda2 and lambdaG must be non-negative")
    if lambda2 == 0:
        return G
    eta = lambda2 / lambdaG if lambdaG > 0 else lambda2
    return PenaltyGraph(G.base, kind=G.kind, diag_shift=G.diag_shift + eta)


def graph_penalty_value(G: PenaltyGraph, beta) -> float:
    """``beta^T G beta``."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != G.size:
        raise ShapeError(f"beta has length {beta.size}, graph has size {G.size}")
    return float(beta @ (G.base @ beta) + G.diag_shift * (beta @ beta))


def edge_difference_penalty(adjacency, beta) -> float:
    """Sum of ``w_ij (beta_i - beta_j)^2`` over the edges of ``adjacency``."""
    A = sp.triu(sp.csr_matrix(adjacency), k=1).tocoo()
    beta = np.asarray(beta, dtype=float)
    return float(np.sum(A.data * (beta[A.row] - beta[A.col]) ** 2))


def augment(G: PenaltyGraph, n: int, with_intercept: bool = False) -> AugmentedGraph:
    return AugmentedGraph(G, int(n), bool(with_intercept))
