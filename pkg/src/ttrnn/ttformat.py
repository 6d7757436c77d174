"""Tensor-train (MPS) and matrix-product-operator (MPO) formats.

A TT vector factors an order-N tensor into a chain of 3rd-order cores
``(R_{n-1}, K_n, R_n)`` linked by ranks with ``R_0 = R_N = 1``.  A TT
matrix stores a big ``M x P`` matrix as 4th-order cores
``(R_{n-1}, I_n, J_n, R_n)`` where ``P = prod(I_n)`` indexes columns
(inputs) and ``M = prod(J_n)`` indexes rows (outputs), both flattened
fastest-first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import DenseTensor, check_shape, element_count


class RankMismatch(ValueError):
    """Adjacent cores disagree on their linking rank, or boundary rank != 1."""


class InvalidRank(ValueError):
    """Requested TT ranks are malformed."""


class LengthMismatch(ValueError):
    """Dimension / rank lists have inconsistent lengths."""


def _check_chain(cores, ndim_expected: int, what: str):
    if not cores:
        raise RankMismatch(f"{what} needs at least one core")
    for k, c in enumerate(cores):
        if c.ndim != ndim_expected:
            raise RankMismatch(
                f"{what} core {k} has {c.ndim} modes, expected {ndim_expected}"
            )
    if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
        raise RankMismatch(f"{what} boundary ranks must be 1")
    for k in range(len(cores) - 1):
        if cores[k].shape[-1] != cores[k + 1].shape[0]:
            raise RankMismatch(
                f"{what} cores {k} and {k + 1} link ranks "
                f"{cores[k].shape[-1]} != {cores[k + 1].shape[0]}"
            )


@dataclass(frozen=True)
class TTVector:
    """Chain of 3rd-order cores representing an order-N tensor."""

    cores: list

    def __post_init__(self):
        object.__setattr__(
            self, "cores", [np.asarray(c, dtype=np.float64) for c in self.cores]
        )
        _check_chain(self.cores, 3, "TT vector")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def n_params(self) -> int:
        return sum(c.size for c in self.cores)


@dataclass(frozen=True)
class TTMatrix:
    """Chain of 4th-order cores representing an (prod out) x (prod in) matrix."""

    cores: list

    def __post_init__(self):
        object.__setattr__(
            self, "cores", [np.asarray(c, dtype=np.float64) for c in self.cores]
        )
        _check_chain(self.cores, 4, "TT matrix")

    @property
    def in_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def out_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def n_in(self) -> int:
        return math.prod(self.in_dims)

    @property
    def n_out(self) -> int:
        return math.prod(self.out_dims)

    @property
    def n_params(self) -> int:
        return sum(c.size for c in self.cores)


def tt_reconstruct(v: TTVector) -> DenseTensor:
    """Assemble the full tensor by chaining contractions over the rank links."""
    t = v.cores[0]
    for core in v.cores[1:]:
        t = np.tensordot(t, core, axes=(t.ndim - 1, 0))
    return DenseTensor.from_ndarray(t.reshape(t.shape[1:-1]))


def tt_reconstruct_slices(v: TTVector) -> DenseTensor:
    """Entry-by-entry assembly via slice matrix products.

    Exponential in the order; kept as an independent cross-check for
    :func:`tt_reconstruct`.
    """
    dims = v.dims
    out = DenseTensor.zeros(dims)
    buf = out.data
    for off in range(out.size):
        rem, idx = off, []
        for d in dims:
            idx.append(rem % d)
            rem //= d
        acc = v.cores[0][:, idx[0], :]
        for n in range(1, len(dims)):
            acc = acc @ v.cores[n][:, idx[n], :]
        buf[off] = acc[0, 0]
    return out


def mpo_reconstruct(w: TTMatrix) -> DenseTensor:
    """Assemble the order-2N tensor with interleaved (in_1, out_1, ..., in_N, out_N) modes."""
    t = w.cores[0]
    for core in w.cores[1:]:
        t = np.tensordot(t, core, axes=(t.ndim - 1, 0))
    return DenseTensor.from_ndarray(t.reshape(t.shape[1:-1]))


def mpo_to_matrix(w: TTMatrix) -> DenseTensor:
    """Dense (prod out) x (prod in) matrix equivalent of a TT matrix.

    Rows are output multi-indices, columns input multi-indices, each
    flattened fastest-first, so ``y = W @ x_flat`` matches applying the
    cores to the tensorized input.
    """
    nd = mpo_reconstruct(w).to_ndarray()
    n = len(w.cores)
    perm = tuple(range(1, 2 * n, 2)) + tuple(range(0, 2 * n, 2))
    mat = nd.transpose(perm).reshape((w.n_out, w.n_in), order="F")
    return DenseTensor.from_ndarray(mat)


def _truncation_rank(s: np.ndarray, budget: float) -> int:
    """Largest tail of singular values whose root-sum-square fits in budget."""
    tail = 0.0
    r = len(s)
    while r > 1 and math.sqrt(tail + s[r - 1] ** 2) <= budget:
        tail += s[r - 1] ** 2
        r -= 1
    return r


def tt_svd(t: DenseTensor, max_ranks=None, tol: float | None = None) -> TTVector:
    """Sequential-SVD construction of a TT vector from a dense tensor.

    Each step unfolds the remainder into a ``(R_{n-1}*K_n) x rest`` matrix,
    takes a thin SVD and keeps the leading ``R_n`` columns.  With neither
    ``max_ranks`` nor ``tol`` the decomposition is exact up to floating
    point.  ``max_ranks`` is the full rank tuple ``(R_0, ..., R_N)`` with
    boundary ones; ``tol`` is a relative Frobenius error budget spread as
    ``tol/sqrt(N-1)`` per unfolding.
    """
    dims = t.shape
    n_modes = len(dims)
    if n_modes == 0:
        raise InvalidRank("cannot decompose an order-0 tensor")
    if max_ranks is not None:
        max_ranks = tuple(int(r) for r in max_ranks)
        if len(max_ranks) != n_modes + 1:
            raise InvalidRank(
                f"max_ranks needs {n_modes + 1} entries for an order-{n_modes} "
                f"tensor, got {len(max_ranks)}"
            )
        if any(r < 1 for r in max_ranks):
            raise InvalidRank(f"ranks must be positive, got {max_ranks}")
        if max_ranks[0] != 1 or max_ranks[-1] != 1:
            raise InvalidRank("boundary ranks must be 1")
    budget = None
    if tol is not None:
        norm = math.sqrt(float(np.dot(t.data, t.data)))
        budget = tol * norm / math.sqrt(max(n_modes - 1, 1))

    rem = np.array(t.data)
    r_prev = 1
    cores = []
    for n in range(n_modes - 1):
        mat = rem.reshape((r_prev * dims[n], -1), order="F")
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        # numerically-zero singular values carry no content; dropping them
        # keeps exact low-rank structure at its true rank
        cutoff = s[0] * max(mat.shape) * np.finfo(np.float64).eps if s.size else 0.0
        r = int(np.sum(s > cutoff))
        if max_ranks is not None:
            r = min(r, max_ranks[n + 1])
        if budget is not None:
            r = min(r, _truncation_rank(s, budget))
        r = max(r, 1)
        cores.append(u[:, :r].reshape((r_prev, dims[n], r), order="F"))
        rem = (s[:r, None] * vt[:r, :]).ravel(order="F")
        r_prev = r
    cores.append(rem.reshape((r_prev, dims[-1], 1), order="F"))
    return TTVector(cores)


def tt_param_count(in_dims, out_dims, ranks) -> int:
    """Parameter count of a TT matrix: sum of I_n * J_n * R_{n-1} * R_n."""
    in_dims = check_shape(in_dims)
    out_dims = check_shape(out_dims)
    ranks = tuple(int(r) for r in ranks)
    if len(in_dims) != len(out_dims):
        raise LengthMismatch(
            f"in_dims has {len(in_dims)} modes, out_dims has {len(out_dims)}"
        )
    if len(ranks) != len(in_dims) + 1:
        raise LengthMismatch(
            f"ranks needs {len(in_dims) + 1} entries, got {len(ranks)}"
        )
    if ranks[0] != 1 or ranks[-1] != 1:
        raise LengthMismatch("boundary ranks must be 1")
    return sum(
        i * j * r0 * r1 for i, j, r0, r1 in zip(in_dims, out_dims, ranks, ranks[1:])
    )


def dense_param_count(in_dims, out_dims) -> int:
    """Parameter count of the uncompressed matrix: prod(in) * prod(out)."""
    return element_count(check_shape(in_dims)) * element_count(check_shape(out_dims))


def full_ranks(n_modes: int, rank: int) -> tuple[int, ...]:
    """Rank tuple (1, rank, ..., rank, 1) with n_modes-1 interior entries."""
    if n_modes < 1:
        raise InvalidRank("need at least one mode")
    return (1,) + (int(rank),) * (n_modes - 1) + (1,)


# --- text serialization -----------------------------------------------------
#
# One header line carrying dims and ranks, then one line of flat core data
# per core, fastest-index-first, as decimal floating point.  Used by the
# model checkpoint files.


def _fmt_values(arr: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in arr.ravel(order="F"))


def _parse_values(line: str, shape) -> np.ndarray:
    vals = np.array([float(x) for x in line.split()], dtype=np.float64)
    if vals.size != element_count(shape):
        raise ValueError(f"expected {element_count(shape)} values, got {vals.size}")
    return vals.reshape(shape, order="F")


def _ints(csv: str) -> tuple[int, ...]:
    return tuple(int(x) for x in csv.split(","))


def format_tt_vector(v: TTVector) -> str:
    header = "ttvec dims={} ranks={}".format(
        ",".join(map(str, v.dims)), ",".join(map(str, v.ranks))
    )
    return "\n".join([header] + [_fmt_values(c) for c in v.cores]) + "\n"


def parse_tt_vector(text: str) -> TTVector:
    lines = text.strip("\n").split("\n")
    head = lines[0].split()
    if head[0] != "ttvec":
        raise ValueError(f"not a TT vector block: {lines[0]!r}")
    fields = dict(kv.split("=") for kv in head[1:])
    dims, ranks = _ints(fields["dims"]), _ints(fields["ranks"])
    if len(lines) != 1 + len(dims):
        raise ValueError("core data line count does not match dims")
    cores = [
        _parse_values(line, (ranks[n], dims[n], ranks[n + 1]))
        for n, line in enumerate(lines[1:])
    ]
    return TTVector(cores)


def format_tt_matrix(w: TTMatrix) -> str:
    header = "ttmat in={} out={} ranks={}".format(
        ",".join(map(str, w.in_dims)),
        ",".join(map(str, w.out_dims)),
        ",".join(map(str, w.ranks)),
    )
    return "\n".join([header] + [_fmt_values(c) for c in w.cores]) + "\n"


def parse_tt_matrix(text: str) -> TTMatrix:
    lines = text.strip("\n").split("\n")
    head = lines[0].split()
    if head[0] != "ttmat":
        raise ValueError(f"not a TT matrix block: {lines[0]!r}")
    fields = dict(kv.split("=") for kv in head[1:])
    in_dims, out_dims = _ints(fields["in"]), _ints(fields["out"])
    ranks = _ints(fields["ranks"])
    if len(lines) != 1 + len(in_dims):
        raise ValueError("core data line count does not match dims")
    cores = [
        _parse_values(line, (ranks[n], in_dims[n], out_dims[n], ranks[n + 1]))
        for n, line in enumerate(lines[1:])
    ]
    return TTMatrix(cores)
