"""Rank-k incremental forward and backward for feature perturbations.

Perturbing k feature rows only disturbs activations inside the k rows'
expanding structural neighborhood, one hop per graph convolution.  The
engine precomputes, once per (model, graph, perturbed-row-set):

  * the base pre-activations of the unperturbed features,
  * the affected row set R_l at every layer,
  * local CSR blocks S_l mapping layer l-1 deltas onto layer l rows.

Each subsequent forward then costs O(neighborhood work) instead of a dense
n x d reflow, and the backward returns exact gradients restricted to the
perturbed rows.  One engine owns mutable per-iteration scratch and is
single-threaded; many engines may share the same immutable model/graph.
"""
from __future__ import annotations

import numpy as np

from . import backend
from .gcn import GcnModel, Tape, _check_dims, _forward
from .graph import NormalizedAdjacency


class BaseActivations:
    """Unperturbed forward pass cached for reuse across many engines."""

    def __init__(self, model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray):
        _check_dims(model, ahat, X)
        tape = Tape()
        Z = _forward(model, ahat, X, tape=tape)
        self.model = model
        self.ahat = ahat
        self.X = X
        self.preacts = tape.preacts
        self.Z = Z
        self.labels = np.argmax(Z, axis=1)


def _local_block(ahat: NormalizedAdjacency, out_rows: np.ndarray, in_rows: np.ndarray,
                 pos: np.ndarray):
    """CSR of Ahat[out_rows, in_rows] with columns renumbered to in_rows positions."""
    pos[in_rows] = np.arange(in_rows.size, dtype=np.int64)
    indptr = np.zeros(out_rows.size + 1, dtype=np.int64)
    chunks_idx = []
    chunks_dat = []
    for i, r in enumerate(out_rows):
        cols, vals = ahat.row(int(r))
        local = pos[cols]
        keep = local >= 0
        chunks_idx.append(local[keep])
        chunks_dat.append(vals[keep])
        indptr[i + 1] = indptr[i] + int(keep.sum())
    pos[in_rows] = -1
    indices = np.concatenate(chunks_idx) if chunks_idx else np.zeros(0, dtype=np.int64)
    data = np.concatenate(chunks_dat) if chunks_dat else np.zeros(0, dtype=np.float64)
    return indptr, indices.astype(np.int64), data


def _expand(ahat: NormalizedAdjacency, rows: np.ndarray) -> np.ndarray:
    """Union of structural neighborhoods (self-loops included) of `rows`."""
    parts = [ahat.neighbors(int(r)) for r in rows]
    return np.unique(np.concatenate(parts)) if parts else rows


class PerturbationEngine:
    """Incremental logits and feature gradients for a fixed perturbed-row set.

    With track_all=False only the target row of the logits is tracked (the
    margin objective); with track_all=True every changed logit row is
    tracked, which the infection penalty needs.  `target_pos` is -1 when
    the target lies outside the perturbation's receptive field, in which
    case forwards return constants and backwards return exact zeros.
    """

    def __init__(self, model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray,
                 rows, target: int | None = None, track_all: bool = False,
                 base: BaseActivations | None = None):
        rows = np.unique(np.asarray(rows, dtype=np.int64))
        if rows.size == 0:
            raise ValueError("need at least one perturbed row")
        if rows.min() < 0 or rows.max() >= ahat.n:
            raise ValueError("perturbed rows out of range")
        if base is None:
            base = BaseActivations(model, ahat, X)
        self.model = model
        self.ahat = ahat
        self.rows = rows
        self.base = base
        self.track_all = track_all
        self.target = target

        L = model.layer_count
        pos = np.full(ahat.n, -1, dtype=np.int64)
        affected = [rows]
        for _ in range(L - 1):
            affected.append(_expand(ahat, affected[-1]))
        final_rows = _expand(ahat, affected[-1])

        # S_l for layers 1..L-1 plus the final tracked block
        self.blocks = []
        self.pre_rows = []  # base pre-activations restricted to each affected set
        for l in range(1, L):
            out_rows = affected[l]
            self.blocks.append(_local_block(ahat, out_rows, affected[l - 1], pos))
            self.pre_rows.append(np.ascontiguousarray(base.preacts[l - 1][out_rows]))
        if track_all:
            tracked = final_rows
        elif target is not None and np.isin(target, final_rows):
            tracked = np.array([target], dtype=np.int64)
        else:
            tracked = np.zeros(0, dtype=np.int64)
        self.final_block = _local_block(ahat, tracked, affected[-1], pos)
        self.affected = affected
        self.tracked_rows = tracked
        if target is None:
            self.target_pos = -1
        else:
            hits = np.flatnonzero(tracked == target)
            self.target_pos = int(hits[0]) if hits.size else -1
        self._dpre: list[np.ndarray] = []

    @property
    def base_target_logits(self) -> np.ndarray:
        return self.base.Z[self.target]

    def forward(self, delta: np.ndarray) -> np.ndarray:
        """Perturbed logits on the tracked rows for X[rows] + delta.

        delta is (k, d); the returned array is (len(tracked_rows), C).
        Per-iteration scratch for the matching backward is retained.
        """
        W = self.model.weights
        U = np.ascontiguousarray(delta) @ W[0]
        self._dpre = []
        hdelta = None
        for l, (indptr, indices, data) in enumerate(self.blocks):
            dpre = backend.csr_dense_matmul(indptr, indices, data, U)
            self._dpre.append(dpre)
            hdelta = backend.relu_delta(self.pre_rows[l], dpre)
            U = hdelta @ W[l + 1]
        indptr, indices, data = self.final_block
        dz = backend.csr_dense_matmul(indptr, indices, data, U)
        return self.base.Z[self.tracked_rows] + dz

    def target_logits(self, delta: np.ndarray) -> np.ndarray:
        """Perturbed logit row of the target (base row if unreachable)."""
        z = self.forward(delta)
        if self.target_pos < 0:
            return self.base.Z[self.target].copy()
        return z[self.target_pos]

    def backward(self, gz: np.ndarray) -> np.ndarray:
        """Exact d(sum(Z_tracked * gz)) / d(delta) at the last forward point.

        Returns a (k, d) array; exact zeros when nothing is tracked.
        """
        W = self.model.weights
        if self.tracked_rows.size == 0:
            return np.zeros((self.rows.size, self.model.in_dim))
        indptr, indices, data = self.final_block
        A = backend.csr_t_dense_matmul(indptr, indices, data, self.affected[-1].size,
                                       np.ascontiguousarray(gz))
        for l in range(len(self.blocks) - 1, -1, -1):
            G = A @ W[l + 1].T
            G = backend.relu_mask(self.pre_rows[l], self._dpre[l], G)
            indptr, indices, data = self.blocks[l]
            A = backend.csr_t_dense_matmul(indptr, indices, data, self.affected[l].size, G)
        return A @ W[0].T
