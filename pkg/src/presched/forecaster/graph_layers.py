"""Spatial convolutions over the sector graph.

Three views of the same sectors are used: diffusion over the directed graph
(with a learned adaptive adjacency), diffusion over the hypergraph whose
hyperedges are the high-level arcs, and per-type diffusion over the
heterogeneous graph. All layers act on node-major features
``(batch, nodes, time, channels)``; 2-D ``(nodes, channels)`` and 3-D
``(nodes, time, channels)`` inputs are accepted as well.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from presched.numerics import autodiff as ad
from presched.warehouse import MalformedIncidenceError


def _as4d(x) -> tuple[ad.Var, tuple[int, ...]]:
    x = ad.as_var(x)
    shape = x.shape
    if x.ndim == 2:
        return ad.reshape(x, (1, shape[0], 1, shape[1])), shape
    if x.ndim == 3:
        return ad.reshape(x, (1,) + shape), shape
    if x.ndim == 4:
        return x, shape
    raise ValueError(f"unsupported feature shape {shape}")


def _restore(x: ad.Var, shape: tuple[int, ...]) -> ad.Var:
    if len(shape) == 4:
        return x
    return ad.reshape(x, shape[:-1] + (x.shape[-1],))


def node_mix(m, x: ad.Var) -> ad.Var:
    """``m @ x`` along the node axis of a 4-D tensor."""
    return ad.einsum("vw,bwtc->bvtc", m, x)


def channel_mix(x: ad.Var, w) -> ad.Var:
    return ad.einsum("bvtc,cd->bvtd", x, w)


def transition_matrices(A) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised forward and backward transition matrices; empty rows stay zero."""
    A = np.asarray(A, dtype=np.float64)

    def norm(m):
        rows = m.sum(axis=1, keepdims=True)
        return np.divide(m, rows, out=np.zeros_like(m), where=rows > 0)

    return norm(A), norm(A.T)


def matrix_powers(m: np.ndarray, n: int) -> list[np.ndarray]:
    out = [np.eye(m.shape[0])]
    for _ in range(1, n):
        out.append(out[-1] @ m)
    return out


def adaptive_adjacency(e1, e2) -> ad.Var:
    """Row-softmax of ReLU(E1 E2^T); every row is a probability vector."""
    return ad.softmax(ad.relu(ad.matmul(ad.as_var(e1), ad.transpose(ad.as_var(e2), (1, 0)))), axis=1)


def dgcn_forward(x, A, adp, theta1, theta2, theta3) -> ad.Var:
    """Diffusion graph convolution.

    ``sum_i (Lb^i X T1[i] + Lf^i X T2[i] + Adp X T3[i])`` for ``i < N`` where
    ``N = len(theta1)``, ``Lf``/``Lb`` are the forward/backward transition
    matrices of ``A`` and ``Adp`` is the adaptive adjacency (``None`` = 0).
    """
    x4, shape = _as4d(x)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (x4.shape[1], x4.shape[1]):
        raise ValueError(f"adjacency {A.shape} does not match {x4.shape[1]} nodes")
    theta1, theta2, theta3 = (ad.as_var(t) for t in (theta1, theta2, theta3))
    n_steps = theta1.shape[0]
    if theta2.shape[0] != n_steps or theta3.shape[0] != n_steps or theta1.shape[1] != x4.shape[-1]:
        raise ValueError("diffusion weights do not match the input channels or depth")
    lf, lb = transition_matrices(A)
    pf, pb = matrix_powers(lf, n_steps), matrix_powers(lb, n_steps)
    acc = None
    for i in range(n_steps):
        terms = [node_mix(pb[i], channel_mix(x4, theta1[i])), node_mix(pf[i], channel_mix(x4, theta2[i]))]
        if adp is not None:
            terms.append(node_mix(adp, channel_mix(x4, theta3[i])))
        for t in terms:
            acc = t if acc is None else ad.add(acc, t)
    return _restore(acc, shape)


def check_incidence(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise MalformedIncidenceError("incidence must be a nodes x edges matrix")
    if not np.all((H == 0) | (H == 1)):
        raise MalformedIncidenceError("incidence entries must be 0 or 1")
    bad = np.flatnonzero(H.sum(axis=0) != 2)
    if bad.size:
        raise MalformedIncidenceError(f"hyperedge columns {bad.tolist()} do not have exactly two endpoints")
    return H


def hyper_dual_transform(x, H, W, dist) -> ad.Var:
    """Lift node features to hyperedges: ``(W * H)^T X`` with the arc distance appended."""
    H = check_incidence(H)
    x4, shape = _as4d(x)
    weighted = ad.mul(W, H)
    edge = ad.einsum("ve,bvtc->betc", weighted, x4)
    b, g, t, _ = edge.shape
    d = np.broadcast_to(np.asarray(dist, dtype=np.float64).reshape(1, g, 1, 1), (b, g, t, 1))
    out = ad.concat([edge, ad.Var(d)], axis=-1)
    return out if len(shape) == 4 else ad.reshape(out, (g,) + (shape[1:-1] if len(shape) == 3 else ()) + (out.shape[-1],))


def hyper_dual_inverse(e, H, W_back) -> ad.Var:
    """Project hyperedge features back to nodes through ``W' * H``."""
    H = check_incidence(H)
    e4, shape = _as4d(e)
    out = ad.einsum("ve,betc->bvtc", ad.mul(W_back, H), e4)
    if len(shape) == 4:
        return out
    return ad.reshape(out, (H.shape[0],) + shape[1:-1] + (out.shape[-1],))


def hypergraph_operators(H) -> tuple[np.ndarray, np.ndarray]:
    """``Dv^{-1/2} H`` and ``De^{-1/2}`` (as a vector) for a binary incidence."""
    H = np.asarray(H, dtype=np.float64)
    dv, de = H.sum(axis=1), H.sum(axis=0)
    if np.any(dv == 0):
        raise MalformedIncidenceError(f"isolated nodes {np.flatnonzero(dv == 0).tolist()} in hypergraph")
    if np.any(de == 0):
        raise MalformedIncidenceError("empty hyperedge")
    return H / np.sqrt(dv)[:, None], 1.0 / np.sqrt(de)


def dhgcn_forward(x, H, psi, theta_h) -> ad.Var:
    """Diffusion hypergraph convolution.

    ``sum_i (Dv^-1/2 H Psi^i De^-1/2 H^T Dv^-1/2) X Th[i]`` with ``Psi`` the
    diagonal matrix ``diag(psi)`` and ``Psi^0 = I``.
    """
    hn, de_isqrt = hypergraph_operators(H)
    x4, shape = _as4d(x)
    theta_h = ad.as_var(theta_h)
    psi = ad.as_var(psi)
    acc = None
    for i in range(theta_h.shape[0]):
        if i == 0:
            prop = ad.Var(hn @ np.diag(de_isqrt) @ hn.T)
        else:
            prop = ad.einsum("ve,e,we->vw", hn, ad.mul(ad.power(psi, i), de_isqrt), hn)
        term = node_mix(prop, channel_mix(x4, theta_h[i]))
        acc = term if acc is None else ad.add(acc, term)
    return _restore(acc, shape)


def typed_slices(
    A,
    edges: Sequence[tuple[int, int]],
    node_types: Sequence[str],
    edge_types: Sequence[str],
    node_vocab: Sequence[str] | None = None,
    edge_vocab: Sequence[str] | None = None,
) -> list[tuple[tuple[str, str], np.ndarray]]:
    """Split ``A`` into one slice per (source-node type, edge type) pair."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if len(node_types) != n:
        raise ValueError("invalid-input: every sector needs a node type")
    if len(edge_types) != len(edges):
        raise ValueError("invalid-input: every high-level edge needs an edge type")
    node_vocab = sorted(set(node_types)) if node_vocab is None else list(node_vocab)
    edge_vocab = sorted(set(edge_types)) if edge_vocab is None else list(edge_vocab)
    for label in node_types:
        if label not in node_vocab:
            raise ValueError(f"invalid-input: unknown node type {label!r}")
    for label in edge_types:
        if label not in edge_vocab:
            raise ValueError(f"invalid-input: unknown edge type {label!r}")
    out = []
    for a in node_vocab:
        for e in edge_vocab:
            m = np.zeros_like(A)
            for (i, j), kind in zip(edges, edge_types):
                if kind == e and node_types[i] == a:
                    m[i, j] = A[i, j]
            out.append(((a, e), m))
    return out


def hetero_forward(x, slices: Sequence[np.ndarray], theta1, theta2, pca=None) -> ad.Var:
    """Per-type diffusion summed over typed adjacency slices, optionally PCA-reduced.

    ``theta1``/``theta2`` have shape ``(slices, N, Cin, Cout)``. ``pca`` is a
    ``(mean, components)`` pair applied as ``(out - mean) @ components``.
    """
    theta1, theta2 = ad.as_var(theta1), ad.as_var(theta2)
    if theta1.shape[0] != len(slices):
        raise ValueError("one weight set per typed slice is required")
    zero = None
    acc = None
    for s, A in enumerate(slices):
        n_steps = theta1.shape[1]
        if zero is None:
            zero = ad.Var(np.zeros((n_steps,) + theta1.shape[2:]))
        term = dgcn_forward(x, A, None, theta1[s], theta2[s], zero)
        acc = term if acc is None else ad.add(acc, term)
    if pca is not None:
        mean, comps = pca
        acc = ad.matmul(ad.sub(acc, mean), comps)
    return acc


def fuse_branches(*branches: ad.Var) -> ad.Var:
    """Combine the graph branches of a block (summation)."""
    acc = branches[0]
    for b in branches[1:]:
        acc = ad.add(acc, b)
    return acc
