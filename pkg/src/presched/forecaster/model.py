"""Temporal-decoupled tri-graph forecaster: parameters and forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from presched.forecaster import graph_layers as gl
from presched.forecaster.codec import EMBED_KEYS, REVERSE_KEYS, init_codec, rbf_embed, reverse_map
from presched.forecaster.temporal import FoldInfo, gtcn_forward, mstsf_forward
from presched.numerics import autodiff as ad
from presched.numerics.linalg import fit_pca
from presched.warehouse import SectorGraph, incidence_from_edges

BUFFER_PREFIX = "buf."


@dataclass
class ModelConfig:
    n_sectors: int
    n_features: int = 1
    input_window: int = 12
    horizon: int = 15
    hidden: int = 16
    n_centers: int = 8
    k_top: int = 3
    dwt_levels: int = 2
    dilations: tuple[int, ...] = (1, 2, 1, 2)
    kernel_size: int = 2
    diffusion_steps: int = 2
    node_embed_dim: int = 8
    hetero_width: int = 32
    dropout: float = 0.3
    tau_conf: float = 1.0
    entropy_window: int | None = None

    def __post_init__(self) -> None:
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.diffusion_steps < 1:
            raise ValueError("diffusion depth must be >= 1")
        if self.output_length < 1:
            raise ValueError("input window too short for the block stack")

    @property
    def block_lengths(self) -> list[int]:
        lengths, t = [], self.input_window
        for d in self.dilations:
            t -= d * (self.kernel_size - 1)
            lengths.append(t)
        return lengths

    @property
    def output_length(self) -> int:
        return self.block_lengths[-1] if self.dilations else self.input_window

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


@dataclass
class GraphContext:
    """Sector-graph constants the forward pass needs."""

    adjacency: np.ndarray
    incidence: np.ndarray
    edges: list[tuple[int, int]]
    dist: np.ndarray
    node_types: list[str]
    edge_types: list[str]
    slices: list[np.ndarray] = field(default_factory=list, repr=False)
    slice_labels: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        self.incidence = np.asarray(self.incidence, dtype=np.float64)
        self.dist = np.asarray(self.dist, dtype=np.float64)
        self.edges = [tuple(map(int, e)) for e in self.edges]
        if not self.slices:
            typed = gl.typed_slices(self.adjacency, self.edges, self.node_types, self.edge_types)
            self.slice_labels = [lab for lab, _ in typed]
            self.slices = [m for _, m in typed]
        gl.hypergraph_operators(self.incidence)

    @property
    def n_sectors(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    @property
    def dist_scaled(self) -> np.ndarray:
        top = self.dist.max(initial=0.0)
        return self.dist / top if top > 0 else self.dist

    @classmethod
    def from_sector_graph(cls, g: SectorGraph) -> "GraphContext":
        return cls(
            adjacency=g.adjacency,
            incidence=g.incidence,
            edges=g.edges,
            dist=g.dist,
            node_types=[g.node_types[i] for i in range(g.n_sectors)],
            edge_types=list(g.edge_types),
        )

    def to_dict(self) -> dict:
        return {
            "adjacency": self.adjacency.tolist(),
            "edges": [list(e) for e in self.edges],
            "dist": self.dist.tolist(),
            "node_types": list(self.node_types),
            "edge_types": list(self.edge_types),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GraphContext":
        A = np.asarray(d["adjacency"], dtype=np.float64)
        edges = [tuple(e) for e in d["edges"]]
        return cls(
            adjacency=A,
            incidence=incidence_from_edges(A.shape[0], edges),
            edges=edges,
            dist=np.asarray(d["dist"], dtype=np.float64),
            node_types=list(d["node_types"]),
            edge_types=list(d["edge_types"]),
        )


def init_params(
    config: ModelConfig, graph: GraphContext, rng: np.random.Generator, sample=None
) -> dict[str, np.ndarray]:
    """Fresh parameter dictionary; ``sample`` (any array of counts) sets codec ranges."""
    if graph.n_sectors != config.n_sectors:
        raise ValueError("graph and config disagree on the number of sectors")
    c, n_steps = config.hidden, config.diffusion_steps
    if sample is None:
        sample = np.linspace(0.0, 4.0, 16)[:, None].repeat(config.n_features, axis=1)
    p: dict[str, np.ndarray] = {}
    for k, v in init_codec(sample, config.n_centers, c, rng).params().items():
        p[f"codec.{k}"] = v
    cin = c * (1 + 2 * config.dwt_levels)
    p["mstsf.conv_w"] = rng.normal(0.0, 0.5 / np.sqrt(9 * cin), (3, 3, cin, c))
    p["mstsf.conv_b"] = np.zeros(c)
    p["adp.e1"] = rng.normal(0.0, 1.0, (config.n_sectors, config.node_embed_dim))
    p["adp.e2"] = rng.normal(0.0, 1.0, (config.n_sectors, config.node_embed_dim))
    n_slices = len(graph.slices)
    w_scale = 1.0 / np.sqrt(c)
    branch_scale = w_scale / np.sqrt(3 * n_steps)
    for b, _ in enumerate(config.dilations):
        pre = f"block{b}."
        p[pre + "filt_w"] = rng.normal(0.0, w_scale / np.sqrt(config.kernel_size), (config.kernel_size, c, c))
        p[pre + "filt_b"] = np.zeros(c)
        p[pre + "gate_w"] = rng.normal(0.0, w_scale / np.sqrt(config.kernel_size), (config.kernel_size, c, c))
        p[pre + "gate_b"] = np.zeros(c)
        for t in ("dg_theta1", "dg_theta2", "dg_theta3"):
            p[pre + t] = rng.normal(0.0, branch_scale, (n_steps, c, c))
        p[pre + "hy_w"] = np.ones((config.n_sectors, graph.n_edges))
        p[pre + "hy_lift"] = rng.normal(0.0, 1.0 / np.sqrt(c + 1), (c + 1, c))
        deg = np.maximum(graph.incidence.sum(axis=1, keepdims=True), 1.0)
        p[pre + "hy_wback"] = np.ones((config.n_sectors, graph.n_edges)) / deg
        p[pre + "hy_psi"] = np.full(graph.n_edges, 0.5)
        p[pre + "hy_theta"] = rng.normal(0.0, branch_scale, (n_steps, c, c))
        hw = config.hetero_width
        p[pre + "he_theta1"] = rng.normal(0.0, 1.0 / np.sqrt(c * n_slices * 2 * n_steps), (n_slices, n_steps, c, hw))
        p[pre + "he_theta2"] = rng.normal(0.0, 1.0 / np.sqrt(c * n_slices * 2 * n_steps), (n_slices, n_steps, c, hw))
        p[BUFFER_PREFIX + pre + "pca_mean"] = np.zeros(hw)
        eye = np.eye(hw, c)
        p[BUFFER_PREFIX + pre + "pca_comps"] = eye
    flat = config.output_length * c
    out = config.horizon * c
    p["head.w"] = rng.normal(0.0, 1.0 / np.sqrt(flat), (flat, out))
    p["head.b"] = np.zeros(out)
    return p


def trainable(params: Mapping[str, np.ndarray]) -> list[str]:
    return [k for k in params if not k.startswith(BUFFER_PREFIX)]


def zero_output_head(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Copy of ``params`` with the output head and codec readout set to zero."""
    out = dict(params)
    for k in ("head.w", "head.b", "codec.out_w", "codec.out_b", "codec.out_bias"):
        out[k] = np.zeros_like(params[k])
    return out


def _sub(p: Mapping, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in p.items() if k.startswith(prefix)}


@dataclass
class ForwardTrace:
    fold: FoldInfo | None = None
    hetero_inputs: list[np.ndarray] = field(default_factory=list)


def hyper_branch(g: ad.Var, bp: Mapping, graph: GraphContext) -> ad.Var:
    edge = gl.hyper_dual_transform(g, graph.incidence, bp["hy_w"], graph.dist_scaled)
    edge = gl.channel_mix(edge, bp["hy_lift"])
    nodes = gl.hyper_dual_inverse(edge, graph.incidence, bp["hy_wback"])
    return gl.dhgcn_forward(nodes, graph.incidence, bp["hy_psi"], bp["hy_theta"])


def output_head(h: ad.Var, p: Mapping, config: ModelConfig) -> ad.Var:
    """``(B, nodes, L_out, C) -> (B, nodes, horizon, C)`` latent forecast."""
    b, n, t, c = h.shape
    flat = ad.reshape(ad.relu(h), (b, n, t * c))
    out = ad.add(ad.matmul(flat, p["head.w"]), p["head.b"])
    return ad.reshape(out, (b, n, config.horizon, config.hidden))


def tdtgcn_forward(
    x,
    params: Mapping,
    config: ModelConfig,
    graph: GraphContext,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: ForwardTrace | None = None,
    fit_pca_buffers: bool = False,
) -> ad.Var:
    """History ``(B, nodes, I, F)`` (or unbatched) -> clamped forecast ``(B, nodes, O, F)``.

    ``params`` may hold arrays or tape variables. With ``fit_pca_buffers`` the
    hetero-branch PCA bases are refitted in place on this batch.
    """
    xv = ad.as_var(x)
    squeezed = xv.ndim == 3
    if squeezed:
        xv = ad.reshape(xv, (1,) + xv.shape)
    if xv.shape[1] != config.n_sectors or xv.shape[1] != graph.n_sectors:
        raise ValueError(f"invalid-input: expected {config.n_sectors} sectors, got {xv.shape[1]}")
    if xv.shape[2] != config.input_window:
        raise ValueError(f"invalid-input: expected a window of {config.input_window} frames, got {xv.shape[2]}")
    codec = {k: params["codec." + k] for k in EMBED_KEYS + REVERSE_KEYS}
    z = rbf_embed(xv, codec)
    z, fold = mstsf_forward(z, _sub(params, "mstsf."), raw=xv.value, k_top=config.k_top, levels=config.dwt_levels)
    if trace is not None:
        trace.fold = fold
    adp = gl.adaptive_adjacency(params["adp.e1"], params["adp.e2"])
    h = z
    for b, dilation in enumerate(config.dilations):
        bp = _sub(params, f"block{b}.")
        g = gtcn_forward(h, bp, dilation)
        dg = gl.dgcn_forward(g, graph.adjacency, adp, bp["dg_theta1"], bp["dg_theta2"], bp["dg_theta3"])
        hy = hyper_branch(g, bp, graph)
        raw_he = gl.hetero_forward(g, graph.slices, bp["he_theta1"], bp["he_theta2"])
        mean_key = f"{BUFFER_PREFIX}block{b}.pca_mean"
        comp_key = f"{BUFFER_PREFIX}block{b}.pca_comps"
        if fit_pca_buffers:
            basis = fit_pca(raw_he.value.reshape(-1, raw_he.shape[-1]), config.hidden)
            params[mean_key] = basis.mean
            params[comp_key] = basis.components
        if trace is not None:
            trace.hetero_inputs.append(raw_he.value)
        he = ad.matmul(ad.sub(raw_he, params[mean_key]), params[comp_key])
        fused = gl.fuse_branches(dg, hy, he)
        if train and config.dropout > 0:
            if rng is None:
                raise ValueError("dropout needs a random generator")
            keep = (rng.random(fused.shape) >= config.dropout) / (1.0 - config.dropout)
            fused = ad.mul(fused, keep)
        h = ad.add(fused, h[:, :, -g.shape[2] :, :])
    latent = output_head(h, params, config)
    y = ad.relu(reverse_map(latent, codec))
    return ad.reshape(y, y.shape[1:]) if squeezed else y


def reconstruction(x, params: Mapping) -> ad.Var:
    """Codec round trip ``reverse_map(rbf_embed(x))``."""
    codec = {k: params["codec." + k] for k in EMBED_KEYS + REVERSE_KEYS}
    return reverse_map(rbf_embed(x, codec), codec)
