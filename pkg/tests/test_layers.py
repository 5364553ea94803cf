import numpy as np
import pytest
from gradsuite import CASES, TOL, check_case
from hypothesis import given, settings
from hypothesis import strategies as st

from presched.forecaster import graph_layers as gl
from presched.forecaster.codec import init_codec, mixing_weights, rbf_embed, reverse_map
from presched.forecaster.temporal import gtcn_forward, mstsf_forward
from presched.warehouse import MalformedIncidenceError

EYE1 = np.ones((1, 1, 1))


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("name", sorted(n for n in CASES if n != "tdtgcn"))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_block_gradients(name, seed):
    assert check_case(name, seed) < TOL


# ---------------------------------------------------------------- codec


def _codec_params(k, d, f, centers, log_w, embed_w):
    p = init_codec(np.zeros((4, f)), k, d, np.random.default_rng(0)).params()
    p.update(centers=np.asarray(centers, float), log_widths=np.asarray(log_w, float), embed_w=np.asarray(embed_w, float),
             embed_b=np.zeros(d))
    return p


def test_rbf_two_centres_hand_value():
    p = _codec_params(2, 2, 1, [[0.0], [2.0]], [0.0, 0.0], np.eye(2))
    z = rbf_embed(np.array([[1.0]]), p).value
    assert np.allclose(z, [[0.60653066, 0.60653066]], atol=1e-6)


def test_rbf_at_centre_returns_weight_plus_bias():
    p = _codec_params(1, 3, 1, [[1.5]], [0.3], [[1.0, -2.0, 0.5]])
    p["embed_b"] = np.array([0.1, 0.2, 0.3])
    assert np.allclose(rbf_embed(np.array([[1.5]]), p).value, [[1.1, -1.8, 0.8]])


def test_rbf_zero_weights_give_bias():
    p = _codec_params(1, 2, 1, [[0.0]], [0.0], np.zeros((1, 2)))
    p["embed_b"] = np.array([3.0, -1.0])
    assert np.allclose(rbf_embed(np.array([[7.0], [0.2]]), p).value, [[3.0, -1.0]] * 2)


def test_rbf_rejects_nan():
    p = _codec_params(1, 2, 1, [[0.0]], [0.0], np.ones((1, 2)))
    with pytest.raises(ValueError):
        rbf_embed(np.array([[np.nan]]), p)


def test_reverse_singleton_mixing_is_one():
    p = init_codec(np.zeros((4, 1)), 1, 3, np.random.default_rng(0)).params()
    pi = mixing_weights(np.random.default_rng(1).normal(size=(5, 3)), p).value
    assert np.array_equal(pi, np.ones((5, 1)))


def test_reverse_zero_readout_gives_bias():
    p = init_codec(np.zeros((4, 2)), 3, 3, np.random.default_rng(0)).params()
    p["out_w"] = np.zeros_like(p["out_w"])
    p["out_b"] = np.zeros_like(p["out_b"])
    p["out_bias"] = np.array([0.7, -0.2])
    out = reverse_map(np.random.default_rng(2).normal(size=(4, 3)), p).value
    assert np.allclose(out, [[0.7, -0.2]] * 4)


@given(st.integers(0, 100))
def test_mixing_weights_simplex(seed):
    rng = np.random.default_rng(seed)
    p = init_codec(np.zeros((4, 1)), 4, 3, rng).params()
    p["pi_w"] = rng.normal(size=p["pi_w"].shape)
    pi = mixing_weights(rng.normal(size=(6, 3)), p).value
    assert np.all(pi >= 0) and np.allclose(pi.sum(-1), 1.0)


# ---------------------------------------------------------------- temporal


@pytest.mark.parametrize("length", range(8, 25))
@pytest.mark.parametrize("taps", [2, 3])
@pytest.mark.parametrize("dilation", [1, 2])
def test_gtcn_shape_law(length, taps, dilation):
    rng = np.random.default_rng(length)
    p = {k: rng.normal(size=(taps, 2, 2)) for k in ("filt_w", "gate_w")}
    p.update(filt_b=np.zeros(2), gate_b=np.zeros(2))
    out = gtcn_forward(rng.normal(size=(3, length, 2)), p, dilation)
    assert out.shape == (3, length - dilation * (taps - 1), 2)


def test_gtcn_zero_kernels_zero_output():
    p = {"filt_w": np.zeros((2, 2, 2)), "gate_w": np.zeros((2, 2, 2)), "filt_b": np.zeros(2), "gate_b": np.zeros(2)}
    assert np.array_equal(gtcn_forward(np.ones((2, 12, 2)), p, 2).value, np.zeros((2, 10, 2)))


def test_gtcn_too_short():
    p = {"filt_w": np.zeros((3, 1, 1)), "gate_w": np.zeros((3, 1, 1)), "filt_b": np.zeros(1), "gate_b": np.zeros(1)}
    with pytest.raises(ValueError):
        gtcn_forward(np.ones((1, 4, 1)), p, 2)


def test_mstsf_folds_on_dominant_period():
    t = np.arange(48)
    x = np.sin(2 * np.pi * t / 12)[None, :, None]
    p = {"conv_w": np.zeros((3, 3, 5, 1)), "conv_b": np.zeros(1)}
    out, info = mstsf_forward(x, p, k_top=1, levels=2)
    assert info.periods == [12] and out.shape == x.shape


def test_mstsf_constant_input_falls_back():
    p = {"conv_w": np.zeros((3, 3, 5, 1)), "conv_b": np.zeros(1)}
    _, info = mstsf_forward(np.full((2, 16, 1), 3.0), p, k_top=1, levels=2)
    assert info.fallback == [True, True] and info.periods == [16, 16]


# ---------------------------------------------------------------- D-GCN


def test_dgcn_identity_depth_one_doubles():
    x = np.array([[1.0], [2.0], [3.0]])
    A = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0.0]])
    out = gl.dgcn_forward(x, A, None, EYE1, EYE1, np.zeros((1, 1, 1))).value
    assert np.allclose(out, 2 * x)


def test_dgcn_two_node_example():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    x = np.array([[1.0], [2.0]])
    th = np.ones((2, 1, 1))
    out = gl.dgcn_forward(x, A, np.zeros((2, 2)), th, th, th).value
    assert np.allclose(out, [[4.0], [5.0]], atol=1e-12)


def test_dgcn_uniform_adaptive_adds_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    adp = gl.adaptive_adjacency(np.zeros((4, 2)), np.zeros((4, 2))).value
    assert np.allclose(adp, 0.25)
    zero = np.zeros((1, 3, 3))
    out = gl.dgcn_forward(x, np.zeros((4, 4)), adp, zero, zero, np.eye(3)[None]).value
    assert np.allclose(out, np.broadcast_to(x.mean(axis=0), x.shape))


@settings(max_examples=20)
@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_dgcn_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(3, 3))
    adp = gl.adaptive_adjacency(rng.normal(size=(3, 2)), rng.normal(size=(3, 2))).value
    th = [rng.normal(size=(2, 2, 2)) for _ in range(3)]
    X, Y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    f = lambda z: gl.dgcn_forward(z, A, adp, *th).value  # noqa: E731
    assert np.allclose(f(a * X + b * Y), a * f(X) + b * f(Y), atol=1e-9)


def test_adaptive_rows_are_simplex():
    rng = np.random.default_rng(3)
    adp = gl.adaptive_adjacency(rng.normal(size=(5, 8)), rng.normal(size=(5, 8))).value
    assert np.all(adp >= 0) and np.allclose(adp.sum(axis=1), 1.0)


# ---------------------------------------------------------------- hypergraph


def test_dhgcn_two_node_example():
    out = gl.dhgcn_forward(np.array([[2.0], [0.0]]), np.array([[1.0], [1.0]]), np.ones(1), EYE1).value
    assert np.allclose(out, [[np.sqrt(2)], [np.sqrt(2)]], atol=1e-12)
    assert np.allclose(out, [[1.4142], [1.4142]], atol=1e-4)


def test_dhgcn_zero_input():
    H = np.array([[1, 0], [1, 1], [0, 1.0]])
    out = gl.dhgcn_forward(np.zeros((3, 2)), H, np.ones(2), np.ones((2, 2, 2))).value
    assert np.array_equal(out, np.zeros((3, 2)))


def test_dhgcn_zero_psi_drops_propagation():
    rng = np.random.default_rng(0)
    H = np.array([[1, 0], [1, 1], [0, 1.0]])
    x = rng.normal(size=(3, 2))
    th = rng.normal(size=(2, 2, 2))
    two = gl.dhgcn_forward(x, H, np.zeros(2), th).value
    one = gl.dhgcn_forward(x, H, np.zeros(2), th[:1]).value
    assert np.allclose(two, one, atol=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_dhgcn_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    H = np.array([[1, 0, 1], [1, 1, 0], [0, 1, 1.0]])
    psi, th = rng.uniform(size=3), rng.normal(size=(2, 2, 2))
    X, Y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    f = lambda z: gl.dhgcn_forward(z, H, psi, th).value  # noqa: E731
    assert np.allclose(f(a * X + b * Y), a * f(X) + b * f(Y), atol=1e-9)


def test_dual_transform_example():
    H = np.array([[1.0], [1.0]])
    e = gl.hyper_dual_transform(np.array([[3.0], [5.0]]), H, np.ones((2, 1)), np.array([4.5])).value
    assert np.allclose(e, [[8.0, 4.5]])


def test_dual_transform_zero_weight():
    H = np.array([[1.0], [1.0]])
    e = gl.hyper_dual_transform(np.array([[3.0], [5.0]]), H, np.zeros((2, 1)), np.array([4.5])).value
    assert np.allclose(e, [[0.0, 4.5]])


def test_dual_round_shape():
    H = np.array([[1, 0], [1, 1], [0, 1.0]])
    e = gl.hyper_dual_transform(np.ones((3, 4, 2)), H, np.ones((3, 2)), np.ones(2))
    back = gl.hyper_dual_inverse(e, H, np.ones((3, 2)))
    assert e.shape == (2, 4, 3) and back.shape == (3, 4, 3)


@pytest.mark.parametrize(
    "H",
    [np.array([[1, 0], [1, 0], [0, 1.0]]), np.array([[2.0], [1.0]]), np.array([[1.0], [1.0], [1.0]])],
)
def test_malformed_incidence(H):
    with pytest.raises(MalformedIncidenceError):
        gl.hyper_dual_transform(np.ones((H.shape[0], 1)), H, np.ones(H.shape), np.ones(H.shape[1]))


# ---------------------------------------------------------------- heterogeneous


def _typed(A, edges, ntypes, etypes):
    return [m for _, m in gl.typed_slices(A, edges, ntypes, etypes)]


def test_hetero_single_type_matches_dgcn():
    rng = np.random.default_rng(0)
    A = np.array([[0, 0.5, 0], [0, 0, 0.7], [0.2, 0, 0.0]])
    edges = [(0, 1), (1, 2), (2, 0)]
    slices = _typed(A, edges, ["a"] * 3, ["e"] * 3)
    t1, t2 = rng.normal(size=(1, 2, 2, 2)), rng.normal(size=(1, 2, 2, 2))
    x = rng.normal(size=(3, 2))
    het = gl.hetero_forward(x, slices, t1, t2).value
    ref = gl.dgcn_forward(x, A, None, t1[0], t2[0], np.zeros((2, 2, 2))).value
    assert np.allclose(het, ref, atol=1e-12)


def test_hetero_disjoint_edge_types_add():
    rng = np.random.default_rng(1)
    A = np.array([[0, 0.5, 0], [0, 0, 0.7], [0.2, 0, 0.0]])
    edges = [(0, 1), (1, 2), (2, 0)]
    slices = _typed(A, edges, ["a"] * 3, ["p", "q", "p"])
    eye = np.broadcast_to(np.eye(2), (2, 2, 2, 2))
    x = rng.normal(size=(3, 2))
    het = gl.hetero_forward(x, slices, eye, eye).value
    zero = np.zeros((2, 2, 2))
    ref = sum(gl.dgcn_forward(x, m, None, eye[0], eye[0], zero).value for m in slices)
    assert np.allclose(het, ref, atol=1e-12)


def test_hetero_zero_slices_sum_identity_terms():
    x = np.random.default_rng(2).normal(size=(3, 2))
    slices = [np.zeros((3, 3))] * 4
    eye = np.broadcast_to(np.eye(2), (4, 1, 2, 2))
    out = gl.hetero_forward(x, slices, eye, np.zeros((4, 1, 2, 2))).value
    assert np.allclose(out, 4 * x)


def test_typed_slices_missing_types():
    A = np.zeros((2, 2))
    with pytest.raises(ValueError):
        gl.typed_slices(A, [(0, 1)], ["a"], ["e"])
    with pytest.raises(ValueError):
        gl.typed_slices(A, [(0, 1)], ["a", "a"], [])
