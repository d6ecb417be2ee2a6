import numpy as np
import pytest

from btsnet.ops import BatchNormParams, Conv3dParams
from btsnet.tensor import Tensor, check_gradient, dot
from btsnet.tsp import (
    TspConfig,
    TspParams,
    build_dilation_set,
    fuse_select,
    init_tsp_params,
    set_mode,
    split,
    tsp_forward,
)

from .conftest import naive_conv3d


def test_dilation_sets():
    assert build_dilation_set(3, "O1") == [(1, 1, 1), (2, 2, 2), (3, 3, 3)]
    assert build_dilation_set(4, "O2") == [(1, 1, 1), (4, 4, 4), (1, 4, 4), (4, 1, 1)]
    assert build_dilation_set(1, "O1") == build_dilation_set(1, "O2") == [(1, 1, 1)]
    for M in range(1, 5):
        assert build_dilation_set(M, "o1") == [(i, i, i) for i in range(1, M + 1)]


@pytest.mark.parametrize("M,opt", [(5, "O2"), (0, "O1"), (2, "O3")])
def test_dilation_set_errors(M, opt):
    with pytest.raises(ValueError):
        build_dilation_set(M, opt)


def test_config_rules():
    cfg = TspConfig(M=2, in_channels=8, out_channels=64, groups=4)
    assert cfg.hidden == 32
    assert TspConfig(M=2, in_channels=8, out_channels=1024, reduction_ratio=16).hidden == 64
    assert cfg.padding_for((4, 1, 2)) == (4, 1, 2)
    with pytest.raises(ValueError):
        TspConfig(M=2, in_channels=8, out_channels=8, dilations=[(1, 1, 1)])
    with pytest.raises(ValueError):
        TspConfig(M=1, in_channels=6, out_channels=8, groups=4)
    with pytest.raises(ValueError):
        TspConfig(M=1, in_channels=8, out_channels=8, fuse_type="X")


def small_cfg(M=2, fuse="TC", rf="O1", C=4, groups=2, **kw):
    return TspConfig(M=M, in_channels=C, out_channels=C, rf_option=rf, fuse_type=fuse,
                     groups=groups, min_hidden=3, **kw)


def perturbed_params(cfg, seed):
    """Initialised params with non-trivial BN affine terms and running stats."""
    p = init_tsp_params(cfg, seed)
    r = np.random.default_rng(seed + 1)
    for bn in p.pathway_bns + [p.fuse_bn]:
        n = bn.gamma.shape[0]
        bn.gamma.data[:] = r.uniform(0.5, 1.5, n)
        bn.beta.data[:] = r.uniform(-0.5, 0.5, n)
        bn.running_mean[:] = r.uniform(-0.2, 0.2, n)
        bn.running_var[:] = r.uniform(0.5, 1.5, n)
    return p


def test_single_pathway_is_identity_selection(rng):
    cfg = small_cfg(M=1)
    p = init_tsp_params(cfg, 0)
    x = Tensor(rng.uniform(-1, 1, (2, 4, 4, 5, 5)))
    v, attn = tsp_forward(x, cfg, p)
    assert np.all(attn.data == 1.0)
    (u,) = split(x, p)
    assert np.array_equal(v.data, u.data)


def test_fuse_types_agree_on_time_constant_features(rng):
    tc, c = small_cfg(M=3, fuse="TC"), small_cfg(M=3, fuse="C")
    p = perturbed_params(tc, 3)
    base = [rng.uniform(0, 1, (2, 4, 1, 3, 3)) for _ in range(3)]
    us = [Tensor(np.repeat(b, 5, axis=2)) for b in base]
    for mode in ("train", "eval"):
        set_mode(p, mode)
        _, a_tc = fuse_select(us, tc, p)
        _, a_c = fuse_select(us, c, p)
        for t in range(5):
            assert np.max(np.abs(a_tc.data[..., t] - a_c.data)) <= 1e-12


def test_fuse_types_agree_for_single_frame_input(rng):
    tc, c = small_cfg(M=2, fuse="TC"), small_cfg(M=2, fuse="C")
    x = Tensor(rng.uniform(-1, 1, (3, 4, 1, 5, 5)))
    _, a_tc = tsp_forward(x, tc, init_tsp_params(tc, 9))
    _, a_c = tsp_forward(x, c, init_tsp_params(c, 9))
    assert np.max(np.abs(a_tc.data[..., 0] - a_c.data)) <= 1e-12


# -- independent straight-line composition ---------------------------------------

def _bn(x, bn, train):
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    if train:
        mu, var = x.mean(axis=axes), x.var(axis=axes)
    else:
        mu, var = bn.running_mean, bn.running_var
    return (x - mu.reshape(shape)) / np.sqrt(var.reshape(shape) + bn.epsilon) * bn.gamma.data.reshape(shape) \
        + bn.beta.data.reshape(shape)


def oracle_tsp(x, cfg, p, train):
    us = []
    for conv, bn in zip(p.pathway_convs, p.pathway_bns):
        z = naive_conv3d(x, conv.weight.data, None, conv.stride, conv.dilation, conv.padding, conv.groups)
        us.append(np.maximum(_bn(z, bn, train), 0.0))
    u = sum(us)
    N, C, T = u.shape[:3]
    M = len(us)
    if cfg.fuse_type == "TC":
        s = u.mean(axis=(3, 4))
        z = np.einsum("dc,nct->ndt", p.fuse_compress.data, s)
    else:
        s = u.mean(axis=(2, 3, 4))
        z = np.einsum("dc,nc->nd", p.fuse_compress.data, s)
    z = np.maximum(_bn(z, p.fuse_bn, train), 0.0)
    zz = np.einsum("ed,nd...->ne...", p.fuse_expand.data, z)
    zz = zz.reshape((N, M, C) + zz.shape[2:])
    e = np.exp(zz - zz.max(axis=1, keepdims=True))
    attn = e / e.sum(axis=1, keepdims=True)
    v = np.zeros_like(us[0])
    for m in range(M):
        a = attn[:, m]
        a = a[..., None, None] if cfg.fuse_type == "TC" else a[..., None, None, None]
        v += a * us[m]
    return v, attn


@pytest.mark.parametrize("fuse", ["TC", "C"])
@pytest.mark.parametrize("mode", ["train", "eval"])
def test_matches_composition_oracle(fuse, mode, rng):
    cfg = small_cfg(M=2, fuse=fuse, rf="O2")
    p = perturbed_params(cfg, 5)
    set_mode(p, mode)
    x = rng.uniform(-1, 1, (2 if fuse == "C" else 1, 4, 4, 6, 6))
    v, attn = tsp_forward(Tensor(x), cfg, p)
    want_v, want_a = oracle_tsp(x, cfg, p, mode == "train")
    assert np.max(np.abs(v.data - want_v)) <= 1e-12
    assert np.max(np.abs(attn.data - want_a)) <= 1e-12


def test_strided_block_downsamples(rng):
    cfg = small_cfg(M=3, rf="O2", stride=2)
    v, attn = tsp_forward(Tensor(rng.uniform(size=(2, 4, 8, 8, 8))), cfg, init_tsp_params(cfg, 0))
    assert v.shape == (2, 4, 4, 4, 4)
    assert attn.shape == (2, 3, 4, 4)


def test_attention_normalised_everywhere(rng):
    for M in (1, 2, 3, 4):
        for fuse in ("TC", "C"):
            for rf in ("O1", "O2"):
                cfg = small_cfg(M=M, fuse=fuse, rf=rf)
                x = Tensor(rng.normal(0, 3, (2, 4, 3, 5, 5)))
                _, attn = tsp_forward(x, cfg, init_tsp_params(cfg, M))
                assert np.max(np.abs(attn.data.sum(axis=1) - 1.0)) <= 1e-9
                assert attn.data.min() >= 0.0 and attn.data.max() <= 1.0


def test_pathway_permutation_equivariance(rng):
    cfg = small_cfg(M=3, rf="O2", fuse="TC")
    p = perturbed_params(cfg, 8)
    perm = [2, 0, 1]
    C = cfg.out_channels
    rows = np.concatenate([np.arange(m * C, (m + 1) * C) for m in perm])
    q = TspParams(
        pathway_convs=[p.pathway_convs[m] for m in perm],
        pathway_bns=[p.pathway_bns[m] for m in perm],
        fuse_compress=p.fuse_compress,
        fuse_bn=p.fuse_bn,
        fuse_expand=Tensor(p.fuse_expand.data[rows]),
    )
    qcfg = small_cfg(M=3, fuse="TC", dilations=[cfg.dilations[m] for m in perm])
    x = Tensor(rng.uniform(-1, 1, (2, 4, 4, 5, 5)))
    for mode in ("train", "eval"):
        set_mode(p, mode)
        v1, a1 = tsp_forward(x, cfg, p)
        v2, a2 = tsp_forward(x, qcfg, q)
        assert np.max(np.abs(v1.data - v2.data)) <= 1e-12
        assert np.max(np.abs(a1.data[:, perm] - a2.data)) <= 1e-12


def test_pathway_shape_mismatch_is_an_error(rng):
    cfg = small_cfg(M=2)
    p = init_tsp_params(cfg, 0)
    p.pathway_convs[1].padding = (0, 0, 0)
    with pytest.raises(ValueError, match="disagree"):
        tsp_forward(Tensor(rng.uniform(size=(1, 4, 8, 8, 8))), cfg, p)


def test_init_is_deterministic():
    cfg = small_cfg(M=3)
    a, b = init_tsp_params(cfg, 42), init_tsp_params(cfg, 42)
    for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(ta.data, tb.data)
    c = init_tsp_params(cfg, 43)
    assert not np.array_equal(a.pathway_convs[0].weight.data, c.pathway_convs[0].weight.data)


def test_init_batchnorm_and_weight_variance():
    cfg = TspConfig(M=2, in_channels=64, out_channels=64, groups=1)
    p = init_tsp_params(cfg, 1)
    for bn in p.pathway_bns + [p.fuse_bn]:
        assert np.all(bn.gamma.data == 1.0) and np.all(bn.beta.data == 0.0)
    w = p.pathway_convs[0].weight.data
    assert w.size >= 10**5
    assert abs(w.var() / (2.0 / (64 * 27)) - 1.0) < 0.10
    assert abs(p.fuse_expand.data.var() / (2.0 / cfg.hidden) - 1.0) < 0.10


# -- gradients -------------------------------------------------------------------

def block_gradient_errors(cfg, mode, x_shape, seed=0):
    """check_gradient for the input and every parameter tensor of one block."""
    p = perturbed_params(cfg, seed)
    set_mode(p, mode)
    x = np.random.default_rng(seed + 2).uniform(-1, 1, x_shape)
    probe_out, _ = tsp_forward(Tensor(x), cfg, p)
    lw = np.random.default_rng(seed + 3).uniform(-1, 1, probe_out.shape)
    errors = {"x": check_gradient(lambda t: dot(tsp_forward(t, cfg, p)[0], lw), Tensor(x))}
    for name, param in p.named_parameters():
        def f(t, param=param):
            return dot(tsp_forward(Tensor(x), cfg, _swap(p, param, t))[0], lw)

        errors[name] = check_gradient(f, Tensor(param.data))
    return errors


def _swap(p, old, new):
    """Copy of ``p`` with tensor ``old`` replaced by ``new``."""
    def pick(t):
        return new if t is old else t

    convs = [Conv3dParams(pick(c.weight), c.bias, c.stride, c.dilation, c.padding, c.groups) for c in p.pathway_convs]
    bns = [_swap_bn(b, pick) for b in p.pathway_bns]
    return TspParams(convs, bns, pick(p.fuse_compress), _swap_bn(p.fuse_bn, pick), pick(p.fuse_expand))


def _swap_bn(bn, pick):
    return BatchNormParams(pick(bn.gamma), pick(bn.beta), bn.running_mean, bn.running_var,
                           bn.epsilon, bn.momentum, bn.mode)


@pytest.mark.parametrize("fuse,mode", [("TC", "train"), ("TC", "eval"), ("C", "eval")])
def test_block_gradients(fuse, mode):
    cfg = small_cfg(M=2, fuse=fuse, rf="O1")
    errors = block_gradient_errors(cfg, mode, (1, 4, 4, 6, 6))
    worst = max(errors, key=errors.get)
    assert errors[worst] <= 1e-4, (worst, errors[worst])
