"""Pure-numpy 3D cross-correlation kernels.

Same calling convention as the compiled ``_conv_ext`` module: the input
is pre-padded and the destination array is written in place. The work is
done one kernel tap at a time, each tap being a batched matmul over the
channels of one group.
"""
from __future__ import annotations

import numpy as np


def _tap_view(xp, a, b, k, dil, stride, out_shape, sl=slice(None)):
    dt, dh, dw = dil
    st, sh, sw = stride
    To, Ho, Wo = out_shape
    return xp[
        :,
        sl,
        a * dt: a * dt + st * (To - 1) + 1: st,
        b * dh: b * dh + sh * (Ho - 1) + 1: sh,
        k * dw: k * dw + sw * (Wo - 1) + 1: sw,
    ]


def forward(xp, w, out, st, sh, sw, dt, dh, dw, groups):
    Cout, cig, kT, kH, kW = w.shape
    cog = Cout // groups
    out_shape = out.shape[2:]
    for g in range(groups):
        cin = slice(g * cig, (g + 1) * cig)
        wg = w[g * cog: (g + 1) * cog]
        acc = out[:, g * cog: (g + 1) * cog]
        for a in range(kT):
            for b in range(kH):
                for k in range(kW):
                    patch = _tap_view(xp, a, b, k, (dt, dh, dw), (st, sh, sw), out_shape, cin)
                    acc += np.einsum("oc,nc...->no...", wg[:, :, a, b, k], patch)


def backward_input(gout, w, gxp, st, sh, sw, dt, dh, dw, groups):
    Cout, cig, kT, kH, kW = w.shape
    cog = Cout // groups
    out_shape = gout.shape[2:]
    for g in range(groups):
        cin = slice(g * cig, (g + 1) * cig)
        wg = w[g * cog: (g + 1) * cog]
        gg = gout[:, g * cog: (g + 1) * cog]
        for a in range(kT):
            for b in range(kH):
                for k in range(kW):
                    view = _tap_view(gxp, a, b, k, (dt, dh, dw), (st, sh, sw), out_shape, cin)
                    view += np.einsum("oc,no...->nc...", wg[:, :, a, b, k], gg)


def backward_weight(gout, xp, gw, st, sh, sw, dt, dh, dw, groups):
    Cout, cig, kT, kH, kW = gw.shape
    cog = Cout // groups
    out_shape = gout.shape[2:]
    for g in range(groups):
        cin = slice(g * cig, (g + 1) * cig)
        gg = gout[:, g * cog: (g + 1) * cog]
        for a in range(kT):
            for b in range(kH):
                for k in range(kW):
                    patch = _tap_view(xp, a, b, k, (dt, dh, dw), (st, sh, sw), out_shape, cin)
                    gw[g * cog: (g + 1) * cog, :, a, b, k] = np.tensordot(
                        gg, patch, axes=([0, 2, 3, 4], [0, 2, 3, 4])
                    )
