# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Direct-loop 3D cross-correlation kernels.

All inputs are C-contiguous float64 arrays and the input is already
zero-padded. Every output element is owned by exactly one prange
iteration and accumulated in a fixed order, so results do not depend
on the thread count (OMP_NUM_THREADS).
"""
from cython.parallel cimport prange


def forward(const double[:, :, :, :, ::1] xp,
            const double[:, :, :, :, ::1] w,
            double[:, :, :, :, ::1] out,
            int st, int sh, int sw,
            int dt, int dh, int dw,
            int groups):
    cdef Py_ssize_t N = xp.shape[0]
    cdef Py_ssize_t Cout = w.shape[0]
    cdef Py_ssize_t cig = w.shape[1]
    cdef Py_ssize_t kT = w.shape[2], kH = w.shape[3], kW = w.shape[4]
    cdef Py_ssize_t To = out.shape[2], Ho = out.shape[3], Wo = out.shape[4]
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t idx, n, co, c, ci, a, b, k, t, h, x
    cdef double wv
    cdef const double *src
    cdef double *dst

    for idx in prange(N * Cout, nogil=True, schedule="static"):
        n = idx // Cout
        co = idx % Cout
        for ci in range(cig):
            c = (co // cog) * cig + ci
            for a in range(kT):
                for b in range(kH):
                    for k in range(kW):
                        wv = w[co, ci, a, b, k]
                        for t in range(To):
                            for h in range(Ho):
                                src = &xp[n, c, t * st + a * dt, h * sh + b * dh, k * dw]
                                dst = &out[n, co, t, h, 0]
                                if sw == 1:
                                    for x in range(Wo):
                                        dst[x] = dst[x] + wv * src[x]
                                else:
                                    for x in range(Wo):
                                        dst[x] = dst[x] + wv * src[x * sw]


def backward_input(const double[:, :, :, :, ::1] gout,
                   const double[:, :, :, :, ::1] w,
                   double[:, :, :, :, ::1] gxp,
                   int st, int sh, int sw,
                   int dt, int dh, int dw,
                   int groups):
    cdef Py_ssize_t N = gout.shape[0]
    cdef Py_ssize_t Cout = w.shape[0]
    cdef Py_ssize_t cig = w.shape[1]
    cdef Py_ssize_t kT = w.shape[2], kH = w.shape[3], kW = w.shape[4]
    cdef Py_ssize_t To = gout.shape[2], Ho = gout.shape[3], Wo = gout.shape[4]
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t idx, n, g, co, c, ci, a, b, k, t, h, x
    cdef double wv
    cdef const double *src
    cdef double *dst

    # (n, group) pairs write disjoint input-channel slabs
    for idx in prange(N * groups, nogil=True, schedule="static"):
        n = idx // groups
        g = idx % groups
        for co in range(g * cog, (g + 1) * cog):
            for ci in range(cig):
                c = g * cig + ci
                for a in range(kT):
                    for b in range(kH):
                        for k in range(kW):
                            wv = w[co, ci, a, b, k]
                            for t in range(To):
                                for h in range(Ho):
                                    src = &gout[n, co, t, h, 0]
                                    dst = &gxp[n, c, t * st + a * dt, h * sh + b * dh, k * dw]
                                    if sw == 1:
                                        for x in range(Wo):
                                            dst[x] = dst[x] + wv * src[x]
                                    else:
                                        for x in range(Wo):
                                            dst[x * sw] = dst[x * sw] + wv * src[x]


def backward_weight(const double[:, :, :, :, ::1] gout,
                    const double[:, :, :, :, ::1] xp,
                    double[:, :, :, :, ::1] gw,
                    int st, int sh, int sw,
                    int dt, int dh, int dw,
                    int groups):
    cdef Py_ssize_t N = gout.shape[0]
    cdef Py_ssize_t Cout = gw.shape[0]
    cdef Py_ssize_t cig = gw.shape[1]
    cdef Py_ssize_t kT = gw.shape[2], kH = gw.shape[3], kW = gw.shape[4]
    cdef Py_ssize_t To = gout.shape[2], Ho = gout.shape[3], Wo = gout.shape[4]
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t co, n, c, ci, a, b, k, t, h, x
    cdef double acc
    cdef const double *src
    cdef const double *g

    for co in prange(Cout, nogil=True, schedule="static"):
        for ci in range(cig):
            c = (co // cog) * cig + ci
            for a in range(kT):
                for b in range(kH):
                    for k in range(kW):
                        acc = 0.0
                        for n in range(N):
                            for t in range(To):
                                for h in range(Ho):
                                    g = &gout[n, co, t, h, 0]
                                    src = &xp[n, c, t * st + a * dt, h * sh + b * dh, k * dw]
                                    if sw == 1:
                                        for x in range(Wo):
                                            acc = acc + g[x] * src[x]
                                    else:
                                        for x in range(Wo):
                                            acc = acc + g[x] * src[x * sw]
                        gw[co, ci, a, b, k] = acc
