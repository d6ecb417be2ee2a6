import os

# single-threaded kernels and BLAS keep training runs bit-reproducible
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from contextlib import contextmanager

import numpy as np
import pytest

from btsnet import network, ops, tsp

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, title: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def naive_conv3d(x, w, bias=None, stride=(1, 1, 1), dilation=(1, 1, 1), padding=(0, 0, 0), groups=1):
    """Brute-force grouped 3D cross-correlation: one scalar multiply-add per loop trip."""
    N, Cin, T, H, W = x.shape
    Cout, cig, kT, kH, kW = w.shape
    cog = Cout // groups
    st, sh, sw = stride
    dt, dh, dw = dilation
    pt, ph, pw = padding
    To = (T + 2 * pt - dt * (kT - 1) - 1) // st + 1
    Ho = (H + 2 * ph - dh * (kH - 1) - 1) // sh + 1
    Wo = (W + 2 * pw - dw * (kW - 1) - 1) // sw + 1
    out = np.zeros((N, Cout, To, Ho, Wo))
    for n in range(N):
        for co in range(Cout):
            g = co // cog
            for t in range(To):
                for h in range(Ho):
                    for q in range(Wo):
                        acc = 0.0 if bias is None else float(bias[co])
                        for ci in range(cig):
                            c = g * cig + ci
                            for a in range(kT):
                                it = t * st + a * dt - pt
                                if not 0 <= it < T:
                                    continue
                                for b in range(kH):
                                    ih = h * sh + b * dh - ph
                                    if not 0 <= ih < H:
                                        continue
                                    for k in range(kW):
                                        iw = q * sw + k * dw - pw
                                        if 0 <= iw < W:
                                            acc += w[co, ci, a, b, k] * x[n, c, it, ih, iw]
                        out[n, co, t, h, q] = acc
    return out


@contextmanager
def relu_sign_log():
    """Record the sign pattern of every ReLU input while active."""
    masks: list[np.ndarray] = []

    def recording(x):
        masks.append(x.data > 0)
        return ops.relu(x)

    saved = network.relu, tsp.relu
    network.relu = tsp.relu = recording
    try:
        yield masks
    finally:
        network.relu, tsp.relu = saved


def smooth_probes(f, base: np.ndarray, candidates, count: int, eps: float = 1e-5):
    """First ``count`` flat positions whose +-eps perturbation flips no ReLU.

    A central difference straddling a ReLU kink measures a mix of two slopes,
    so such positions say nothing about the backward pass. Returns the chosen
    positions and how many candidates were rejected.
    """
    chosen, rejected = [], 0
    for i in candidates:
        patterns = []
        for sign in (1.0, -1.0):
            bumped = base.copy().reshape(-1)
            bumped[i] += sign * eps
            with relu_sign_log() as masks:
                f(bumped.reshape(base.shape))
            patterns.append(masks)
        if all(np.array_equal(a, b) for a, b in zip(*patterns)):
            chosen.append(int(i))
            if len(chosen) == count:
                break
        else:
            rejected += 1
    return chosen, rejected


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
