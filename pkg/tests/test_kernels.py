import os
import subprocess
import sys

import pytest

from btsnet import kernels


def test_backend_switch():
    previous = kernels.backend_name()
    try:
        kernels.set_backend("python")
        assert kernels.backend_name() == "python"
        assert kernels.get_backend().forward.__module__ == "btsnet._conv_py"
    finally:
        kernels.set_backend(previous)
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_compiled_backend_is_default_when_built():
    if "cython" in kernels.BACKENDS and not os.environ.get("BTSNET_BACKEND"):
        assert kernels.backend_name() == "cython"


def _import_with(value):
    env = dict(os.environ, BTSNET_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from btsnet import kernels; print(kernels.backend_name())"],
                          env=env, capture_output=True, text=True)


def test_environment_selects_fallback():
    proc = _import_with("python")
    assert proc.returncode == 0 and proc.stdout.strip() == "python"


def test_environment_rejects_unknown_backend():
    proc = _import_with("nope")
    assert proc.returncode != 0 and "BTSNET_BACKEND" in proc.stderr
