"""Blockwise temporal-spatial pathway (TSP) networks for video clips.

Float64 numpy autograd, a compiled conv3d core with a numpy fallback
(see ``btsnet.kernels``), the TSP block, BTSNet assembly, receptive-field
tools and a synthetic moving-square harness.
"""
from .kernels import backend_name, set_backend
from .network import NetworkConfig, build_network, count_params, forward_classify, load_checkpoint, save_checkpoint
from .rf import LayerSpec, analytic_rf, empirical_rf
from .tensor import Tensor, check_gradient
from .tsp import TspConfig, build_dilation_set, init_tsp_params, tsp_forward

__version__ = "0.1.0"

__all__ = [
    "LayerSpec",
    "NetworkConfig",
    "Tensor",
    "TspConfig",
    "analytic_rf",
    "backend_name",
    "build_dilation_set",
    "build_network",
    "check_gradient",
    "count_params",
    "empirical_rf",
    "forward_classify",
    "init_tsp_params",
    "load_checkpoint",
    "save_checkpoint",
    "set_backend",
    "tsp_forward",
]
