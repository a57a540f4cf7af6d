"""EV-charging resilience pipeline: deliverability calibration, cross-domain
injection, spatio-temporal forecasting, backlog simulation, and grid coupling."""

from ._kernels import KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
