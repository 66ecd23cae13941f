"""Enrich biography article sections with verified content drawn from
personal narratives, via a retrieve -> detect -> extract -> verify ->
summarize pipeline, plus baselines and quality metrics."""

from .kernels import IMPL as KERNEL_IMPL

__version__ = "0.1.0"

__all__ = ["KERNEL_IMPL", "__version__"]
