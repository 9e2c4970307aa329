"""Motion-alignment scoring for image editing: optical-flow rewards, the
motion alignment score, a benchmark harness, and a toy negative-aware
finetuning lab."""

__version__ = "0.1.0"
