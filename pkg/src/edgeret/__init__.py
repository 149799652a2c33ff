"""Feature retrieval over simulated wireless channels.

Analog (autoencoder) and digital (learned compressor, mixture entropy model,
arithmetic coding) transmission of feature vectors, with a nearest-neighbour
retrieval evaluation and a sweep harness.
"""

from ._accel import backend

__version__ = "0.1.0"
__all__ = ["backend", "__version__"]
