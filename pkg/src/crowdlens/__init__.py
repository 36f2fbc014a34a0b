"""People analytics from frame streams.

Face detection with a boosted Haar cascade, gender classification with
Fisherfaces, person detection with HOG and a linear SVM, plus heat maps,
line-crossing footfall, an append-only event log and a stats endpoint.
"""

__version__ = "0.1.0"

from .errors import CrowdlensError  # noqa: F401
