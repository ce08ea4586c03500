"""Public-space utilization from wireless sensor node logs.

Pipeline: ingest -> timeline -> motion calibration / sound analytics ->
fusion and heatmaps.  ``synthgen`` produces logs with ground truth.
"""

__version__ = "0.1.0"
