"""Neural flow-rate field toolkit.

Learns a continuous implicit model F(x, y, z, phi) of printed-part geometry
across extrusion flow rates from a handful of voxelized scans, then inverts
it: reconstruct unseen flow rates, estimate part weight curves, and search
per-layer flow schedules that best match a target geometry.
"""

__version__ = "0.1.0"
