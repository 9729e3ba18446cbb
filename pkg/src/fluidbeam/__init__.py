"""Joint fluid-antenna placement and dual-functional beamforming.

Library layout:

- numerics: Hermitian eigensolver, rank-1 extraction, erfc / erfc_inv
- conic: self-contained interior-point solver for LP/SOC-free SDP-style cones
- channel: array geometry, path models, steering vectors, scenarios
- perfect_csi: alternating SDP beamforming and SCA antenna placement
- robust_csi: worst-case variants under bounded channel and angle uncertainty
- baselines: fixed-grid, random, and per-antenna-search placement schemes
- cli: scenario generation, single runs, and parameter sweeps
"""

__version__ = "0.1.0"
