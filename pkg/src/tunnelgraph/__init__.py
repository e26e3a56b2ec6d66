"""Pose-graph validation of multi-rate odometry against sparse pole landmarks.

Simulates a straight tunnel run with an in-place half-turn and return leg,
corrupts the ground truth into per-sensor odometry tracks, synthesizes pole
sightings, aligns everything on a shared timeline, and optimizes a pose
graph to recover per-frame drift corrections.
"""

__version__ = "0.1.0"
