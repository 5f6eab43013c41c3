"""Cross-embodiment imitation workbench.

Learns embodiment-invariant visual embeddings from demonstration videos,
turns them into dense reward functions, and trains soft actor-critic
policies on a deterministic 2D sweeping benchmark.
"""

__version__ = "0.1.0"
