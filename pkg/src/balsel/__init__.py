"""Class-balanced active selection on imbalanced pools.

Per-class submodular-mutual-information acquisition, classic baselines
(random, entropy, gradient-embedding k-means++), an imbalance-ratio
metric, a pseudo-label self-training stage, and a deterministic
experiment harness behind the ``balsel`` CLI.
"""

__version__ = "0.1.0"
