"""slicescale: desk-scale simulator and training framework for dynamic
bandwidth scaling of a network slice under a QoS-degradation constraint.

A grid-based network model maps (traffic, bandwidth) to a QoS
distribution; risk-constrained RL agents learn to minimize allocated
bandwidth while keeping the traffic-weighted fraction of QoS-degraded
traffic below a threshold, trained on domain-randomized traffic for
generalization to unseen patterns.
"""

__version__ = "0.1.0"
