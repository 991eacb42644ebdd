"""Learned link-weight routing: topologies, gravity traffic, an analytic delay model,
a deterministic policy-gradient agent and a random-configuration benchmark."""

__version__ = "0.1.0"
