"""Quadrotor propeller fault diagnosis workbench.

Simulates quadrotor flight with healthy and degraded propellers, generates
labeled flight datasets for 16 fault scenarios, and trains a convolutional
classifier that localizes faulty propellers from onboard-observable signals.
"""

__version__ = "0.1.0"
