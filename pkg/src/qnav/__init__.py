"""Quantum-inspired navigation pipeline simulator.

Amplitude-encoded sensor fusion into a small variational circuit, a policy
gradient navigation agent on a lane-grid world, adversarial input training
and a secured sensor-to-processor message bus.
"""

__version__ = "0.1.0"
