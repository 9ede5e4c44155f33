"""
Complex-trajectory wavepacket propagation with the final-value coherent-state
(FINCO) reconstruction, plus an exact split-operator reference solver.
"""

__version__ = "0.1.0"
