"""Frequency-constrained optimal power flow laboratory.

Full-order system-frequency-response simulation, low-order analytic SFR
bounds, a ReLU frequency predictor with an exact mixed-integer encoding, and
the three dispatch formulations (plain DC-OPF, linearised FCOPF, and
network-constrained FCOPF) compared in closed loop.
"""

__version__ = "0.1.0"
