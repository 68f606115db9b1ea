"""OECT electropolymerization toolkit.

Steady-state device model, EP growth, impedance fitting, closed-loop Gm
tuning and pulse-train filtering.
"""

__version__ = "0.1.0"
