"""2D finite-element solvers for heat, solute transport, plasticity and phase-field fracture."""

__version__ = "0.1.0"
