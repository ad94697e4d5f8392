"""Two-level Galerkin simulation of quasi-static thermo-visco-elasticity."""

__version__ = "0.1.0"
