"""K-hop distributed hypothesis testing against independence: exponents, schemes, simulation, diagnostics."""
__version__ = "0.1.0"
