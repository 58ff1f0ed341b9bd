"""Energy-aware OLSR simulator: MPR flooding, energy/bandwidth routing and
residual-energy prediction on a deterministic discrete-event core."""

__version__ = "0.1.0"
