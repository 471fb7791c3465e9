"""Compiled kernels (Cython). Optional: ``lifisim.kernels`` falls back to numpy."""
