"""Quantum scattering through two-lead open billiards.

The cavity interior is mapped onto a rectangle, the closed-cavity modes are
expanded in a cosine/sine basis assembled with FFT quadrature, and the open
system is closed with a resonance-expansion coupling to the leads: S-matrix,
conductance, and length (echo) spectra follow from there.
"""

__version__ = "0.1.0"
