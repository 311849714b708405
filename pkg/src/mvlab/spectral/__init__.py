"""Hermite-Fourier analysis, test functions, density grids and Bessel norms."""
from mvlab.spectral.grids import DensityGrid, bessel_norm, bessel_potential
from mvlab.spectral.hermite import (
    HermiteCoeffTable,
    hermite_coeffs,
    hermite_derivative_tables,
    hermite_eval,
    hermite_table,
    hp_norm,
    pairing,
)
from mvlab.spectral.testfunctions import (
    TestFunction,
    compact_bump,
    gaussian_bump,
    hermite,
    seminorm_star,
)

__all__ = [
    "DensityGrid", "bessel_norm", "bessel_potential",
    "HermiteCoeffTable", "hermite_coeffs", "hermite_derivative_tables", "hermite_eval",
    "hermite_table", "hp_norm", "pairing",
    "TestFunction", "compact_bump", "gaussian_bump", "hermite", "seminorm_star",
]
