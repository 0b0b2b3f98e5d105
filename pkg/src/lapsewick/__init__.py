"""Lapse-rotated heat kernels on periodic lattices.

Modules
-------
geometry       ADM Fourier data, rotated metrics and exact jets.
eikonal        world-function coefficients order by order.
transport      Hadamard transport coefficients and residual probes.
parametrix     local parametrix and its diagonal series.
lattice        divergence-form discretization, spectra and wedge checks.
semigroup      dense and contour evaluation of exp(zeta A), resolvent norms.
kernel_lab     discrete kernels, kernel laws and diagonal asymptotics.
lorentz_limit  trace gaps against the Schroedinger group as theta -> 0.
cli_report     configuration-driven command-line reports.
"""

__version__ = "0.1.0"
