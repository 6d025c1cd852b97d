"""Independent checks of the quadrature model: sideband moments and Monte Carlo sampling."""
