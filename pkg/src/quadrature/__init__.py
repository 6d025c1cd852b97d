"""Two-photon quadrature transfer, incident squeezing models, spectra and contrast."""
