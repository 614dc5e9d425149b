"""Density estimation from the input Jacobians of JEPA-trained encoders."""
