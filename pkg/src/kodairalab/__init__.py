"""Numerical Kodaira maps, Chern forms of pulled-back universal bundles and
random degeneracy sets on CP¹ and CP²."""

__version__ = "0.1.0"
