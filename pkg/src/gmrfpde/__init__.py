"""Probabilistic PDE solvers with Gaussian Markov random field priors."""
__version__ = "0.1.0"
