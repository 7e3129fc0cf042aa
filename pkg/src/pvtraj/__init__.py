"""Space-time trajectories of PV power from a Gaussian copula over quantile-regression marginals."""

__version__ = "0.1.0"
