"""Order-statistic gaps in residual allocation models: samplers, exact laws,
limit laws, and a Monte Carlo verification harness."""

__version__ = "0.1.0"
