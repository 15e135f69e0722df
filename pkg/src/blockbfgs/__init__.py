"""blockbfgs — stochastic block BFGS with variance-reduced gradients."""

__version__ = "0.1.0"
