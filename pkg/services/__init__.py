"""
Services Package
Numerical services: model, bounds, PDE, strategy, Monte Carlo, singular limit and I/O.
"""
