"""
Models Package
Pydantic value objects for model parameters, solver outputs, simulations and run configuration.
"""
