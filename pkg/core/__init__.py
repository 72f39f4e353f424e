"""
Core Package
Contains settings, logging bootstrap and the error hierarchy.
"""
