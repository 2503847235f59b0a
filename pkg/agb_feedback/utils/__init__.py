"""Numerical kernels, settings and seeded random streams"""
