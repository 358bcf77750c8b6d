"""
pbcalc: an interpreter for the pullback calculus, a lambda calculus with dual types, Jacobians, dual maps
and a pullback operator whose call-by-value reduction performs reverse-mode differentiation
"""

__version__ = "0.3.0"
