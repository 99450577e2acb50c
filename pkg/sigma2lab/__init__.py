# sigma2lab: numerical laboratory for the sigma-2 Hessian equation
__version__ = "1.0.0"
