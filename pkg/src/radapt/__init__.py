"""r-adaptive meshes trained jointly with a neural-network solution.

Node coordinates of a tensor-product mesh are trainable parameters. A small
network gives nodal values, a Dirichlet lift enforces boundary data, and the
result is interpolated piecewise-linearly on the mesh. Losses (Ritz energy,
least squares, collocation) are integrated element by element, so both the
network weights and the node positions receive exact gradients.
"""
__version__ = "0.1.0"

from .errors import DegenerateAxisError, NumericalError, UsageError  # noqa: F401
