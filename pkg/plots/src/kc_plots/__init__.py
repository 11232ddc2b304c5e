"""Figure rendering for the kinetic-chaos CSV outputs.

Consumes only the schema=1 CSV files written by the kinetic-chaos CLI and
turns them into static figures; no statistic is ever recomputed here.
"""

__version__ = "0.1.0"

from .figures import FigureSpec, SchemaError, render
