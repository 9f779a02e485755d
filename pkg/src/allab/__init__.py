"""Anosov-Liouville lab.

Symbolic/numerical toolkit for bicontact pairs supporting Anosov-type
flow models, the foliations they induce on transverse tori, and the
pre-Lagrangian obstruction / construction pipelines.
"""

__version__ = "0.1.0"
