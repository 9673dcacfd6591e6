"""Bigraded Toda hierarchy: difference-operator algebra, dressing, flows and additional symmetries."""
from .coeff import LatticeFunction, LatticeGrid, PolyRing, SymbolRing, XPoly
from .diffop import DiffOp
from .dressing import DressingPair, LaxOperator
from .hierarchy import FlowIndex, TimeConfig

__all__ = ["DiffOp", "DressingPair", "FlowIndex", "LatticeFunction", "LatticeGrid", "LaxOperator",
           "PolyRing", "SymbolRing", "TimeConfig", "XPoly"]
