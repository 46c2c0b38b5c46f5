"""Corrosion-rate modeling toolkit for aluminum alloys.

Forward models map alloy composition (and optional environment descriptors)
to a corrosion rate in mils/year; the inverse ensemble maps a desired rate
plus partial composition back to trace-element percentages.

Submodules are imported explicitly (``from corrml import gpr``); this package
root stays import-light so the command-line front end can configure BLAS
thread caps before numpy loads.
"""

__version__ = "0.1.0"
