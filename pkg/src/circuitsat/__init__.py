"""Circuit-SAT learning toolkit: AIG message passing with a sequential
assignment decoder, plus generators, an exact oracle, and conversions."""

__version__ = "0.1.0"
