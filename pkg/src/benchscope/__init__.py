"""benchscope: measure how representative Android vulnerability benchmark
suites are of real-world app API usage.

Pipeline: fetch corpus APKs, extract API profiles straight from the
binaries (ZIP -> DEX id pools + binary manifest), classify APIs by Stack
Exchange discussion activity, then report coverage tiers, pairwise suite
overlaps and the gap between benchmarks and the real world.
"""

__version__ = "0.1.0"

from .apiref import ApiRef, parse_ref

__all__ = ["ApiRef", "parse_ref", "__version__"]
