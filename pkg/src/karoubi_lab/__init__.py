"""karoubi-lab: exact noncommutative de Rham calculus and cyclic homology."""

__version__ = "0.1.0"
