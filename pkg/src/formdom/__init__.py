"""Magnetic Schrodinger forms on weighted graphs: assembly, heat semigroups,
domination checks and Dirichlet/Neumann probes on finite truncations."""

__version__ = "0.1.0"
