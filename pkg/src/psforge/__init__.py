"""PuzzleScript toolchain, breadth-first playtester and LLM generation loop."""

__version__ = "0.1.0"
