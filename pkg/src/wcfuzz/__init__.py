"""Worst-case input search over a small deterministic stack VM.

A cost-guided mutational fuzzer and a trie-guided concolic executor run
in tandem (or separately) against instrumented VM programs, hunting
inputs that maximize an execution cost: inter-block jumps, peak live
allocation, or a program-defined counter.
"""

from wcfuzz.vm import (
    Bitmap,
    ExecutionResult,
    InputLayout,
    ParseError,
    Program,
    bitmap_index,
    execute,
    load_program,
)

__version__ = "0.1.0"

__all__ = [
    "Bitmap",
    "ExecutionResult",
    "InputLayout",
    "ParseError",
    "Program",
    "bitmap_index",
    "execute",
    "load_program",
    "__version__",
]
