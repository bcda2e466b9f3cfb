"""Instance files, benchmark formats, reports, rendering and the CLI."""

from .files import FileFormatError, Record, generate, read_records, write_records
from .report import MissingReference, Result, gap, report
from .svg import render_svg
from .tsplib import (
    MalformedSection,
    TsplibError,
    TsplibProblem,
    UnsupportedEdgeWeightType,
    euc_2d,
    parse_cvrplib,
    parse_tsplib,
)

__all__ = [
    "FileFormatError",
    "Record",
    "generate",
    "read_records",
    "write_records",
    "MissingReference",
    "Result",
    "gap",
    "report",
    "render_svg",
    "MalformedSection",
    "TsplibError",
    "TsplibProblem",
    "UnsupportedEdgeWeightType",
    "euc_2d",
    "parse_cvrplib",
    "parse_tsplib",
]
