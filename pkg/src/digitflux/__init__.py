"""Sequences given by summed transducer outputs on q-ary digit expansions.

Modules: :mod:`core` (transducers), :mod:`recursion_compiler` (digit
recursions to transducers), :mod:`spectral` (exact constants and limit
laws), :mod:`dirichlet` (Fourier coefficients of the fluctuation),
:mod:`empirical` (exact prefix moments and checks) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ParseError,
    StructureReport,
    Transducer,
    evaluate,
    find_reset,
    parse_transducer,
    serialize_transducer,
    structure,
    validate,
)
from .dirichlet import FourierResult, SpecialFunctionContext, fourier  # noqa: E402
from .empirical import MomentSummary, distribution_check, fluctuation_samples, prefix_moments  # noqa: E402
from .recursion_compiler import (  # noqa: E402
    IllPosedError,
    RecursionSystem,
    compile_system,
    format_recursion,
    parse_recursion,
)
from .spectral import AnalysisError, AsymptoticReport, LimitLaw, analyze  # noqa: E402

__all__ = [
    "__version__",
    "ParseError",
    "StructureReport",
    "Transducer",
    "evaluate",
    "find_reset",
    "parse_transducer",
    "serialize_transducer",
    "structure",
    "validate",
    "FourierResult",
    "SpecialFunctionContext",
    "fourier",
    "MomentSummary",
    "distribution_check",
    "fluctuation_samples",
    "prefix_moments",
    "IllPosedError",
    "RecursionSystem",
    "compile_system",
    "format_recursion",
    "parse_recursion",
    "AnalysisError",
    "AsymptoticReport",
    "LimitLaw",
    "analyze",
]
