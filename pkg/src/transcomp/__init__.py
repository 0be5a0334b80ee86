"""Low-rank compression of FFT'ed FMM translation-operator tensors."""

from .decompositions import (
    HTuckerFormat,
    TTFormat,
    TuckerFormat,
    compressed_memory,
    htucker_decompose,
    reconstruct,
    tt_decompose,
    tucker_decompose,
)
from .fmm import GridSpec, MediumParams, TranslationSuite, assemble_suite
from .restorations import RestorationWorkspace, restore_slice

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "HTuckerFormat",
    "MediumParams",
    "RestorationWorkspace",
    "TTFormat",
    "TranslationSuite",
    "TuckerFormat",
    "assemble_suite",
    "compressed_memory",
    "htucker_decompose",
    "reconstruct",
    "restore_slice",
    "tt_decompose",
    "tucker_decompose",
]
