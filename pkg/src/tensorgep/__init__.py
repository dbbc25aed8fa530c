"""Evolutionary discovery of dimensionally consistent tensor equations."""

from .benchmarks import gen_maxwell, gen_newtonian_field, gen_reynolds_decay
from .data import Dataset, DimVector, ScalarField, TensorField, load_dataset, save_dataset
from .evaluator import EvalConfig, FitResult, evaluate_individual, tlr_solve
from .evolution import EvolutionConfig, EvolutionResult, evolve
from .genome import GenomeFactory, Host, Library, parse_host, serialize_host
from .report import Report, build_report

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DimVector", "EvalConfig", "EvolutionConfig", "EvolutionResult", "FitResult",
    "GenomeFactory", "Host", "Library", "Report", "ScalarField", "TensorField", "build_report",
    "evaluate_individual", "evolve", "gen_maxwell", "gen_newtonian_field", "gen_reynolds_decay",
    "load_dataset", "parse_host", "save_dataset", "serialize_host", "tlr_solve",
]
