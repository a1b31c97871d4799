from .corpus import load_tsv, write_tsv, split_dataset, synthesize_corpus, synthesize_transfer_benchmark
from .scaling import FeatureScaler, fit_scaler
from .config import load_run_config, write_run_config, load_schema


__all__ = [
    "load_tsv",
    "write_tsv",
    "split_dataset",
    "synthesize_corpus",
    "synthesize_transfer_benchmark",
    "FeatureScaler",
    "fit_scaler",
    "load_run_config",
    "write_run_config",
    "load_schema"
]
