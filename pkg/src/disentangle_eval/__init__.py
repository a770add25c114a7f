"""Supervised disentanglement evaluation for latent codes.

Information metrics (MIG, JEMMIG), the Interventional Robustness Score,
the Explicitness score and dimension-wise linear probing, computed over a
table of ground-truth factors paired with (N, d, T) latent codes.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    CodeTensor,
    DatasetManifest,
    FactorTable,
    IngestionConfig,
    PairedDataset,
    load_code_tensor,
    load_factor_table,
    save_code_tensor,
    save_factor_table,
    validate_pairing,
)
from .errors import TrainingError, UndefinedMetric, ValidationError  # noqa: E402
