from .batching import batches, endless_batches, label_array, token_matrix
from .generators import (
    gen_pair_match,
    gen_parity,
    gen_regression,
    generate,
    label_rule,
    make_splits,
    random_sequences,
)
from .io import export_jsonl, import_jsonl
from .models import Sample, TaskKind, TaskSpec

__all__ = [
    "Sample",
    "TaskKind",
    "TaskSpec",
    "batches",
    "endless_batches",
    "export_jsonl",
    "gen_pair_match",
    "gen_parity",
    "gen_regression",
    "generate",
    "import_jsonl",
    "label_array",
    "label_rule",
    "make_splits",
    "random_sequences",
    "token_matrix",
]
