from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from lrc_distill.data.models import Sample
from lrc_distill.errors import InputError


def export_jsonl(samples: Sequence[Sample], path: Path) -> Path:
    """Write one ``{"tokens": [...], "label": ...}`` object per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(sample.model_dump_json() + "\n" for sample in samples),
        encoding="utf-8",
    )
    return path


def import_jsonl(path: Path) -> list[Sample]:
    samples: list[Sample] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            samples.append(Sample.model_validate_json(line))
        except ValidationError as e:
            raise InputError(f"{path}:{number}: invalid sample: {e}")
    return samples
