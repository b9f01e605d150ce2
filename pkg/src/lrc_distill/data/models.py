from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from lrc_distill.data.vocab import FIRST_CONTENT_ID, ONE_ID


class TaskKind(StrEnum):
    SINGLE_CLASSIFY = "single_classify"
    PAIR_CLASSIFY = "pair_classify"
    REGRESSION = "regression"


class TaskSpec(BaseModel):
    """
    Synthetic stand-in for a sentence or sentence-pair benchmark task.

    single_classify is the parity task, pair_classify the permutation-match
    task and regression the fraction-of-ones task.
    """

    name: str = Field(description="Task label echoed into manifests")
    kind: TaskKind
    vocab_size: int = Field(gt=ONE_ID, description="Token ids, reserved ids included")
    seq_len: int = Field(ge=2, description="Sequence length l, start token included")
    num_classes: int = Field(ge=1, description="2 for classification, 1 for regression")
    generator_seed: int = 0
    n_train: int = Field(default=2000, ge=2)
    n_eval: int = Field(default=500, ge=1)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _kind_constraints(self) -> "TaskSpec":
        if self.kind is TaskKind.REGRESSION and self.num_classes != 1:
            raise ValueError("regression tasks need num_classes=1")
        if self.kind is not TaskKind.REGRESSION and self.num_classes != 2:
            raise ValueError("classification tasks are binary: num_classes=2")
        if self.kind is TaskKind.PAIR_CLASSIFY:
            if self.seq_len % 2 != 0 or self.seq_len < 4:
                raise ValueError("pair tasks need an even seq_len >= 4")
            if self.vocab_size < 8:
                raise ValueError("pair tasks need vocab_size >= 8")
        return self

    @property
    def content_vocab(self) -> int:
        return self.vocab_size - FIRST_CONTENT_ID


class Sample(BaseModel):
    """One tokenized example; ``label`` is a class id or a regression target."""

    tokens: list[int]
    label: int | float

    model_config = ConfigDict(frozen=True)
