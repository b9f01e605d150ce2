from typing import Iterator

import numpy as np

from lrc_distill.encoder.model import INIT_RANGE
from lrc_distill.errors import DimensionError
from lrc_distill.tensor import Tensor


class Projection:
    """
    Trainable maps W_i lifting student layer outputs into the teacher width.

    One ``[student_hidden x teacher_hidden]`` matrix per student layer. Only
    used during distillation; inference never touches it.
    """

    def __init__(self, weights: list[Tensor]) -> None:
        if not weights:
            raise DimensionError("projection needs at least one matrix")
        shapes = {w.shape for w in weights}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise DimensionError(f"projection matrices must share one 2-D shape, got {shapes}")
        self.weights = weights

    @classmethod
    def init(
        cls, num_layers: int, student_hidden: int, teacher_hidden: int, seed: int
    ) -> "Projection":
        rng = np.random.default_rng(seed)
        return cls(
            [
                Tensor(
                    rng.uniform(-INIT_RANGE, INIT_RANGE, size=(student_hidden, teacher_hidden)),
                    requires_grad=True,
                    name=f"projection.{i}",
                )
                for i in range(num_layers)
            ]
        )

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.weights[0].shape
        return rows, cols

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i, weight in enumerate(self.weights):
            yield f"projection.{i}", weight

    def parameters(self) -> list[Tensor]:
        return list(self.weights)

    def __getitem__(self, layer: int) -> Tensor:
        return self.weights[layer]

    def __len__(self) -> int:
        return len(self.weights)
