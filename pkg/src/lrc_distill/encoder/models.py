from pydantic import BaseModel, ConfigDict, Field, model_validator

from lrc_distill.tensor import Tensor


class EncoderConfig(BaseModel):
    """
    Shape of a miniature BERT-style encoder.

    The same schema describes the teacher (N layers, hidden d') and the
    student (M layers, hidden d).
    """

    vocab_size: int = Field(gt=0, description="Number of token ids")
    max_len: int = Field(gt=0, description="Sequence length l")
    num_layers: int = Field(ge=1, description="Transformer layers")
    hidden_size: int = Field(gt=0, description="Hidden width")
    num_heads: int = Field(gt=0, description="Attention heads; must divide hidden_size")
    ffn_size: int = Field(gt=0, description="Inner width of the feed-forward block")
    num_classes: int = Field(gt=0, description="Output classes, 1 for regression")

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _heads_divide_hidden(self) -> "EncoderConfig":
        if self.hidden_size % self.num_heads != 0:
            raise ValueError(
                f"hidden_size={self.hidden_size} is not divisible by "
                f"num_heads={self.num_heads}"
            )
        return self

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads

    @property
    def is_regression(self) -> bool:
        return self.num_classes == 1


class ForwardTrace(BaseModel):
    """
    Everything a distillation tap needs from one forward pass.

    Shapes carry a leading batch axis when the forward pass was batched.
    """

    emb_out: Tensor = Field(description="Embedding output fed to layer 1, [..., l, hidden]")
    ffn_outs: list[Tensor] = Field(
        description="Output of each layer after the FFN residual and layer norm"
    )
    logits: Tensor = Field(description="Classifier output, [..., num_classes]")

    model_config = ConfigDict(arbitrary_types_allowed=True)
