"""
Finite-difference verification of every analytic gradient in the package.

Each scope builds small seeded fixtures and compares tape gradients with
central differences through ``check_gradients``.
"""

from typing import Callable, Mapping

import numpy as np
from loguru import logger

from lrc_distill.distiller import (
    Ablation,
    CosineGranularity,
    DistillConfig,
    Projection,
    gather_negative_traces,
    negative_index_matrix,
    step_objective,
    transformer_stage_loss,
)
from lrc_distill.encoder import (
    EncoderConfig,
    EncoderModel,
    ForwardTrace,
    forward,
    init_params,
    parameter_shapes,
)
from lrc_distill.losses import (
    LossWeights,
    Stage,
    angular_distance,
    cos_nce,
    hard_loss,
    mse_layer_loss,
    regression_losses,
    soft_loss,
)
from lrc_distill.services.models import GradCheckScope
from lrc_distill.tensor import GradCheckResult, Tensor, check_gradients, ops

Inputs = Mapping[str, Tensor]
Case = tuple[str, Callable[[Inputs], Tensor], dict[str, np.ndarray], list[str] | None]


def _readout(rng: np.random.Generator, shape: tuple[int, ...]) -> Callable[[Tensor], Tensor]:
    """Reduce a tensor output to a scalar with fixed random weights."""
    weights = rng.normal(size=shape)
    return lambda out: ops.sum(out * weights)


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------
def _trace(ffn_out: Tensor) -> ForwardTrace:
    dummy = Tensor(np.ones((1, 1)))
    return ForwardTrace(emb_out=dummy, ffn_outs=[ffn_out], logits=dummy)


def _transformer_case(
    rng: np.random.Generator, granularity: CosineGranularity, ablation: Ablation
) -> Case:
    l, d, d_t, k = 2, 3, 4, 2
    cfg = DistillConfig(
        layer_map=[1],
        num_negatives=k,
        batch_size=k + 1,
        cosine_granularity=granularity,
        ablation=ablation,
    )
    teacher = _trace(Tensor(rng.normal(size=(l, d_t))))
    negatives = [_trace(Tensor(rng.normal(size=(l, d_t)))) for _ in range(k)]

    def fn(inputs: Inputs) -> Tensor:
        return transformer_stage_loss(
            _trace(inputs["h_s"]), teacher, negatives, Projection([inputs["W"]]), cfg, [1]
        )

    name = "transformer_stage_loss"
    if ablation is Ablation.MSE_INTERMEDIATE:
        name += "[mse]"
    elif granularity is CosineGranularity.PER_TOKEN_MEAN:
        name += "[per_token]"
    inputs = {"h_s": rng.normal(size=(l, d)), "W": rng.normal(size=(d, d_t))}
    return name, fn, inputs, None


def _loss_cases(rng: np.random.Generator) -> list[Case]:
    dim, k, classes, tau = 5, 3, 4, 1.1
    onehot = np.eye(classes)[[1, 3]]
    cases: list[Case] = [
        (
            "angular_distance",
            lambda t: ops.sum(angular_distance(t["x"], t["y"])),
            {"x": rng.normal(size=(2, dim)), "y": rng.normal(size=(2, dim))},
            None,
        ),
        (
            "cos_nce",
            lambda t: ops.sum(cos_nce(t["z_s"], t["z_t"], t["negatives"])),
            {
                "z_s": rng.normal(size=(2, dim)),
                "z_t": rng.normal(size=(2, dim)),
                "negatives": rng.normal(size=(2, k, dim)),
            },
            ["z_s"],
        ),
        (
            "soft_loss",
            lambda t: ops.sum(soft_loss(t["y_s"], t["y_t"], tau)),
            {"y_s": rng.normal(size=(2, classes)), "y_t": rng.normal(size=(2, classes))},
            ["y_s"],
        ),
        (
            "hard_loss",
            lambda t: ops.sum(hard_loss(t["y_s"], onehot, tau)),
            {"y_s": rng.normal(size=(2, classes))},
            None,
        ),
        (
            "hard_loss[one_hot]",
            lambda t: ops.sum(hard_loss(t["y_s"], onehot, tau, literal=False)),
            {"y_s": rng.normal(size=(2, classes))},
            None,
        ),
        (
            "regression_losses",
            lambda t: ops.sum(sum(regression_losses(t["y_s"], 0.3, 0.7), Tensor(0.0))),
            {"y_s": rng.normal(size=(3,))},
            None,
        ),
        (
            "mse_layer_loss",
            lambda t: mse_layer_loss(t["h"], t["h_t"]),
            {"h": rng.normal(size=(2, 4)), "h_t": rng.normal(size=(2, 4))},
            ["h"],
        ),
    ]
    for granularity, ablation in (
        (CosineGranularity.WHOLE, Ablation.FULL),
        (CosineGranularity.PER_TOKEN_MEAN, Ablation.FULL),
        (CosineGranularity.WHOLE, Ablation.MSE_INTERMEDIATE),
    ):
        cases.append(_transformer_case(rng, granularity, ablation))
    return cases


def _primitive_cases(rng: np.random.Generator) -> list[Case]:
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    positive = rng.uniform(0.5, 2.0, size=(3, 4))
    readout = _readout(rng, (3, 4))
    row_readout = _readout(rng, (3,))
    return [
        ("add", lambda t: readout(t["a"] + t["b"]), {"a": a, "b": rng.normal(size=(4,))}, None),
        ("mul", lambda t: readout(t["a"] * t["b"]), {"a": a, "b": b}, None),
        ("div", lambda t: readout(t["a"] / t["b"]), {"a": a, "b": positive}, None),
        ("exp", lambda t: readout(ops.exp(t["a"])), {"a": a}, None),
        ("log", lambda t: readout(ops.log(t["a"])), {"a": positive}, None),
        ("sqrt", lambda t: readout(ops.sqrt(t["a"])), {"a": positive}, None),
        ("gelu", lambda t: readout(ops.gelu(t["a"])), {"a": a}, None),
        ("mean", lambda t: row_readout(ops.mean(t["a"], axis=-1)), {"a": a}, None),
        ("norm", lambda t: row_readout(ops.norm(t["a"])), {"a": a}, None),
        (
            "matmul",
            lambda t: _readout(np.random.default_rng(0), (2, 3, 5))(ops.matmul(t["a"], t["b"])),
            {"a": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(4, 5))},
            None,
        ),
        ("transpose", lambda t: _readout(np.random.default_rng(1), (4, 3))(ops.swap_last(t["a"])), {"a": a}, None),
        ("take", lambda t: _readout(np.random.default_rng(2), (3, 4))(ops.take(t["a"], [2, 0, 2])), {"a": a}, None),
        ("concat", lambda t: _readout(np.random.default_rng(3), (3, 8))(ops.concat([t["a"], t["b"]])), {"a": a, "b": b}, None),
        ("softmax", lambda t: readout(ops.softmax(t["a"], 1.1)), {"a": a}, None),
        ("log_softmax", lambda t: readout(ops.log_softmax(t["a"], 0.7)), {"a": a}, None),
        (
            "layer_norm",
            lambda t: readout(ops.layer_norm(t["x"], t["gain"], t["bias"])),
            {"x": a, "gain": rng.uniform(0.5, 1.5, size=(4,)), "bias": rng.normal(size=(4,))},
            None,
        ),
    ]


_TINY = EncoderConfig(
    vocab_size=6, max_len=3, num_layers=1, hidden_size=4, num_heads=2, ffn_size=4, num_classes=2
)


def _model_inputs(model: EncoderModel, rng: np.random.Generator) -> dict[str, np.ndarray]:
    # jitter biases and gains away from 0/1 so every path carries gradient
    return {
        name: param.data + rng.normal(scale=0.1, size=param.shape)
        for name, param in model.named_parameters()
    }


def _model_from(inputs: Inputs, config: EncoderConfig) -> EncoderModel:
    return EncoderModel(config, {name: inputs[name] for name, _ in parameter_shapes(config)})


def _encoder_cases(rng: np.random.Generator) -> list[Case]:
    inputs = _model_inputs(init_params(_TINY, int(rng.integers(1 << 30))), rng)
    ids = np.array([[2, 3, 0], [2, 4, 5]])
    hidden_readout = _readout(rng, (2, 3, _TINY.hidden_size))
    logit_readout = _readout(rng, (2, _TINY.num_classes))
    layer_input = rng.normal(size=(2, 3, _TINY.hidden_size))
    mask = np.where(ids == 0, -1e9, 0.0)[:, None, None, :]

    def embedding(t: Inputs) -> Tensor:
        return hidden_readout(_model_from(t, _TINY).embed(ids))

    def layer(t: Inputs) -> Tensor:
        return hidden_readout(_model_from(t, _TINY).layer(t["x"], 0, mask))

    def full(t: Inputs) -> Tensor:
        return logit_readout(forward(_model_from(t, _TINY), ids).logits)

    return [
        ("encoder.embed", embedding, inputs, ["embeddings.token", "embeddings.position", "embeddings.norm.gain"]),
        ("encoder.layer", layer, {**inputs, "x": layer_input}, None),
        ("encoder.forward", full, inputs, None),
    ]


def _end_to_end_cases(rng: np.random.Generator) -> list[Case]:
    teacher_config = _TINY.model_copy(update={"num_layers": 2, "hidden_size": 6, "num_heads": 2})
    teacher = init_params(teacher_config, int(rng.integers(1 << 30)))
    ids = np.array([[2, 3, 4], [2, 4, 4], [2, 3, 3]])
    labels = np.array([0, 1, 1])
    teacher_trace = forward(teacher, ids)
    negatives = gather_negative_traces(teacher_trace, negative_index_matrix(3, 2, rng))
    cfg = DistillConfig(layer_map=[2], num_negatives=2, batch_size=3)
    weights = LossWeights(alpha=1.0, beta=1.0, gamma=3.0, tau=cfg.tau)

    student = init_params(_TINY, int(rng.integers(1 << 30)))
    inputs = _model_inputs(student, rng)
    inputs["projection.0"] = rng.uniform(-0.5, 0.5, size=(_TINY.hidden_size, teacher_config.hidden_size))
    offset = rng.normal(size=(3, 3, _TINY.hidden_size))
    offset /= np.sqrt(np.sum(offset**2, axis=(-2, -1), keepdims=True))

    def objective(t: Inputs, perturbed: bool) -> Tensor:
        model = _model_from(t, _TINY)
        emb = model.embed(ids) + offset if perturbed else None
        trace = forward(model, ids, inject_emb=emb)
        total, _ = step_objective(
            trace, teacher_trace, negatives, labels, Projection([t["projection.0"]]),
            cfg, [2], weights, Stage.STAGE2,
        )
        return total

    return [
        ("end2end.objective", lambda t: objective(t, False), inputs, None),
        ("end2end.perturbed_objective", lambda t: objective(t, True), inputs, None),
    ]


_SCOPES: dict[GradCheckScope, Callable[[np.random.Generator], list[Case]]] = {
    GradCheckScope.LOSSES: _loss_cases,
    GradCheckScope.ENCODER: _primitive_cases,
    GradCheckScope.END2END: _end_to_end_cases,
}


def run_grad_check(
    scope: GradCheckScope,
    seed: int = 0,
    *,
    rtol: float = 1e-4,
    corrupt_op: str | None = None,
) -> list[GradCheckResult]:
    """
    Check every case of ``scope``; the encoder scope also covers the encoder pieces.

    ``corrupt_op`` scales the analytic gradient of the named case so the
    harness can be shown to catch a wrong gradient.
    """
    rng = np.random.default_rng(seed)
    cases = _SCOPES[scope](rng)
    if scope is GradCheckScope.ENCODER:
        cases += _encoder_cases(rng)

    results: list[GradCheckResult] = []
    for name, fn, inputs, wrt in cases:
        results.extend(
            check_gradients(
                name, fn, inputs, wrt=wrt, rtol=rtol,
                corrupt=1.5 if name == corrupt_op else 1.0,
            )
        )
    failed = sum(not r.passed for r in results)
    logger.info(f"Gradient check scope={scope.value} seed={seed}: {len(results)} checks, {failed} failed")
    return results
