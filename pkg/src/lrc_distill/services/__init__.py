from .bench_service import BenchReport, bench
from .compare_service import MISSING, Comparison, RunRow, compare, load_rows, write_comparison_csv
from .config import apply_overrides, load_manifest, load_run_config, write_manifest
from .factory import get_run_service
from .gradcheck_service import run_grad_check
from .models import (
    GradCheckScope,
    RunConfig,
    RunKind,
    RunManifest,
    SweepReport,
    TeacherTrainingConfig,
)
from .run_service import RunService, stage2_loss_std, stage2_weight_grid, weights_label

__all__ = [
    "MISSING",
    "BenchReport",
    "Comparison",
    "GradCheckScope",
    "RunConfig",
    "RunKind",
    "RunManifest",
    "RunRow",
    "RunService",
    "SweepReport",
    "TeacherTrainingConfig",
    "apply_overrides",
    "bench",
    "compare",
    "get_run_service",
    "load_manifest",
    "load_rows",
    "load_run_config",
    "run_grad_check",
    "stage2_loss_std",
    "stage2_weight_grid",
    "weights_label",
    "write_comparison_csv",
    "write_manifest",
]
