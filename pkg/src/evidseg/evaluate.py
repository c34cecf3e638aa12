"""Evaluation protocol: run the pipeline over a dataset and aggregate metrics.

Each sample is optionally perturbed, pushed through the forward pipeline
with the chosen fusion mode, and reduced to an `EvalRecord`. The records
are aggregated into a single `MetricsReport` covering validity (DGS, DCS),
calibration (ECE and its negative log), uncertainty-error overlap, mean
fused and per-phase uncertainties, and the per-case volume correlation.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Optional

import numpy as np

from . import metrics
from .errors import DegenerateCorrelation, EmptyInput
from .metrics import EvalRecord, MetricsReport
from .network import Model, forward_pipeline
from .phantom import PHASES, PerturbSpec, PhaseStack, perturb


def perturb_label(spec: Optional[PerturbSpec]) -> tuple[str, str]:
    """(kind, parameter) strings used in CSV rows and plot axes."""
    if spec is None:
        return "none", "0"
    if spec.kind == "noise":
        return "noise", f"{spec.noise_var:g}"
    if spec.kind == "blur":
        return "blur", f"{spec.blur_var:g};{spec.kernel_size}"
    return "missing", str(spec.n_missing)


def evaluate_model(
    model: Model,
    samples: list[PhaseStack],
    fusion: str = "mems",
    perturb_spec: Optional[PerturbSpec] = None,
    n_bins: int = 10,
    run_id: str = "",
) -> MetricsReport:
    """Score a model on (optionally perturbed) samples with one fusion mode."""
    if not samples:
        raise EmptyInput("no samples to evaluate")
    records: list[EvalRecord] = []
    ueo_values: list[float] = []
    fused_u_sum = 0.0
    fused_u_count = 0
    phase_u_sum: dict[str, float] = defaultdict(float)
    phase_u_count: dict[str, int] = defaultdict(int)
    present_counts: list[int] = []
    pred_volumes: dict[int, int] = defaultdict(int)
    true_volumes: dict[int, int] = defaultdict(int)
    for sample in samples:
        view = perturb(sample, perturb_spec) if perturb_spec is not None else sample
        result = forward_pipeline(model, view, fusion=fusion)
        probs = result.fused.prediction()
        prediction = probs.argmax(axis=0)
        confidence = probs.max(axis=0)
        uncertainty = result.fused.uncertainty
        record = EvalRecord(
            prediction=prediction,
            truth=view.mask,
            uncertainty=uncertainty,
            confidence=confidence,
            case_id=view.case_id,
        )
        records.append(record)
        ueo_values.append(metrics.ueo(uncertainty, record.error_mask))
        fused_u_sum += float(uncertainty.sum())
        fused_u_count += uncertainty.size
        for phase, grid in result.per_phase.items():
            phase_u_sum[phase] += float(grid.uncertainty.sum())
            phase_u_count[phase] += grid.uncertainty.size
        present_counts.append(len(view.present))
        pred_volumes[view.case_id] += int((prediction != 0).sum())
        true_volumes[view.case_id] += int((view.mask != 0).sum())
    cases = sorted(true_volumes)
    try:
        pearson = metrics.volume_correlation(
            [pred_volumes[c] for c in cases], [true_volumes[c] for c in cases]
        )
    except DegenerateCorrelation:
        pearson = float("nan")
    ece_value = metrics.ece(records, n_bins)
    kind, param = perturb_label(perturb_spec)
    mean_u_phase = {
        phase: phase_u_sum[phase] / phase_u_count[phase]
        for phase in PHASES
        if phase_u_count.get(phase)
    }
    return MetricsReport(
        run_id=run_id,
        fusion=fusion,
        perturb_kind=kind,
        perturb_param=param,
        dgs=metrics.dgs(records),
        dcs=metrics.dcs(records),
        ece=ece_value,
        neg_log_ece=metrics.neg_log_ece(ece_value),
        ueo=float(np.mean(ueo_values)),
        mean_u_fused=fused_u_sum / fused_u_count,
        mean_u_phase=mean_u_phase,
        pearson_r=pearson,
        n_slices=len(records),
        n_cases=len(cases),
        mean_present=float(np.mean(present_counts)),
    )
