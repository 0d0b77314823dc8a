"""Fusion quality metrics and metric reports."""

from cscfuse.analysis.metrics import (
    avg_gradient,
    entropy,
    error_map,
    evaluate_all,
    mutual_information,
    psnr,
    scd,
    spatial_frequency,
    ssim_metric,
    std_dev,
    vif_fusion,
)
from cscfuse.analysis.reporter import MetricReport, generate_summary, render

__all__ = [
    "MetricReport", "avg_gradient", "entropy", "error_map", "evaluate_all", "generate_summary",
    "mutual_information", "psnr", "render", "scd", "spatial_frequency", "ssim_metric", "std_dev",
    "vif_fusion",
]
