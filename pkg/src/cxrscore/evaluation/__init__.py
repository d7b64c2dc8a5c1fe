from .compare import ExternalScoreSet, compare_methods, load_external_scores, spearman
from .report import build_report, emit_report, render_figures
from .stats import GroupStats, box_stats, group_scores
from .trend import TrendReport, trend_check

__all__ = [
    "ExternalScoreSet", "compare_methods", "load_external_scores", "spearman",
    "build_report", "emit_report", "render_figures", "GroupStats", "box_stats",
    "group_scores", "TrendReport", "trend_check",
]
