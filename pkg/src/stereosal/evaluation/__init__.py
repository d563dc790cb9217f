"""Ground truth, metrics, baselines, post-processing and statistics."""
from .baselines import BASELINES, center_map, chance_map, infinite_humans_scores, one_human_scores, split_half_reliability
from .fixations import FixationSet, density_from_points, display_view, fixation_density, load_fixations, save_fixations
from .harness import NegativePool, evaluate
from .metrics import METRICS, all_metrics, auc_judd, auc_shuffled, emd, emd_grid, kld, metric, nss, pcc, sim
from .postprocess import histogram_match, postprocess, tune_postprocess
from .stats import MetricReport, average_ranks, build_report, mean_ci, ttest_p

__all__ = [
    "BASELINES", "METRICS", "FixationSet", "MetricReport", "NegativePool",
    "all_metrics", "auc_judd", "auc_shuffled", "average_ranks", "build_report", "center_map",
    "chance_map", "density_from_points", "display_view", "emd", "emd_grid", "evaluate",
    "fixation_density", "histogram_match", "infinite_humans_scores", "kld", "load_fixations",
    "mean_ci", "metric", "nss", "one_human_scores", "pcc", "postprocess", "save_fixations",
    "sim", "split_half_reliability", "ttest_p", "tune_postprocess",
]
