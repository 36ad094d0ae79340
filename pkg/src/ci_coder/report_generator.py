import pathlib

import yaml
from loguru import logger

from .models import ComparisonReport
from .training import TrainingHistory
from .Types import SummaryDict
from .utils import write_text_atomic

SUMMARY_FILE = "summary.yaml"


def _construct_history_dict(history: TrainingHistory) -> SummaryDict:
    history_dict: SummaryDict = {
        "epochs": len(history.records),
        "best_epoch": history.best_epoch,
        "stopped_early": history.stopped_early,
    }

    if history.records:
        first, last = history.records[0], history.records[-1]
        history_dict["first_val_loss"] = round(first.val_loss, 8)
        best = history.best_val_loss
        history_dict["best_val_loss"] = round(best if best is not None else last.val_loss, 8)
        history_dict["final_lr"] = last.lr

    return history_dict


def _get_summary_dict(report: ComparisonReport, history: TrainingHistory | None = None) -> SummaryDict:
    """
    form a nested dictionary of the comparison figures
    to dump it into a human friendly summary
    """
    summary_dict: SummaryDict = {
        "test_files": len(report.rows),
        "mean_stoi_ace": round(report.mean_ace, 6),
        "mean_stoi_model": round(report.mean_model, 6),
        "mean_gap": round(report.mean_gap, 6),
        "inverse_lgf": report.inverse_lgf,
    }

    if report.config_hash:
        summary_dict["config_hash"] = report.config_hash

    if history is not None:
        summary_dict["training"] = _construct_history_dict(history)
    elif report.history_file:
        summary_dict["history_file"] = report.history_file

    summary_dict["per_file"] = [
        {"file": row.file, "stoi_ace": round(row.stoi_ace, 6), "stoi_model": round(row.stoi_model, 6)}
        for row in report.rows
    ]
    return summary_dict


def _save_summary(summary_dict: SummaryDict, path: pathlib.Path) -> None:
    """dump the summary in a form of a YAML file"""
    write_text_atomic(path, yaml.dump(summary_dict, allow_unicode=True, sort_keys=False))
    logger.info(f"Experiment summary has been dumped to {path}")


@logger.catch(reraise=True)
def construct_summary(
    report: ComparisonReport, out_dir: pathlib.Path, history: TrainingHistory | None = None
) -> pathlib.Path:
    """construct the experiment summary, dump it as .yaml file and return a path to it"""
    summary = _get_summary_dict(report, history)
    path = pathlib.Path(out_dir) / SUMMARY_FILE
    _save_summary(summary, path)
    return path
