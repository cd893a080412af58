from typing import Any, Dict, Iterable, Optional, Sequence, Union

import pandas as pd

from src.exceptions import InsufficientDataError, ValidationError

DEFAULT_TOLERANCE = 0.10


def score_estimates(
        rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]],
        tolerance: float = DEFAULT_TOLERANCE,
        group_by: Optional[Union[str, Sequence[str]]] = None,
) -> pd.DataFrame:
    """
    Accuracy of rate estimates against truth.

    Each row needs `truth_bpm` and `rate_bpm`. An estimate is accurate when its
    absolute error is within `tolerance` x truth. Returns one row per group
    (or a single "all" row) with count, mae_bpm, mean_error_pct and accuracy.
    """
    if not 0 < tolerance < 1:
        raise ValidationError("tolerance", f"must be in (0, 1), got {tolerance}")
    df = rows.copy() if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if df.empty:
        raise InsufficientDataError("scoring", "1 estimate", 0)
    missing = {"truth_bpm", "rate_bpm"} - set(df.columns)
    if missing:
        raise ValidationError("rows", f"missing columns {sorted(missing)}")
    if (df["truth_bpm"] <= 0).any():
        raise ValidationError("truth_bpm", "must be > 0")

    df["abs_error_bpm"] = (df["rate_bpm"] - df["truth_bpm"]).abs()
    df["error_pct"] = 100.0 * df["abs_error_bpm"] / df["truth_bpm"]
    df["accurate"] = df["abs_error_bpm"] <= tolerance * df["truth_bpm"]

    keys = [group_by] if isinstance(group_by, str) else list(group_by or [])
    if not keys:
        df["group"] = "all"
        keys = ["group"]
    unknown = [k for k in keys if k not in df.columns]
    if unknown:
        raise ValidationError("group_by", f"unknown column(s) {unknown}")

    return (
        df.groupby(keys, sort=True)
        .agg(
            count=("accurate", "size"),
            mae_bpm=("abs_error_bpm", "mean"),
            mean_error_pct=("error_pct", "mean"),
            accuracy=("accurate", "mean"),
        )
        .reset_index()
    )
