import pandas as pd
import pytest

from src.exceptions import InsufficientDataError, ValidationError
from src.respiration.scoring import score_estimates


@pytest.fixture
def rows():
    return [
        {"trace": "a.csi", "rate_bpm": 15.0, "truth_bpm": 15.0, "location": "bedroom"},
        {"trace": "b.csi", "rate_bpm": 16.0, "truth_bpm": 15.0, "location": "bedroom"},
        {"trace": "c.csi", "rate_bpm": 13.0, "truth_bpm": 15.0, "location": "office"},
        {"trace": "d.csi", "rate_bpm": 12.0, "truth_bpm": 12.0, "location": "office"},
    ]


def test_single_group_summary(rows):
    table = score_estimates(rows)
    assert len(table) == 1
    row = table.iloc[0]
    assert row["group"] == "all"
    assert row["count"] == 4
    assert row["mae_bpm"] == pytest.approx(0.75)
    assert row["accuracy"] == pytest.approx(0.75)


def test_grouping_by_location(rows):
    table = score_estimates(rows, group_by="location").set_index("location")
    assert table.loc["bedroom", "accuracy"] == pytest.approx(1.0)
    assert table.loc["office", "accuracy"] == pytest.approx(0.5)
    assert table.loc["office", "mean_error_pct"] == pytest.approx(100.0 * 2.0 / 15.0 / 2.0)


def test_tolerance_boundary_counts_as_accurate():
    table = score_estimates(pd.DataFrame({"rate_bpm": [11.0], "truth_bpm": [10.0]}), tolerance=0.1)
    assert table.iloc[0]["accuracy"] == 1.0
    table = score_estimates(pd.DataFrame({"rate_bpm": [11.5], "truth_bpm": [10.0]}), tolerance=0.1)
    assert table.iloc[0]["accuracy"] == 0.0


def test_input_frame_is_left_untouched(rows):
    df = pd.DataFrame(rows)
    score_estimates(df)
    assert list(df.columns) == ["trace", "rate_bpm", "truth_bpm", "location"]


@pytest.mark.parametrize("kwargs", [{"tolerance": 0.0}, {"tolerance": 1.5}, {"group_by": "room"}])
def test_bad_arguments(rows, kwargs):
    with pytest.raises(ValidationError):
        score_estimates(rows, **kwargs)


def test_bad_rows():
    with pytest.raises(InsufficientDataError):
        score_estimates([])
    with pytest.raises(ValidationError, match="missing"):
        score_estimates([{"rate_bpm": 12.0}])
    with pytest.raises(ValidationError, match="truth_bpm"):
        score_estimates([{"rate_bpm": 12.0, "truth_bpm": 0.0}])
