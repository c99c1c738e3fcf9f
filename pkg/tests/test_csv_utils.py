import numpy as np

from mswt.models import ClimatologyReport, Normalizer, SpectrumSeries
from mswt.utils.csv_utils import (
    format_cell,
    read_csv,
    read_normalization_csv,
    render_csv,
    write_climatology_csv,
    write_loss_csv,
    write_metrics_csv,
    write_normalization_csv,
    write_pairs_csv,
    write_spectrum_csv,
    write_summary_csv,
    write_zonal_csv,
)


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(0.1) == "0.1"
    assert format_cell(np.float64(1e-30)) == "1e-30"
    assert format_cell(3) == "3"
    assert format_cell("enstrophy") == "enstrophy"


def test_render_csv_golden_text():
    text = render_csv(("a", "b"), [(1, 0.5), (2, None)])
    assert text == "a,b\n1,0.5\n2,\n"


def test_metrics_csv_leaves_missing_metrics_empty(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [
        {"step": 1, "rel_l2": 0.25, "smae": 0.5, "smlr": 0.125, "emae": 1.0, "emlr": 2.0},
        {"step": 30},
    ])
    assert path.read_text() == (
        "step,rel_l2,smae,smlr,emae,emlr\n"
        "1,0.25,0.5,0.125,1.0,2.0\n"
        "30,,,,,\n"
    )


def test_loss_csv(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_csv(path, [0.75, 0.5], [0.001, 0.0005])
    assert path.read_text() == "iteration,lr,train_loss\n0,0.001,0.75\n1,0.0005,0.5\n"


def test_spectrum_csv(tmp_path):
    path = tmp_path / "spectrum.csv"
    write_spectrum_csv(path, SpectrumSeries(power=np.array([0.0, 0.5, 0.25]), kind="enstrophy", k_max=1))
    assert path.read_text() == "k,power\n0,0.0\n1,0.5\n2,0.25\n"


def test_climatology_and_zonal_csv(tmp_path):
    bias = np.zeros((2, 3, 1)) + 0.5
    report = ClimatologyReport(
        time_mean_model=bias + 1.0,
        time_mean_reference=np.ones((2, 3, 1)),
        bias=bias,
        min_bias=np.array([0.5]),
        max_bias=np.array([0.5]),
        mean_bias=np.array([0.5]),
        rmse=np.array([0.5]),
        zonal_model=np.array([[1.5], [1.5]]),
        zonal_reference=np.array([[1.0], [1.0]]),
    )
    write_climatology_csv(tmp_path / "climatology.csv", report, ["omega"])
    write_zonal_csv(tmp_path / "zonal.csv", report, ["omega"])
    assert (tmp_path / "climatology.csv").read_text() == (
        "variable,min_bias,max_bias,mean_bias,rmse\nomega,0.5,0.5,0.5,0.5\n"
    )
    assert (tmp_path / "zonal.csv").read_text() == (
        "row,variable,model,reference\n0,omega,1.5,1.0\n1,omega,1.5,1.0\n"
    )


def test_pairs_csv_indexes_every_pair(tmp_path):
    path = tmp_path / "pairs.csv"
    write_pairs_csv(path, [3, 2])
    rows = read_csv(path)
    assert [(r["pair"], r["trajectory"], r["step"]) for r in rows] == [
        ("0", "0", "0"), ("1", "0", "1"), ("2", "1", "0"),
    ]


def test_normalization_csv_reads_back_exactly(tmp_path):
    path = tmp_path / "normalization.csv"
    normalizer = Normalizer(mean=np.array([0.1, -3.3]), std=np.array([1.0 / 3.0, 2.5]))
    write_normalization_csv(path, normalizer)
    mean, std = read_normalization_csv(path)
    assert mean == [0.1, -3.3]
    assert std == [1.0 / 3.0, 2.5]


def test_summary_csv_columns(tmp_path):
    path = tmp_path / "summary.csv"
    write_summary_csv(path, [
        {"step": 1, "count": 2, "rel_l2_mean": 0.5, "rel_l2_std": 0.25, "smae_mean": 1.0, "smae_std": 0.0,
         "smlr_mean": 0.5, "smlr_std": 0.5, "emae_mean": 2.0, "emae_std": 1.0, "emlr_mean": 0.125, "emlr_std": 0.0},
        {"step": 64, "count": 0},
    ])
    assert path.read_text() == (
        "step,count,rel_l2_mean,rel_l2_std,smae_mean,smae_std,smlr_mean,smlr_std,"
        "emae_mean,emae_std,emlr_mean,emlr_std\n"
        "1,2,0.5,0.25,1.0,0.0,0.5,0.5,2.0,1.0,0.125,0.0\n"
        "64,0,,,,,,,,,,\n"
    )
