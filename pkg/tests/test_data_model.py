import json

import numpy as np
import pytest

from contdid import (
    CrossSection,
    Dataset,
    LinearSystem,
    ValidationError,
    load_csv,
    load_csv_pair,
    save_csv,
    simulate,
    summarize,
)
from contdid.data_model import SUMMARY_KEYS


def test_load_csv_three_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("period,y,x\n1,1.0,0.5\n1,2.0,0.7\n2,1.5,0.6\n")
    ds = load_csv(path)
    assert ds.n_periods == 2
    assert ds.period(1).n == 2
    assert ds.period(2).n == 1
    assert ds.reference.period == 2


def test_load_csv_rejects_nan_naming_row(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("period,y,x\n1,1.0,0.5\n1,nan,0.7\n2,1.5,0.6\n2,1.0,0.1\n")
    with pytest.raises(ValidationError, match="lines 3"):
        load_csv(path)


def test_load_csv_rejects_non_numeric(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("period,y,x\n1,1.0,0.5\n1,oops,0.7\n2,1.5,0.6\n2,2.0,0.3\n")
    with pytest.raises(ValidationError, match="lines 3"):
        load_csv(path)


def test_load_csv_needs_two_periods(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("period,y,x\n1,1.0,0.5\n1,2.0,0.7\n")
    with pytest.raises(ValidationError, match="need at least 2"):
        load_csv(path)


def test_load_csv_custom_schema(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("wave,cons,inc\n1,1.0,0.5\n2,2.0,0.7\n")
    ds = load_csv(path, schema={"period": "wave", "y": "cons", "x": "inc"})
    assert ds.n_periods == 2


def test_two_file_variant_matches_single_file(tmp_path):
    single = tmp_path / "both.csv"
    single.write_text("period,y,x\n1,1.0,0.5\n1,2.0,0.7\n2,1.5,0.6\n")
    f1 = tmp_path / "p1.csv"
    f1.write_text("y,x\n1.0,0.5\n2.0,0.7\n")
    f2 = tmp_path / "p2.csv"
    f2.write_text("y,x\n1.5,0.6\n")
    a = load_csv(single)
    b = load_csv_pair(f1, f2)
    for pa, pb in zip(a.periods, b.periods):
        np.testing.assert_array_equal(pa.outcomes, pb.outcomes)
        np.testing.assert_array_equal(pa.treatments, pb.treatments)


def test_save_load_round_trip(tmp_path, linear_dgp):
    ds = simulate(linear_dgp, 500, seed=11)
    path = tmp_path / "rt.csv"
    save_csv(ds, path)
    back = load_csv(path)
    for a, b in zip(ds.periods, back.periods):
        np.testing.assert_array_equal(a.outcomes, b.outcomes)
        np.testing.assert_array_equal(a.treatments, b.treatments)


def test_periods_relabeled_in_label_order():
    ds = Dataset.from_cross_sections(
        [CrossSection(1989, [1.0], [1.0]), CrossSection(1987, [2.0, 3.0], [2.0, 3.0])]
    )
    assert [cs.period for cs in ds.periods] == [1, 2]
    assert ds.source_labels == (1987, 1989)
    assert ds.period(1).n == 2
    assert ds.reference.n == 1


def test_duplicate_period_labels_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        Dataset.from_cross_sections(
            [CrossSection(1, [1.0], [1.0]), CrossSection(1, [2.0], [2.0])]
        )


def test_non_finite_values_rejected():
    with pytest.raises(ValidationError, match="non-finite"):
        CrossSection(1, [1.0, np.inf], [0.5, 0.2])


def test_length_mismatch_rejected():
    with pytest.raises(ValidationError, match="differ in length"):
        CrossSection(1, [1.0, 2.0], [0.5])


def test_summarize_constant_outcomes():
    ds = Dataset.from_cross_sections(
        [CrossSection(1, [1.0, 1.0, 1.0], [0.1, 0.2, 0.3]), CrossSection(2, [5.0], [0.4])]
    )
    rows = summarize(ds)
    assert rows[0]["y_mean"] == 1.0
    assert rows[0]["y_sd"] == 0.0
    assert rows[1]["n"] == 1
    assert rows[1]["y_sd"] == 0.0  # singleton period still yields finite summaries
    assert all(tuple(r.keys()) == SUMMARY_KEYS for r in rows)
    json.dumps(rows)  # JSON-serializable as-is


def test_summarize_permutation_invariant():
    rng = np.random.default_rng(5)
    y = rng.normal(size=100)
    x = rng.normal(size=100)
    perm = rng.permutation(100)
    a = summarize(Dataset.from_cross_sections([CrossSection(1, y, x), CrossSection(2, y, x)]))
    b = summarize(
        Dataset.from_cross_sections([CrossSection(1, y[perm], x[perm]), CrossSection(2, y, x)])
    )
    assert a[0] == pytest.approx(b[0])


def test_summarize_linear_dgp_population_mean(linear_dgp):
    # population mean of Y_t is alpha_t + beta * gamma_t; of X_t is gamma_t
    ds = simulate(linear_dgp, 1000, seed=7)
    rows = summarize(ds)
    for row, t in zip(rows, (1, 2)):
        ey = linear_dgp.alpha[t - 1] + linear_dgp.beta * linear_dgp.gamma[t - 1]
        assert abs(row["y_mean"] - ey) < 4 * row["y_sd"] / np.sqrt(row["n"])
        assert abs(row["x_mean"] - linear_dgp.gamma[t - 1]) < 4 * row["x_sd"] / np.sqrt(row["n"])


def test_treatment_ties_flagged():
    tied = CrossSection(1, [1.0, 2.0, 3.0], [0.5, 0.5, 0.7])
    untied = CrossSection(1, [1.0, 2.0, 3.0], [0.5, 0.6, 0.7])
    assert tied.has_treatment_ties()
    assert not untied.has_treatment_ties()
