import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vusni.data import (
    Dataset,
    ParamVector,
    SubjectRecord,
    load_csv,
    standardize,
)
from vusni.errors import (
    MalformedRow,
    NonFiniteValue,
    VerifiedLabelMismatch,
    ZeroVariance,
)


def write(tmp_path, text):
    path = tmp_path / "d.csv"
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_verified_row(self, tmp_path):
        data = load_csv(write(tmp_path, "t,a1,v,d\n1.2,0.3,1,2\n1.0,0.0,1,1\n2.0,1.0,1,3\n"))
        r = data.records[0]
        assert (r.t, r.a, r.v, r.d) == (1.2, (0.3,), 1, 2)
        assert data.p == 1

    def test_unverified_row_has_no_label(self, tmp_path):
        data = load_csv(write(tmp_path, "t,a1,v,d\n1.2,0.3,0,\n1.0,0.0,1,1\n2.0,1.0,1,3\n"))
        r = data.records[0]
        assert (r.t, r.a, r.v, r.d) == (1.2, (0.3,), 0, None)

    def test_label_without_verification_rejected(self, tmp_path):
        with pytest.raises(VerifiedLabelMismatch):
            load_csv(write(tmp_path, "t,a1,v,d\n1.2,0.3,0,2\n"))

    def test_verification_without_label_rejected(self, tmp_path):
        with pytest.raises(VerifiedLabelMismatch):
            load_csv(write(tmp_path, "t,a1,v,d\n1.2,0.3,1,\n"))

    def test_malformed_row_reports_line_number(self, tmp_path):
        with pytest.raises(MalformedRow, match="line 3"):
            load_csv(write(tmp_path, "t,a1,v,d\n1.0,0.0,1,1\nbogus,0.0,1,1\n"))

    def test_nonfinite_rejected(self, tmp_path):
        with pytest.raises(NonFiniteValue):
            load_csv(write(tmp_path, "t,a1,v,d\nnan,0.0,1,1\n"))

    def test_missing_column(self, tmp_path):
        with pytest.raises(MalformedRow, match="missing column"):
            load_csv(write(tmp_path, "t,a1,v\n1.0,0.0,1\n"))

    def test_schema_renames_columns(self, tmp_path):
        path = write(tmp_path, "tau,ab,ver,dx\n1.0,0.5,1,2\n")
        data = load_csv(path, schema={"t": "tau", "a": ["ab"], "v": "ver", "d": "dx"})
        assert data.records[0].t == 1.0 and data.records[0].d == 2

    def test_round_trip(self, tmp_path, rng):
        from tests.conftest import random_mixed_dataset

        data = random_mixed_dataset(25, 2, rng)
        path = tmp_path / "rt.csv"
        data.save_csv(path)
        back = load_csv(path)
        assert back.records == data.records


class TestDataset:
    def test_covariate_dimension_must_agree(self):
        r1 = SubjectRecord(t=1.0, a=(0.0,), v=1, d=1)
        r2 = SubjectRecord(t=2.0, a=(0.0, 1.0), v=1, d=2)
        with pytest.raises(ValueError):
            Dataset([r1, r2])

    def test_onehot_rows(self):
        data = Dataset.from_arrays([1.0, 2.0, 3.0], [[0.0], [0.0], [0.0]], [1, 0, 1], [2, 0, 3])
        assert data.d_onehot.tolist() == [[0, 1, 0], [0, 0, 0], [0, 0, 1]]

    def test_arrays_read_only(self):
        data = Dataset.from_arrays([1.0, 2.0, 3.0], [[0.0], [0.0], [0.0]], [1, 1, 1], [1, 2, 3])
        with pytest.raises(ValueError):
            data.t[0] = 0.0


class TestStandardize:
    def test_two_point_column(self):
        data = Dataset.from_arrays([1.0, 3.0], [[2.0], [4.0]], [1, 1], [1, 2])
        out, transform = standardize(data)
        assert out.t == pytest.approx([-math.sqrt(0.5), math.sqrt(0.5)])
        assert transform.to_dict()["t"] == {"mean": 2.0, "sd": pytest.approx(math.sqrt(2))}

    def test_idempotent_on_standardized_data(self, rng):
        from tests.conftest import random_mixed_dataset

        data = random_mixed_dataset(40, 1, rng)
        once, _ = standardize(data)
        twice, _ = standardize(once)
        assert np.max(np.abs(twice.t - once.t)) <= 1e-12
        assert np.max(np.abs(twice.a - once.a)) <= 1e-12

    def test_zero_variance_column(self):
        data = Dataset.from_arrays([2.0, 2.0, 2.0], [[1.0], [2.0], [3.0]], [1, 1, 1], [1, 2, 3])
        with pytest.raises(ZeroVariance):
            standardize(data)

    def test_output_moments(self, rng):
        from tests.conftest import random_mixed_dataset

        data = random_mixed_dataset(60, 2, rng)
        out, _ = standardize(data)
        for col in [out.t, out.a[:, 0], out.a[:, 1]]:
            assert abs(np.mean(col)) <= 1e-10
            assert abs(np.std(col, ddof=1) - 1.0) <= 1e-10


class TestParamVector:
    def test_flat_round_trip(self, rng):
        xi = ParamVector.from_flat(rng.normal(size=11), 1)
        again = ParamVector.from_flat(xi.to_flat(), 1)
        assert xi == again

    def test_labeled_round_trip(self, rng):
        xi = ParamVector.from_flat(rng.normal(size=14), 2)
        assert ParamVector.from_labeled(xi.to_labeled()) == xi

    def test_dimensions(self):
        xi = ParamVector.zeros(3)
        assert xi.p == 3 and xi.dim == 17

    def test_flat_order_is_block_order(self):
        xi = ParamVector(lam=(1.0, 2.0), tau_pi=[3, 4, 5], tau_rho1=[6, 7, 8], tau_rho2=[9, 10, 11])
        assert xi.to_flat().tolist() == [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]
        assert xi.block_names() == [
            "lambda1", "lambda2",
            "tau_pi1", "tau_pi2", "tau_pi3",
            "tau_rho11", "tau_rho21", "tau_rho31",
            "tau_rho12", "tau_rho22", "tau_rho32",
        ]

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteValue):
            ParamVector(lam=(np.nan, 0.0), tau_pi=[0, 0], tau_rho1=[0, 0], tau_rho2=[0, 0])

    @given(st.integers(min_value=0, max_value=4))
    def test_zeros_dim(self, p):
        assert ParamVector.zeros(p).dim == 8 + 3 * p
