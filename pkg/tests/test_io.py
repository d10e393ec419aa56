import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varcov.errors import InvalidInput
from varcov.io import (
    load_model,
    model_from_dict,
    model_to_dict,
    read_constraints,
    read_dataset,
    read_table,
    save_model,
    write_dataset,
    write_table,
)
from varcov.var import ConstraintSpec, fit_iterative, fit_two_step


def test_dataset_round_trip(tmp_path, rng):
    Y = rng.standard_normal((7, 3)) * 1e-7
    write_dataset(tmp_path / "d.csv", Y, ["a", "b", "c"])
    back, names = read_dataset(tmp_path / "d.csv")
    assert names == ["a", "b", "c"]
    assert back.tobytes() == Y.tobytes()


def test_dataset_without_header(tmp_path):
    (tmp_path / "d.csv").write_text("1,2\n3,4\n5,6\n")
    Y, names = read_dataset(tmp_path / "d.csv")
    assert names == ["y1", "y2"]
    np.testing.assert_array_equal(Y, [[1, 2], [3, 4], [5, 6]])


@pytest.mark.parametrize("text", [
    "a,b\n1,2\n3\n",      # ragged
    "a,b\n1,2\n3,x\n",    # non-numeric
    "a,b\n1,2\n3,nan\n",  # non-finite
    "a,b\n1,2\n",         # T < 2
    "",                   # empty
    "a,b,c\n1,2\n3,4\n",  # header width
])
def test_dataset_rejects(tmp_path, text):
    (tmp_path / "d.csv").write_text(text)
    with pytest.raises(InvalidInput):
        read_dataset(tmp_path / "d.csv")


def test_table_round_trip(tmp_path):
    write_table(tmp_path / "t.csv", ["k", "v"], [(1, 0.1), (2, 1 / 3)])
    header, rows = read_table(tmp_path / "t.csv")
    assert header == ["k", "v"]
    assert [float(r[1]) for r in rows] == [0.1, 1 / 3]
    assert (tmp_path / "t.csv").read_bytes().count(b"\r") == 0


def test_constraints_file(tmp_path):
    (tmp_path / "c.txt").write_text("# lag,row,col\n1,1,1\n\n2, 3, 1  # note\n")
    assert read_constraints(tmp_path / "c.txt") == [(1, 1, 1), (2, 3, 1)]
    (tmp_path / "bad.txt").write_text("1,2\n")
    with pytest.raises(InvalidInput):
        read_constraints(tmp_path / "bad.txt")


def _assert_models_identical(a, b):
    assert a.mu.tobytes() == b.mu.tobytes()
    assert a.A.tobytes() == b.A.tobytes()
    ea, eb = a.noise_cov, b.noise_cov
    assert ea.U.tobytes() == eb.U.tobytes()
    assert ea.lam.tobytes() == eb.lam.tobytes()
    assert ea.sigma2 == eb.sigma2
    assert (ea.requested_rank, ea.n_samples, ea.tie) == (eb.requested_rank, eb.n_samples, eb.tie)
    assert a.constraint.free.tolist() == b.constraint.free.tolist()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_model_round_trip_bit_exact(seed, constrained):
    g = np.random.default_rng(seed)
    K, p = int(g.integers(2, 5)), int(g.integers(1, 3))
    Y = g.standard_normal((60, K)) * g.uniform(0.1, 10, K) + g.standard_normal(K)
    if constrained:
        R = ConstraintSpec.from_mask(g.random((p, K, K)) < 0.6)
        m = fit_iterative(Y, p, R, int(g.integers(0, K)))
    else:
        m = fit_two_step(Y, p)
    data = json.loads(json.dumps(model_to_dict(m, None)))
    back, series = model_from_dict(data)
    _assert_models_identical(m, back)
    assert series is None


def test_save_load(tmp_path, rng):
    m = fit_two_step(rng.standard_normal((40, 3)), 1)
    save_model(tmp_path / "m.json", m, ["x", "y", "z"])
    back, series = load_model(tmp_path / "m.json")
    _assert_models_identical(m, back)
    assert series == ["x", "y", "z"]
    assert json.loads((tmp_path / "m.json").read_text())["format_version"] == 1
    assert back.fit_meta["procedure"] == "two_step"


def test_load_rejects(tmp_path, rng):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(InvalidInput):
        load_model(tmp_path / "x.json")
    data = model_to_dict(fit_two_step(rng.standard_normal((30, 2)), 1))
    data["format_version"] = 99
    with pytest.raises(InvalidInput):
        model_from_dict(data)
    data["format_version"] = 1
    del data["A"]
    with pytest.raises(InvalidInput):
        model_from_dict(data)
