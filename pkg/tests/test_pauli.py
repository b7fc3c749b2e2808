from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import I2, X, Y, Z, site_op
from schwinger_cvqe.pauli import PauliString, PauliSum

MATS = {"I": I2, "X": X, "Y": Y, "Z": Z}
labels = st.text(alphabet="IXYZ", min_size=3, max_size=3)


def dense(label: str) -> np.ndarray:
    return site_op(len(label), {q: MATS[c] for q, c in enumerate(label)})


@given(labels)
def test_from_label_matches_kron(label):
    assert np.allclose(PauliSum.from_label(label).to_matrix(), dense(label))


@given(labels, labels)
def test_product_matches_dense(a, b):
    prod = PauliSum.from_label(a) @ PauliSum.from_label(b)
    assert np.allclose(prod.to_matrix(), dense(a) @ dense(b))


def test_xy_is_iz():
    prod = PauliSum.from_label("X") @ PauliSum.from_label("Y")
    assert np.allclose(prod.to_matrix(), 1j * Z)


@settings(max_examples=25)
@given(st.lists(st.tuples(labels, st.floats(-2, 2)), min_size=1, max_size=5))
def test_sum_sparse_apply_consistent(terms):
    op = PauliSum(3)
    ref = np.zeros((8, 8), dtype=complex)
    for lab, c in terms:
        op = op + PauliSum.from_label(lab, c)
        ref += c * dense(lab)
    assert np.allclose(op.to_sparse().toarray(), ref)
    psi = np.random.default_rng(0).normal(size=8) + 0j
    assert np.allclose(op.apply(psi), ref @ psi)
    assert op.is_hermitian


def test_tensor_places_other_above():
    op = PauliSum.from_label("X").tensor(PauliSum.from_label("Z"))
    assert np.allclose(op.to_matrix(), dense("XZ"))


def test_sector_restriction():
    op = PauliSum.from_label("XX") + PauliSum.from_label("YY")
    basis = np.array([1, 2])
    assert np.allclose(op.to_sparse(basis).toarray(), dense("XX")[np.ix_(basis, basis)] + dense("YY")[np.ix_(basis, basis)])


def test_text_round_trip(tmp_path):
    op = PauliSum.from_label("XZI", 0.5) + PauliSum.from_label("IYY", -1.25) + PauliSum.identity(3, 2.0)
    path = tmp_path / "op.txt"
    op.save(path)
    assert PauliSum.load(path) == op


@pytest.mark.parametrize("bad", [{0: "Q"}, {-1: "X"}])
def test_invalid_string(bad):
    with pytest.raises(ValueError):
        PauliString(1.0, bad)


def test_mismatched_sizes():
    with pytest.raises(ValueError):
        PauliSum.from_label("XX") + PauliSum.from_label("X")
