"""
Tests for the codebook text table and its checkpoint payload
"""
import numpy as np
import pytest

from domain.model.errors import CorruptCheckpoint, VersionMismatch
from infrastructure.persistence.codebook.codebook_store import (
    codebook_from_payload,
    codebook_to_payload,
    load_codebook,
    save_codebook,
)


def test_reload_is_exact(tmp_path, codebook_factory):
    prior = np.array([0.4, 0.1, 0.2, 0.2, 0.1]) + 1e-17
    prior /= prior.sum()
    cb = codebook_factory(prior=prior)
    loaded = load_codebook(save_codebook(cb, tmp_path / "codebook.txt"))
    np.testing.assert_array_equal(loaded.bin_centres, cb.bin_centres)
    np.testing.assert_array_equal(loaded.weights, cb.weights)
    assert loaded.fingerprint() == cb.fingerprint()
    assert not (tmp_path / "codebook.txt.tmp").exists()


def test_header_names_version(tmp_path, toy_codebook):
    path = save_codebook(toy_codebook, tmp_path / "cb.txt")
    lines = path.read_text().splitlines()
    assert lines[0] == "# ucapsnet-codebook v1"
    assert lines[1].split()[0] == "5"
    assert len(lines) == 2 + 5


def test_other_version_is_refused(tmp_path, toy_codebook):
    path = save_codebook(toy_codebook, tmp_path / "cb.txt")
    path.write_text(path.read_text().replace("v1", "v2", 1))
    with pytest.raises(VersionMismatch):
        load_codebook(path)


@pytest.mark.parametrize("mangle", [
    lambda text: text.rsplit("\n", 2)[0] + "\n",
    lambda text: "hello\n" + text,
    lambda text: text.replace(" ", " x ", 3),
])
def test_malformed_tables(tmp_path, toy_codebook, mangle):
    path = save_codebook(toy_codebook, tmp_path / "cb.txt")
    path.write_text(mangle(path.read_text()))
    with pytest.raises(CorruptCheckpoint):
        load_codebook(path)


def test_payload_fingerprint_is_checked(toy_codebook):
    payload = codebook_to_payload(toy_codebook)
    assert codebook_from_payload(payload).fingerprint() == toy_codebook.fingerprint()
    payload['weights'] = payload['weights'] * 2
    with pytest.raises(CorruptCheckpoint):
        codebook_from_payload(payload)
