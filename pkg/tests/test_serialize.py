import json

import numpy as np
import pytest

from qhinf import demo, serialize
from qhinf.serialize import (
    DocumentError,
    controller_from_doc,
    decode_complex_matrix,
    dumps_doc,
    encode_complex_matrix,
    parse_system_doc,
    plant_from_doc,
    system_to_doc,
)


def test_plant_roundtrip():
    plant = demo.reference_plant()
    doc = system_to_doc(plant=plant)
    back, _, rates = parse_system_doc(json.loads(dumps_doc(doc)))
    assert np.array_equal(back.b1, plant.b1)
    for a, b in zip(back.a_modes, plant.a_modes):
        assert np.array_equal(a, b)
    assert np.array_equal(rates.pi, plant.rates.pi)
    assert back.theta.kind == "canonical"


def test_controller_roundtrip_including_empty_noise():
    for with_noise in (True, False):
        ctrl = demo.reference_controller(with_noise=with_noise)
        doc = system_to_doc(controller=ctrl, rates=demo.reference_plant().rates)
        _, back, _ = parse_system_doc(json.loads(dumps_doc(doc)))
        assert back.n_nu == ctrl.n_nu
        for m1, m2 in zip(back.modes, ctrl.modes):
            assert np.array_equal(m1.a, m2.a)
            assert np.array_equal(m1.e, m2.e)


def test_write_read_write_byte_identical(tmp_path):
    plant = demo.reference_plant()
    ctrl = demo.reference_controller()
    path = tmp_path / "system.json"
    serialize.write_doc(path, system_to_doc(plant=plant, controller=ctrl))
    first = path.read_bytes()
    doc = serialize.read_doc(path)
    serialize.write_doc(path, doc)
    assert path.read_bytes() == first


def test_unknown_keys_rejected():
    doc = system_to_doc(plant=demo.reference_plant())
    doc["extra"] = 1
    with pytest.raises(DocumentError, match="unknown keys"):
        parse_system_doc(doc)
    doc2 = system_to_doc(plant=demo.reference_plant())
    doc2["plant"]["B3"] = [[1.0]]
    with pytest.raises(DocumentError, match="unknown keys"):
        parse_system_doc(doc2)
    with pytest.raises(DocumentError, match="unknown keys"):
        controller_from_doc({"modes": [], "theta": {"n": 2, "kind": "canonical"}, "x": 0})


def test_plant_requires_rates():
    doc = system_to_doc(plant=demo.reference_plant())
    del doc["rates"]
    with pytest.raises(DocumentError, match="rates"):
        parse_system_doc(doc)


def test_missing_plant_key_rejected():
    doc = system_to_doc(plant=demo.reference_plant())
    del doc["plant"]["B1"]
    with pytest.raises(DocumentError, match="missing"):
        plant_from_doc(doc["plant"], demo.reference_plant().rates)


def test_complex_matrix_encoding():
    m = np.array([[1.0 + 2.0j, -0.5j], [0.0, 3.0]])
    enc = encode_complex_matrix(m)
    assert set(enc) == {"re", "im"}
    back = decode_complex_matrix(enc, "m")
    assert np.array_equal(back, m)
    with pytest.raises(DocumentError, match="'re' and 'im'"):
        decode_complex_matrix({"re": [[1.0]]}, "m")


def test_malformed_matrix_rejected():
    with pytest.raises(DocumentError, match="numeric"):
        serialize.decode_matrix([["a"]], "bad")
    with pytest.raises(DocumentError, match="nested"):
        serialize.decode_matrix([1.0, 2.0], "flat")


def test_manifest_contents(tmp_path):
    src = tmp_path / "in.json"
    out = tmp_path / "out.json"
    serialize.write_doc(src, {"rates": [[0.0]]})
    serialize.write_doc(out, {"result": 1})
    manifest_path = serialize.write_manifest(
        out, command=["check"], inputs=[src], params={"tol": 1e-9}, outputs=[out], seed=7
    )
    manifest = json.loads(manifest_path.read_text())
    assert manifest["seed"] == 7
    assert str(src) in manifest["inputs"]
    assert str(out) in manifest["outputs"]
    assert manifest["inputs"][str(src)] == serialize.file_digest(src)
