import json

import numpy as np
import pytest

from qhinf import demo, serialize
from qhinf.cli import main


@pytest.fixture(scope="module")
def docs(tmp_path_factory):
    root = tmp_path_factory.mktemp("docs")
    plant = demo.reference_plant()
    ctrl = demo.reference_controller()
    plant_path = root / "plant.json"
    ctrl_path = root / "controller.json"
    system_path = root / "system.json"
    serialize.write_doc(plant_path, serialize.system_to_doc(plant=plant))
    serialize.write_doc(ctrl_path, serialize.system_to_doc(controller=ctrl, rates=plant.rates))
    serialize.write_doc(system_path, serialize.system_to_doc(plant=plant, controller=ctrl))
    return {"root": root, "plant": plant_path, "ctrl": ctrl_path, "system": system_path}


def test_synth_fixed_level(docs, capsys):
    out = docs["root"] / "synth" / "ctrl.json"
    rc = main([
        "synth", "--plant", str(docs["plant"]), "--g", "0.5",
        "--augment", "--out", str(out),
    ])
    assert rc == 0
    doc = serialize.read_doc(out)
    _, ctrl, _ = serialize.parse_system_doc(doc)
    assert ctrl.n_nu >= 2
    cert = serialize.read_doc(out.with_suffix(".cert.json"))
    assert cert["g"] == 0.5
    assert cert["lmi_status"] == "feasible"
    manifest = serialize.read_doc(str(out) + ".manifest.json")
    assert str(docs["plant"]) in manifest["inputs"]
    assert manifest["tool_version"]


def test_check_pr_pass_and_fail(docs, capsys):
    rc = main(["check-pr", "--controller", str(docs["ctrl"]), "--tol", "5e-3"])
    assert rc == 0
    assert "realizable" in capsys.readouterr().out
    rc = main(["check-pr", "--controller", str(docs["ctrl"]), "--tol", "1e-9"])
    assert rc == 1  # tabulated values are only four-decimal accurate


def test_check_pr_doc_format(docs, capsys):
    rc = main(["check-pr", "--controller", str(docs["ctrl"]), "--tol", "5e-3",
               "--format", "doc"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["realizable"] is True
    assert len(doc["cr_residuals"]) == 3


def test_augment_command(docs, capsys):
    out = docs["root"] / "aug.json"
    rc = main(["augment", "--controller", str(docs["ctrl"]), "--out", str(out)])
    assert rc == 0
    _, ctrl, _ = serialize.parse_system_doc(serialize.read_doc(out))
    assert ctrl.n_nu == 4
    rc = main(["check-pr", "--controller", str(out), "--tol", "1e-9"])
    assert rc == 0


def test_analyze_command(docs, capsys):
    rc = main(["analyze", "--plant", str(docs["plant"]),
               "--controller", str(docs["ctrl"]), "--g", "0.5", "--format", "doc"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] is True
    assert all(doc["hurwitz"])


def test_simulate_command(docs, capsys):
    out = docs["root"] / "sim.json"
    plot = docs["root"] / "sim.txt"
    rc = main([
        "simulate", "--system", str(docs["system"]), "--paths", "2",
        "--t-end", "10", "--dt", "0.02", "--seed", "3",
        "--disturbance", "sin:0.5", "--format", "doc",
        "--out", str(out), "--plot-data", str(plot),
    ])
    assert rc == 0
    doc = serialize.read_doc(out)
    assert len(doc["paths"]) == 2
    assert doc["paths"][0]["input_energy"] > 0
    header = plot.read_text().splitlines()[0]
    assert header.startswith("# time")
    data = np.loadtxt(plot)
    assert data.shape[1] == 1 + 4 + 4 + 2  # time, means, diagonals, energies


def test_simulate_deterministic_rerun(docs):
    out1 = docs["root"] / "sim_a.json"
    out2 = docs["root"] / "sim_b.json"
    for out in (out1, out2):
        rc = main(["simulate", "--system", str(docs["system"]), "--paths", "1",
                   "--t-end", "5", "--dt", "0.02", "--seed", "9",
                   "--format", "doc", "--out", str(out)])
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_optics_realize_command(docs, capsys):
    rc = main(["optics", "realize", "--controller", str(docs["ctrl"]), "--format", "doc"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["modes"][0]["kappa"] == pytest.approx(3.8761, abs=1e-6)


def test_input_error_exit_code(tmp_path, capsys):
    rc = main(["check-pr", "--controller", str(tmp_path / "missing.json")])
    assert rc == 3
    bad = tmp_path / "bad.json"
    bad.write_text('{"controller": {"modes": [], "theta": {"n": 2, "kind": "canonical"}, "zz": 1}}')
    rc = main(["check-pr", "--controller", str(bad)])
    assert rc == 3


def test_infeasible_exit_code(docs, capsys):
    rc = main(["synth", "--plant", str(docs["plant"]), "--g", "1e-6",
               "--out", str(docs["root"] / "never.json")])
    assert rc == 2
