import json

import jsonschema
import numpy as np
import pytest

from prestrain import cli


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out-dir", str(out)])
    return code, out


def _report(out, sub):
    rep = json.loads((out / f"{sub}.json").read_text())
    jsonschema.validate(rep, cli.report_schema(sub))
    return rep


def test_classify_ex63iii(tmp_path, capsys):
    code, out = _run(tmp_path, "classify", "--catalog", "ex63iii", "--grid", "9")
    assert code == cli.EXIT_OK
    rep = _report(out, "classify")
    assert rep["results"]["verdict"] == "ZERO_BENDING_NONIMMERSIBLE"
    assert json.loads(capsys.readouterr().out)["verdict"] == "ZERO_BENDING_NONIMMERSIBLE"
    lines = (out / "classify_nodes.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,R3_112,R3_221,R_1212,S,kappa" and len(lines) == 82


def test_q2_output(tmp_path):
    code, out = _run(tmp_path, "q2", "--catalog", "euclidean", "--F", "1", "0", "1")
    assert code == cli.EXIT_OK
    res = _report(out, "q2")["results"]
    assert np.isclose(res["general"], 4.0)
    assert np.isclose(res["oracle"], 4.0)
    assert all(np.isclose(v, 4.0) for v in res["closed"].values())


def test_scale_koko_slope(tmp_path):
    code, out = _run(tmp_path, "scale", "--catalog", "ex61", "--ansatz", "koko")
    assert code == cli.EXIT_OK
    assert abs(_report(out, "scale")["results"]["slope"] - 4.0) < 0.05


def test_bend_and_nematic(tmp_path):
    code, out = _run(tmp_path, "bend", "--catalog", "ex61", "--grid", "9", "--no-minimize")
    assert code == cli.EXIT_OK
    assert _report(out, "bend")["results"]["energy"] < 1e-20
    code, out = _run(tmp_path, "nematic", "--pattern", "spiral", "--psi", "0.7", "--grid", "9", name="nem")
    assert code == cli.EXIT_OK
    assert _report(out, "nematic")["results"]["verdict"] == "IMMERSIBLE"


def test_config_file_and_hash(tmp_path):
    cfg = {"subcommand": "classify", "metric": {"catalog": "ex61", "params": {}}, "grid": {"n": 9}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    _, out1 = _run(tmp_path, "classify", "--config", str(path), name="a")
    _, out2 = _run(tmp_path, "classify", "--config", str(path), "--threads", "2", name="b")
    h1, h2 = (_report(o, "classify")["inputs_hash"] for o in (out1, out2))
    assert h1 == h2


@pytest.mark.parametrize("argv", [
    ["classify", "--catalog", "nope"],
    ["classify"],
    ["q2", "--catalog", "euclidean", "--point", "5", "5"],
    ["nematic", "--pattern", "radial", "--r", "1"],
], ids=["unknown-catalog", "no-metric", "outside-point", "r-equals-1"])
def test_invalid_inputs(tmp_path, argv):
    code, out = _run(tmp_path, *argv)
    assert code == cli.EXIT_INVALID
    assert not out.exists()


def test_unknown_config_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"catalog": "ex61"}, "bogus": 1}))
    code, out = _run(tmp_path, "classify", "--config", str(path))
    assert code == cli.EXIT_INVALID and not out.exists()


def test_non_spd_samples(tmp_path):
    g = {"x1_range": [0, 1], "x2_range": [0, 1], "nx": 5, "ny": 5}
    bad = np.tile(np.diag([1.0, -1.0, 1.0]), (25, 1, 1)).tolist()
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"samples": bad, "grid": g}}))
    code, out = _run(tmp_path, "classify", "--config", str(path))
    assert code == cli.EXIT_INVALID and not out.exists()


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def boom(cfg):
        raise np.linalg.LinAlgError("singular")
    monkeypatch.setitem(cli.RUNNERS, "classify", boom)
    code, out = _run(tmp_path, "classify", "--catalog", "ex61")
    assert code == cli.EXIT_NUMERIC and not out.exists()


def test_csv_deterministic(tmp_path):
    argv = ["bend", "--catalog", "ex63iii", "--grid", "9", "--noise", "0.01", "--seed", "3",
            "--max-iter", "40"]
    _, a = _run(tmp_path, *argv, name="a")
    _, b = _run(tmp_path, *argv, "--threads", "3", name="b")
    assert (a / "bend_immersion.csv").read_bytes() == (b / "bend_immersion.csv").read_bytes()
    _, a = _run(tmp_path, "classify", "--catalog", "ex64", "--grid", "9", name="c")
    _, b = _run(tmp_path, "classify", "--catalog", "ex64", "--grid", "9", "--threads", "4", name="d")
    assert (a / "classify_nodes.csv").read_bytes() == (b / "classify_nodes.csv").read_bytes()


def test_config_schema_rejects_bad_types():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"grid": {"n": 2}}, cli.config_schema("classify"))
    jsonschema.validate({"metric": {"catalog": "ex61"}, "hs": [0.1, 0.05, 0.02, 0.01]},
                        cli.config_schema("scale"))
