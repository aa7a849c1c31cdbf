import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from helpers import sweep_documents
from sddtime.cli import main
from sddtime.errors import InvalidParams
from sddtime.scenario import ScenarioError, scenario_from_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

S1 = dict(
    name="S1", mu=0.4, eta_bar=1.0, eta0=1.0,
    f={"kind": "scalar_negative_feedback", "a": 0.0, "b": 1.0},
    G={"kind": "scaled_tanh", "kappa": 0.2},
    history={"kind": "constant", "value": 1.0},
    T=2.0, S=4.0, dt=0.01,
)


def write(tmp_path, doc, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


class TestScenario:
    def test_s1_fields(self):
        sc = scenario_from_dict(S1)
        assert sc.params.g_sup == 0.2 and sc.params.lip_G == 0.2 and sc.params.lip_f == 1.0
        assert sc.ds == sc.dt == 0.01
        assert sc.initial.g.eval(-1.3)[0] == 1.0

    @pytest.mark.parametrize("patch", [
        {"mu_typo": 0.4},
        {"f": {"kind": "scalar_negative_feedback", "a": 0.0, "bb": 1.0}},
        {"G": {"kind": "cubic"}},
        {"history": {"value": 1.0}},
        {"checks": ["equivalence", "everything"]},
        {"dt": 0.003},
    ])
    def test_rejections(self, patch):
        with pytest.raises(ScenarioError):
            scenario_from_dict({**S1, **patch})

    def test_missing_key(self):
        doc = dict(S1)
        del doc["eta0"]
        with pytest.raises(ScenarioError):
            scenario_from_dict(doc)

    def test_feedback_too_large(self):
        with pytest.raises(InvalidParams):
            scenario_from_dict({**S1, "G": {"kind": "scaled_tanh", "kappa": 0.5}})

    def test_linear_and_vector(self):
        doc = {**S1, "f": {"kind": "linear", "A": [[0, 1], [-1, 0]], "B": [[-0.5, 0], [0, 0]]},
               "G": {"kind": "scaled_sin", "kappa": 0.1, "w": [1.0, 0.0]},
               "history": {"kind": "constant", "value": [1.0, 0.0]}}
        sc = scenario_from_dict(doc)
        assert sc.params.dim == 2
        assert sc.params.lip_f == pytest.approx(1.0)
        assert sc.params.lip_G == pytest.approx(0.1)
        np.testing.assert_allclose(sc.params.f(0, np.array([1.0, 2.0]), np.array([1.0, 0.0])), [1.5, -1.0])

    def test_history_profiles(self):
        cos = scenario_from_dict({**S1, "history": {"kind": "cosine", "value": 0.5, "amplitude": 2.0,
                                                     "frequency": 3.0}})
        assert cos.initial.g.eval(-1.0)[0] == pytest.approx(0.5 + 2.0 * np.cos(-3.0), abs=1e-9)
        ex = scenario_from_dict({**S1, "history": {"kind": "exponential", "value": 2.0, "rate": -1.0}})
        assert ex.initial.g.eval(-0.5)[0] == pytest.approx(2.0 * np.exp(0.5), abs=1e-9)
        t = np.linspace(-2, 0, 5)
        table = {"kind": "table", "t": t.tolist(), "y": (t ** 2).tolist(), "dy": (2 * t).tolist()}
        tb = scenario_from_dict({**S1, "history": table})
        assert tb.initial.g.eval(-0.7)[0] == pytest.approx(0.49)

    def test_digest_stable(self):
        assert scenario_from_dict(S1).digest == scenario_from_dict(dict(S1)).digest
        assert scenario_from_dict(S1).digest != scenario_from_dict({**S1, "T": 3.0}).digest

    def test_step_overrides(self):
        sc = scenario_from_dict(S1, dt=0.02, ds=0.05)
        assert (sc.dt, sc.ds) == (0.02, 0.05)

    def test_sweep_documents_parse(self):
        assert len([scenario_from_dict(d) for d in sweep_documents()]) == 20


class TestCommands:
    def test_solve_csv(self, tmp_path):
        out = tmp_path / "out"
        assert main(["solve", str(write(tmp_path, S1)), "--out", str(out)]) == 0
        lines = (out / "solve.csv").read_text().splitlines()
        assert lines[0] == "t,y_1,eta,dy_1,deta"
        assert len(lines) == 202
        first = lines[1].split(",")
        assert first[:3] == ["0", "1", "1"]
        report = json.loads((out / "report.json").read_text())
        assert report["exit_code"] == 0 and len(report["scenario_hash"]) == 64
        assert report["steps"] == {"dt": 0.01, "ds": 0.01}

    def test_transform_csv(self, tmp_path):
        out = tmp_path / "out"
        assert main(["transform", str(write(tmp_path, S1)), "--out", str(out), "--ds", "0.02"]) == 0
        lines = (out / "transform.csv").read_text().splitlines()
        assert lines[0] == "s,z_1,chi,alpha,dz_1,dchi,dalpha"
        assert len(lines) == 202

    def test_csv_byte_identical(self, tmp_path):
        cfg = write(tmp_path, S1)
        main(["transform", str(cfg), "--out", str(tmp_path / "a")])
        main(["transform", str(cfg), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "transform.csv").read_bytes() == (tmp_path / "b" / "transform.csv").read_bytes()

    def test_seventeen_digits(self, tmp_path):
        main(["solve", str(write(tmp_path, S1)), "--out", str(tmp_path)])
        row = (tmp_path / "solve.csv").read_text().splitlines()[50].split(",")
        assert float(row[1]) == float("%.17g" % float(row[1]))
        assert any(len(v.replace("-", "").replace(".", "").lstrip("0")) >= 15 for v in row)

    def test_constant_delay_verify(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["verify", str(SCENARIOS / "constant_delay.yaml"), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        sups = [c["value"] for c in report["verification"]["checks"] if c["anchor"] == "correspondence"]
        assert len(sups) == 3 and max(sups) <= 1e-12
        assert (out / "margins.csv").read_text().startswith("check,anchor,value,relation,threshold,margin,status")

    def test_uncertified_transform_exit_2(self, tmp_path, capsys):
        code = main(["transform", str(SCENARIOS / "uncertified.yaml"), "--out", str(tmp_path)])
        assert code == 2
        assert "2*mu*eta_bar < 1" in capsys.readouterr().err
        assert json.loads((tmp_path / "report.json").read_text())["exit_code"] == 2

    def test_corrupted_alpha_exit_3(self, tmp_path):
        assert main(["verify", str(SCENARIOS / "s1_corrupted.yaml"), "--out", str(tmp_path)]) == 3

    def test_bad_file_exit_1(self, tmp_path):
        assert main(["solve", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 1
        bad = tmp_path / "bad.yaml"
        bad.write_text("mu: [1, 2\n")
        assert main(["solve", str(bad), "--out", str(tmp_path)]) == 1
        assert main(["solve", str(write(tmp_path, {**S1, "extra": 1}, "x.yaml")), "--out", str(tmp_path)]) == 1

    def test_experiment(self, tmp_path):
        doc = {**S1, "deltas": [1e-2, 1e-3], "S": 2.0}
        assert main(["experiment", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "experiment.csv").read_text().splitlines()
        assert lines[0] == "experiment,delta,distance,bound,min_alpha_dot"
        assert len(lines) == 5

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "sddtime", "solve", str(write(tmp_path, S1)),
                              "--out", str(tmp_path)], capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "solve.csv").exists()
