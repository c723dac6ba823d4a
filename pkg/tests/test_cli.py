import csv
import json

import numpy as np
import pytest

from sispatch.cli import EXIT_INVALID, EXIT_OK, EXIT_PARSE, EXIT_REGIME, main
from sispatch.scenario_io import dump_config, load_scenario, parse_scenario

from conftest import SCENARIOS


def write(tmp_path, doc, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def base_doc(**changes):
    doc = {
        "name": "two-patch",
        "n": 2,
        "L": [-1, 1, 1, -1],
        "beta": [2, 1],
        "gamma": [1, 2],
        "dS": 1,
        "dI": 0,
        "mechanism": "standard_incidence",
        "S0": [4.5, 4.5],
        "I0": [1, 0],
        "N": 10,
        "integration": {"tEnd": 60},
    }
    doc.update(changes)
    return doc


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


class TestValidate:
    def test_well_formed(self, tmp_path, capsys):
        code, out = run(capsys, "validate", write(tmp_path, base_doc()))
        assert code == EXIT_OK
        np.testing.assert_allclose(json.loads(out.out)["alpha"], [0.5, 0.5])

    def test_mass_mismatch(self, tmp_path, capsys):
        code, out = run(capsys, "validate", write(tmp_path, base_doc(N=11)))
        assert code == EXIT_INVALID
        res = json.loads(out.out)
        assert res["assumption"] == "A2" and res["error"] == "ValidationError"

    def test_reducible(self, tmp_path, capsys):
        doc = base_doc(n=3, L=[-1, 0, 0, 1, 0, 0, 0, 0, 0], beta=[1, 1, 1], gamma=[1, 1, 1],
                       S0=[1, 1, 1], I0=[1, 1, 1], N=6)
        code, out = run(capsys, "validate", write(tmp_path, doc))
        assert code == EXIT_INVALID
        assert json.loads(out.out)["assumption"] == "A1"

    @pytest.mark.parametrize("doc", [base_doc(extra=1), base_doc(mechanism="frequency"), {"n": 2}])
    def test_parse_errors(self, tmp_path, capsys, doc):
        code, _ = run(capsys, "validate", write(tmp_path, doc))
        assert code == EXIT_PARSE

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(capsys, "validate", path)[0] == EXIT_PARSE


class TestDumpConfig:
    def test_round_trip_bit_exact(self, tmp_path, capsys):
        doc = base_doc(beta=[0.1 + 0.2, 1 / 3], gamma=[np.pi, np.e])
        code, out = run(capsys, "validate", write(tmp_path, doc), "--dump-config")
        assert code == EXIT_OK
        again = parse_scenario(json.loads(out.out))
        first = load_scenario(tmp_path / "sc.json")
        assert dump_config(again) == out.out
        for attr in ("beta", "gamma", "S0", "I0"):
            assert np.array_equal(getattr(again.scenario, attr), getattr(first.scenario, attr))
        assert again.settings == first.settings


class TestSimulate:
    def test_csv_layout(self, tmp_path, capsys):
        code, out = run(capsys, "simulate", write(tmp_path, base_doc()), "--out", tmp_path)
        assert code == EXIT_OK
        rows = list(csv.reader(open(tmp_path / "two-patch.csv")))
        header, body = rows[0], rows[1:]
        assert len(header) == 2 * 2 + 4
        assert header[-3:] == ["V", "Vdot", "conservation_error"]
        t = np.array([float(r[0]) for r in body])
        assert np.all(np.diff(t) > 0)
        cons = np.array([float(r[-1]) for r in body])
        assert cons.max() <= 1e-9 * 10
        final = np.array([float(x) for x in body[-1][1:5]])
        np.testing.assert_allclose(final, [10 / 3, 10 / 3, 10 / 3, 0], atol=1e-3)

    def test_no_lyapunov_regime(self, tmp_path, capsys):
        doc = base_doc(dS=0, dI=0, integration={"tEnd": 5})
        code, _ = run(capsys, "simulate", write(tmp_path, doc), "--out", tmp_path)
        assert code == EXIT_OK
        body = list(csv.reader(open(tmp_path / "two-patch.csv")))[1:]
        assert all(r[5] == "" and r[6] == "" for r in body)

    def test_t_end_override(self, tmp_path, capsys):
        code, out = run(capsys, "simulate", write(tmp_path, base_doc()), "--out", tmp_path, "--t-end", "2")
        assert json.loads(out.out)["tEnd"] == 2.0


class TestVerify:
    def test_pass(self, tmp_path, capsys):
        code, out = run(capsys, "verify", write(tmp_path, base_doc()), "--out", tmp_path)
        report = json.loads(out.out)
        assert code == EXIT_OK and report["pass"]
        assert report["branch"] == "T41"
        assert report["lyapunov"]["maxVdot"] <= 0
        assert (tmp_path / "two-patch.report.json").exists()

    def test_both_dispersal(self, tmp_path, capsys):
        code, out = run(capsys, "verify", write(tmp_path, base_doc(dI=1)), "--out", tmp_path)
        assert code == EXIT_REGIME
        assert "supported regimes" in json.loads(out.out)["message"]

    def test_band_scenario_reports_realized_branch(self, tmp_path, capsys):
        code, out = run(capsys, "verify", SCENARIOS / "band_mass_action_dS0_undetermined.json", "--out", tmp_path)
        report = json.loads(out.out)
        assert code == EXIT_OK
        assert report["predicted"]["branch"] == "T32undetermined"
        assert report["realizedBranch"] in ("T32i", "T32ii")

    def test_directory(self, tmp_path, capsys):
        for k in range(2):
            write(tmp_path, base_doc(name=f"s{k}"), f"s{k}.json")
        code, out = run(capsys, "verify", tmp_path, "--out", tmp_path / "out")
        assert code == EXIT_OK
        assert sorted(p.name for p in (tmp_path / "out").glob("*.report.json")) == [
            "s0.report.json", "s1.report.json"]


class TestNStar:
    def test_threshold_susceptibles(self, tmp_path, capsys):
        doc = base_doc(mechanism="mass_action", beta=[1, 1], gamma=[2, 3], dS=0, dI=1,
                       S0=[2, 3], I0=[1, 1], N=7)
        code, out = run(capsys, "nstar", write(tmp_path, doc))
        res = json.loads(out.out)
        assert code == EXIT_OK and res["NStar"] == 5.0

    def test_wrong_regime(self, tmp_path, capsys):
        assert run(capsys, "nstar", write(tmp_path, base_doc()))[0] == EXIT_REGIME
