"""Runs inactq on synthetic data and validates its JSON output against the
shipped schemas, including a serialize/parse round trip."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema


def run(*args):
    return subprocess.run(args, check=True, capture_output=True, text=True).stdout


def main():
    inactq, generator, root = sys.argv[1], sys.argv[2], pathlib.Path(sys.argv[3])
    fit_schema = json.loads((root / "schemas/fit_report.schema.json").read_text())
    sim_schema = json.loads((root / "schemas/simulation_table.schema.json").read_text())

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        data = tmp / "b04_like.csv"
        data.write_text(run(generator, "600", "11"))

        report = json.loads(run(inactq, "fit", "--data", str(data), "--covariates", "node,age,size",
                                "--t0", "20", "--quantile", "0.25", "--quantile", "0.5", "--perturb", "60",
                                "--predict", "1,0.30,0.50", "--global-null", "2,0,0,0"))
        jsonschema.validate(report, fit_schema)
        assert json.loads(json.dumps(report)) == report
        for fit in report["fits"]:
            for row in fit["coefficients"]:
                assert row["ci_lower"] <= row["estimate"] <= row["ci_upper"], row

        out = tmp / "sim"
        run(inactq, "simulate", "--config", str(root / "configs/smoke.cfg"), "--out", str(out), "--format", "json")
        table = json.loads((out / "simulation.json").read_text())
        jsonschema.validate(table, sim_schema)
        assert len(table["cells"]) == 2
    print("schemas ok")


if __name__ == "__main__":
    main()
