import xml.etree.ElementTree as ET

import pytest

from impulsive_iss.cli import run
from impulsive_iss.errors import DomainError, ImpulsiveError
from impulsive_iss.svg import emit_svg, nice_ticks

SVG = "{http://www.w3.org/2000/svg}"


def kv(text):
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition(": ")
        if sep:
            out[key] = value
    return out


def test_smallgain_printed_matrix(models_dir, capsys):
    assert run(["smallgain", "--gains", f"{models_dir}/ncs.mat"]) == 0
    res = kv(capsys.readouterr().out)
    assert res["rho"] == "0.98721"
    assert res["worst_cycle"] == "1->2->3->1"


def test_smallgain_negative(tmp_path, capsys):
    path = tmp_path / "g.mat"
    path.write_text("2\n0 2\n0.6 0\n")
    assert run(["smallgain", "--gains", str(path)]) == 1
    assert run(["smallgain", "--gains", str(path), "--alpha", "2"]) == 0


def test_dwell_periodic(capsys):
    code = run(["dwell", "--impulses", "periodic:0.1", "--c", "0.1", "--d", "0", "--lambda",
                "0.05", "--mu", "0.01", "--horizon", "10"])
    assert code == 0
    assert kv(capsys.readouterr().out)["sup"] == "0.0"


def test_dwell_negative():
    assert run(["dwell", "--impulses", "periodic:0.5", "--c", "0.534", "--d", "-2", "--lambda",
                "0.334", "--mu", "2.1", "--horizon", "100"]) == 1


def test_unknown_flag(capsys):
    assert run(["smallgain", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["smallgain", "--gains", "/no/such/file"],
                                  ["simulate", "--model", "x.imp"]])
def test_usage_errors(argv):
    assert run(argv) == 2


def test_runtime_error_on_bad_model(tmp_path, capsys):
    path = tmp_path / "bad.imp"
    path.write_text("model broken { sub s[1] { flow x1' = -x1 +; } }")
    assert run(["simulate", "--model", str(path), "--impulses", "none"]) == 3
    assert capsys.readouterr().err.startswith("error:")


def test_simulate_outputs(models_dir, tmp_path, capsys):
    code = run(["simulate", "--model", f"{models_dir}/decay.imp", "--impulses", "periodic:0.1",
                "--init", "1", "--horizon", "1", "--out", str(tmp_path)])
    assert code == 0
    res = kv(capsys.readouterr().out)
    assert res["impulses"] == "10"
    assert float(res["final_state"]) == pytest.approx(0.5 ** 10 * 2.718281828 ** -1, abs=1e-8)
    assert (tmp_path / "traj.csv").exists()


def test_seed_reproducible(models_dir, tmp_path):
    outs = []
    for k, seed in enumerate((7, 7, 8)):
        d = tmp_path / f"r{k}"
        assert run(["simulate", "--model", f"{models_dir}/decay.imp", "--impulses", "poisson:5",
                    "--init", "1", "--horizon", "2", "--seed", str(seed), "--out", str(d),
                    "--quiet"]) == 0
        outs.append((d / "traj.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_certify_pair(models_dir, capsys):
    base = ["certify", "--model", f"{models_dir}/qpair.imp", "--cert", f"{models_dir}/qpair.cert",
            "--flavor", "delayfree", "--mu", "2.1", "--lambda", "0.334", "--horizon", "100"]
    assert run(base + ["--impulses", "periodic:10"]) == 0
    assert "ISS: true" in capsys.readouterr().out
    assert run(base + ["--impulses", "periodic:0.5"]) == 1


def test_certify_ncs(models_dir, capsys):
    code = run(["certify", "--model", f"{models_dir}/ncs.imp", "--cert", f"{models_dir}/ncs.cert",
                "--impulses", "periodic:0.1", "--flavor", "razumikhin", "--mu", "0.01",
                "--lambda", "0.05", "--horizon", "6"])
    assert code == 0
    res = kv(capsys.readouterr().out)
    assert res["gamma_t"].startswith("0.98")


def test_sweep_index(models_dir, tmp_path, capsys):
    code = run(["sweep", "--model", f"{models_dir}/qpair.imp", "--cert",
                f"{models_dir}/qpair.cert", "--impulses", "periodic:10", "periodic:0.5",
                "--flavor", "delayfree", "--mu", "2.1", "--lambda", "0.334", "--horizon", "100",
                "--out", str(tmp_path), "--workers", "2"])
    assert code == 1
    res = kv(capsys.readouterr().out)
    assert res["runs"] == "2" and res["negative"] == "1"
    rows = (tmp_path / "index.csv").read_text().splitlines()
    assert rows[1].startswith("0,periodic:10,true")
    assert rows[2].startswith("1,periodic:0.5,false")


def test_ncs_reproduce(tmp_path, capsys):
    code = run(["ncs", "reproduce", "--out", str(tmp_path), "--horizon", "1", "--quiet"])
    assert code == 0
    res = kv(capsys.readouterr().out)
    assert res["iss"] == "true" and res["envelope"] == "pass"
    ET.parse(tmp_path / "norm.svg")
    code = run(["ncs-reproduce", "--out", str(tmp_path / "b"), "--horizon", "1",
                "--coupling", "2,3=1.3"])
    assert code == 1


def test_ncs_bad_coupling():
    assert run(["ncs", "reproduce", "--coupling", "2=1"]) == 2


# ------------------------------------------------------------ svg


def test_svg_two_points(tmp_path):
    path = tmp_path / "a.svg"
    emit_svg([(0, 1), (1, 0)], path, title="two")
    root = ET.parse(path).getroot()
    assert root.get("width") == "800" and root.get("height") == "500"
    lines = root.findall(f"{SVG}polyline")
    assert len(lines) == 1
    assert len(lines[0].get("points").split()) == 2
    assert len(root.findall(f"{SVG}g[@class='xtick']")) >= 4
    assert len(root.findall(f"{SVG}g[@class='ytick']")) >= 4
    assert root.find(f"{SVG}text").text == "two"


def test_svg_empty(tmp_path):
    with pytest.raises(DomainError) as exc:
        emit_svg([], tmp_path / "e.svg")
    assert isinstance(exc.value, ImpulsiveError)  # mapped to exit 3 by the CLI


def test_svg_escapes_title(tmp_path):
    emit_svg([(0, 1), (1, 2)], tmp_path / "t.svg", title="a < b & c")
    ET.parse(tmp_path / "t.svg")


@pytest.mark.parametrize("lo,hi", [(0, 1), (0, 6), (-0.3, 1.12), (5, 5), (0, 1e-7)])
def test_nice_ticks(lo, hi):
    ticks = nice_ticks(lo, hi)
    assert len(ticks) >= 4
    assert ticks[0] <= lo and ticks[-1] >= hi - 1e-12
