import csv
import json

import pytest
import yaml

from llrcomp.autonet import init_params, save_params
from llrcomp.channel import make_rng
from llrcomp.cli import DEFAULTS, main
from llrcomp.pipeline import BLER_COLUMNS

SMALL_TRAIN = {"train": {"snr_db": [9.0], "codewords_per_snr": 2, "epochs": 50, "batch_size": 256}}


def write_cfg(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def run(tmp_path, name, *args, cfg=None):
    out = tmp_path / name
    argv = [*args, "--out-dir", str(out)]
    if cfg is not None:
        argv += ["--config", write_cfg(tmp_path / f"{name}.yaml", cfg)]
    return main(argv), out


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "m.llrcae"
    p.write_bytes(save_params(init_params(4, make_rng(0))))
    return str(p)


def test_train_writes_loss_and_reruns_identically(tmp_path):
    code, out = run(tmp_path, "a", "train", cfg=SMALL_TRAIN)
    assert code == 0
    rows = (out / "loss.csv").read_text().splitlines()
    assert rows[0] == "epoch,loss" and len(rows) == 51
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    again = tmp_path / "b"
    assert main(["train", "--config", str(out / "manifest.json"), "--out-dir", str(again)]) == 0
    assert (again / "model.llrcae").read_bytes() == (out / "model.llrcae").read_bytes()
    assert json.loads((again / "manifest.json").read_text())["outputs"] == manifest["outputs"]


def test_seed_override_is_recorded(tmp_path):
    code, out = run(tmp_path, "s", "train", "--seed", "7", cfg=SMALL_TRAIN)
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["seed"] == 7 and m["overrides"] == {"seed": 7}


@pytest.mark.parametrize(
    "cfg, needle",
    [({"eval": {"runz": []}}, "eval.runz"), ({"eval": {"runs": [{"method": "deep", "x": 1}]}}, "eval.runs[0].x"),
     ({"seed": "one"}, "seed"), ({"train": {"epochs": 1.5}}, "train.epochs")],
)
def test_bad_config_is_a_usage_error(tmp_path, capsys, cfg, needle):
    code, _ = run(tmp_path, "bad", "eval-single", cfg=cfg)
    assert code == 1
    assert needle in capsys.readouterr().err


def test_unknown_subcommand_and_version(capsys):
    assert main(["nope"]) == 1
    assert main(["--version"]) == 0
    assert DEFAULTS["eval"]["codewords_per_point"] == 1000


def test_eval_merged_rows(tmp_path):
    cfg = {"eval": {"snr_db": [6.0, 8.0, 10.0], "codewords_per_point": 20,
                    "runs": [{"method": "full_precision"}, {"method": "scalar_llr", "n_bits": 3}]}}
    code, out = run(tmp_path, "ev", "eval-single", cfg=cfg)
    assert code == 0
    with open(out / "bler_merged.csv", newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
    assert tuple(reader.fieldnames) == BLER_COLUMNS
    assert len(rows) == 6
    assert {r["method"] for r in rows} == {"full_precision", "scalar_llr"}
    assert (out / "bler_scalar_llr_3b.csv").exists() and (out / "bler_full_precision_full.csv").exists()


def test_eval_harq(tmp_path):
    cfg = {"eval": {"snr_db": [20.0], "codewords_per_point": 10, "runs": [{"method": "full_precision"}]}}
    code, out = run(tmp_path, "h", "eval-harq", cfg=cfg)
    assert code == 0
    assert (out / "harq_merged.csv").read_text().splitlines()[1].startswith("20.0,10,0,0.0")


def test_missing_code_asset(tmp_path):
    assert run(tmp_path, "x", "eval-single", cfg={"code": str(tmp_path / "nope.alist")})[0] == 2


def test_model_dimension_mismatch(tmp_path, model_file):
    cfg = {"k_bits": 2, "model": model_file, "eval": {"runs": [{"method": "deep", "n_bits": 2}]}}
    assert run(tmp_path, "x", "eval-single", cfg=cfg)[0] == 2


def test_fit_quantizer_bpsk_sign_threshold(tmp_path):
    cfg = {"k_bits": 1, "fit": {"n_levels": 2, "samples": 100000}}
    code, out = run(tmp_path, "f", "fit-quantizer", cfg=cfg)
    assert code == 0
    book = json.loads((out / "codebook.json").read_text())
    assert abs(book["per_bit"][0]["thresholds"][0]) < 0.05
    _, out2 = run(tmp_path, "f2", "fit-quantizer", cfg=cfg)
    assert (out2 / "codebook.json").read_text() == (out / "codebook.json").read_text()


def test_fit_lloyd(tmp_path):
    code, out = run(tmp_path, "l", "fit-quantizer", cfg={"fit": {"kind": "lloyd", "samples": 20000}})
    assert code == 0
    assert len(json.loads((out / "codebook.json").read_text())["levels"]) == 4


def test_export_lut(tmp_path, model_file):
    code, out = run(tmp_path, "lut", "export-lut", cfg={"model": model_file, "lut": {"n_bits": 2}})
    assert code == 0
    assert len((out / "lut.csv").read_text().splitlines()) == 217


def test_export_lut_refuses_9_bits(tmp_path, model_file, capsys):
    code, _ = run(tmp_path, "lut", "export-lut", cfg={"model": model_file, "lut": {"n_bits": 9}})
    assert code == 1
    assert "MiB" in capsys.readouterr().err


def test_hist(tmp_path, model_file):
    cfg = {"model": model_file, "hist": {"codewords_per_snr": 3, "bins": 10}}
    code, out = run(tmp_path, "hist", "hist", cfg=cfg)
    assert code == 0
    rows = list(csv.DictReader(open(out / "hist_marginal.csv", newline="")))
    total = sum(int(r["count_z1"]) for r in rows)
    joint = sum(int(r["count"]) for r in csv.DictReader(open(out / "hist_joint.csv", newline="")))
    assert total == joint == 3 * 648 // 4
