"""
A2U Lab - CLI Tests
Exit codes, parameter tables, gradient checks and a train → eval → dump-kernels run
"""
import json

import numpy as np
import pytest
from structlog.testing import capture_logs

import src.tensor.ops as ops
from src.errors import ConfigValidationError
from src.observability import RunEventType, RunLogger
from src.cli import build_run_config, main
from src.cli.gradcheck_suites import KINK_MARGIN, NET_EPS, TOLERANCE, kink_margin, net_cases, run_cases
from src.recon import write_idx

TINY = {
    "train": {
        "epochs": 1,
        "batch_size": 10,
        "decay_epochs": [],
        "train_size": 20,
        "test_size": 10,
        "net": {"architecture": "C(4)-D2-C(4)-U2-C(1)"},
    }
}


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    train = write_idx(tmp_path / "train-images-idx3-ubyte", rng.integers(0, 256, size=(20, 28, 28), dtype=np.uint8))
    test = write_idx(tmp_path / "t10k-images-idx3-ubyte", rng.integers(0, 256, size=(10, 28, 28), dtype=np.uint8))
    config = tmp_path / "tiny.json"
    config.write_text(json.dumps(TINY))
    return {"train": train, "test": test, "config": config}


def _train_args(data, out):
    return [
        "train",
        "--config", str(data["config"]),
        "--train-images", str(data["train"]),
        "--test-images", str(data["test"]),
        "--out", str(out),
        "--seed", "7",
    ]


# ═══════════════════════════════════════════════════════════════════════════════
# PARAMS / GRADCHECK
# ═══════════════════════════════════════════════════════════════════════════════

def test_params_default_variant(capsys):
    assert main(["params"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "variant,formula,instantiated"
    assert "static-cw,3236,3236" in lines


def test_params_dynamic_channel_shared(capsys):
    assert main(["params", "--a2u-mode", "dynamic", "--a2u-channel", "cs"]) == 0
    assert "dynamic-cs,2432,2432" in capsys.readouterr().out.splitlines()


def test_params_sweep_lists_every_variant(capsys):
    assert main(["params", "--sweep", "--channels", "16"]) == 0
    rows = [line.split(",") for line in capsys.readouterr().out.splitlines()[1:]]
    assert len(rows) == 6
    assert all(formula == instantiated for _, formula, instantiated in rows)


@pytest.mark.parametrize("scope", ["ops", "a2u", "net"])
def test_gradcheck_scopes_pass(scope, capsys):
    assert main(["gradcheck", "--scope", scope]) == 0
    assert capsys.readouterr().out.strip()


def test_net_case_checks_at_the_default_step_away_from_kinks():
    with capture_logs() as logs:
        cases = net_cases()
        results = run_cases(cases)
    assert NET_EPS == 1e-4
    assert [case.eps for case in cases] == [NET_EPS]
    assert "gradcheck_net_near_kink" not in [entry["event"] for entry in logs]
    assert results[0].error <= TOLERANCE


def test_kink_margin_sees_relu_pool_and_residual():
    out, target = np.zeros((1, 1, 2, 2)), np.full((1, 1, 2, 2), 0.5)
    assert kink_margin([], out, target) == pytest.approx(0.5)
    assert kink_margin([("relu", np.array([0.3, -0.004]))], out, target) == pytest.approx(0.004)
    window = np.array([0.9, 0.895, 0.1, 0.0]).reshape(1, 1, 2, 2)
    assert kink_margin([("max_pool", window)], out, target) == pytest.approx(0.005)
    clamped = np.array([0.9, 0.0, 0.0, 0.0]).reshape(1, 1, 2, 2)
    assert kink_margin([("max_pool", clamped)], out, target) == pytest.approx(0.5)
    assert KINK_MARGIN > 10 * NET_EPS


def test_gradcheck_reports_numerical_failure(monkeypatch):
    monkeypatch.setattr(ops, "_softmax_backward", lambda s, grad, axis: 2.0 * s * grad)
    assert main(["gradcheck", "--scope", "ops"]) == 3


# ═══════════════════════════════════════════════════════════════════════════════
# EXIT CODES
# ═══════════════════════════════════════════════════════════════════════════════

def test_missing_dataset_is_an_io_error(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--dataset-dir", str(tmp_path / "nope"), "--out", str(out)]) == 4
    assert not out.exists()


def test_unknown_config_key_is_a_validation_error(tmp_path, dataset):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"train": {"bogus": 1}}))
    assert main(["train", "--config", str(config), "--train-images", str(dataset["train"])]) == 2


def test_invalid_and_missing_config_files(tmp_path, dataset):
    broken = tmp_path / "broken.json"
    broken.write_text("{epochs: 3")
    assert main(["train", "--config", str(broken), "--train-images", str(dataset["train"])]) == 2
    assert main(["train", "--config", str(tmp_path / "absent.json"), "--train-images", str(dataset["train"])]) == 4


def test_a2u_flags_need_the_a2u_upsampler(dataset):
    args = ["train", "--upsampler", "bilinear", "--a2u-mode", "static", "--train-images", str(dataset["train"])]
    assert main(args) == 2


def test_k_up_sets_the_a2u_kernel_side(tmp_path):
    explicit = build_run_config(None, {"upsampler": "a2u", "k_up": 3}).train.net.upsampler
    assert explicit.a2u_config.s_u == 3
    assert explicit.a2u_config.k_en == 4
    assert build_run_config(None, {"k_up": 3}).train.net.upsampler.a2u_config.s_u == 3
    assert build_run_config(None, {"upsampler": "carafe", "k_up": 5}).train.net.upsampler.k_up == 5

    config = tmp_path / "a2u_k_up.json"
    config.write_text(json.dumps({"train": {"net": {"upsampler": {"kind": "a2u", "k_up": 3}}}}))
    with pytest.raises(ConfigValidationError):
        build_run_config(config, {})


def test_argparse_rejects_unknown_choice():
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--scope", "everything"])
    assert exc.value.code == 2


# ═══════════════════════════════════════════════════════════════════════════════
# END TO END
# ═══════════════════════════════════════════════════════════════════════════════

def test_train_eval_dump_kernels(tmp_path, dataset, capsys):
    out = tmp_path / "run"
    assert main(_train_args(dataset, out)) == 0
    history = (out / "history.csv").read_text()
    assert (out / "checkpoints" / "final").is_dir()

    again = tmp_path / "again"
    assert main(_train_args(dataset, again)) == 0
    assert (again / "history.csv").read_text() == history

    capsys.readouterr()
    checkpoint = str(out / "checkpoints" / "final")
    eval_args = ["eval", "--config", str(dataset["config"]), "--checkpoint", checkpoint,
                 "--test-images", str(dataset["test"]), "--out", str(out), "--dump-images", "2"]
    assert main(eval_args) == 0
    assert capsys.readouterr().out.strip().count("\n") == 0
    events = RunLogger("eval", out / "run_log.jsonl").read_events()
    assert events[-1].event_type == RunEventType.EVALUATION_COMPLETED
    assert events[-1].details["images"] == 10
    recon = out / "reconstructions"
    assert sorted(p.name for p in recon.glob("recon_*.pgm")) == ["recon_0000.pgm", "recon_0001.pgm"]
    assert len(list(recon.glob("gt_*.pgm"))) == 2

    assert main(["dump-kernels", "--checkpoint", checkpoint, "--test-images", str(dataset["test"]), "--out", str(out)]) == 0
    blob = out / "kernels" / "up0.bin"
    sidecar = json.loads((out / "kernels" / "up0.json").read_text())
    assert blob.stat().st_size == 4 * int(np.prod(sidecar["shape"]))
    assert sidecar["shape"][0] == 1
    assert sidecar["shape"][2:] == [32, 32]


def test_compare_writes_table(tmp_path, dataset, capsys):
    out = tmp_path / "cmp"
    args = ["compare", "--config", str(dataset["config"]), "--train-images", str(dataset["train"]),
            "--test-images", str(dataset["test"]), "--out", str(out), "--rows", "conv2-bilinear", "maxpool-a2u"]
    assert main(args) == 0
    table = (out / "comparison.csv").read_text().splitlines()
    assert table[0].startswith("architecture,")
    assert [line.split(",")[0] for line in table[1:]] == ["Conv/2-Bilinear", "MaxPool-A2U"]
    assert (out / "maxpool-a2u" / "checkpoints" / "final").is_dir()
    assert capsys.readouterr().out.splitlines() == table
