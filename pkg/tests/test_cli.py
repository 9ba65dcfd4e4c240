import numpy as np
import pytest

from semicl.cli import main
from semicl.config import load_config
from semicl.data import load_csv
from semicl.errors import ConfigError

QUICK_CFG = """
data.source = synth
data.num_samples = 48
data.num_classes = 2
data.channels = 1
data.length = 16
data.noise_sigma = 0.2
data.num_subjects = 4
split.pattern = trial_dependent
split.test_fraction = 0.25
model.num_blocks = 1
model.dilations = 1
model.feature_channels = 2
model.embed_dim = 8
losses.lambda1 = 1.0
losses.lambda2 = 0.3
losses.lambda3 = 2.0
train.epochs = 2
train.batch_size = 8
train.pretrain_epochs = 2
train.learning_rate = 0.001
"""


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text(QUICK_CFG)
    return path


def test_train_writes_expected_files(quick_config, tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--config", str(quick_config), "--out", str(out), "--seeds", "1"])
    assert code == 0
    for name in ("trace.csv", "report.csv", "model.ckpt", "trace_seed1.csv",
                 "model_seed1.ckpt", "run.log"):
        assert (out / name).exists(), name
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0].startswith("epoch,L_u,L_s,L_c,hybrid,val_accuracy")
    assert len(trace) == 1 + 2  # header + one row per epoch


def test_train_is_byte_deterministic(quick_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(quick_config), "--out", str(out_a), "--seeds", "2"]) == 0
    assert main(["train", "--config", str(quick_config), "--out", str(out_b), "--seeds", "2"]) == 0
    for name in ("trace.csv", "report.csv", "model.ckpt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_train_multi_seed_report_rows(quick_config, tmp_path):
    out = tmp_path / "multi"
    assert main(["train", "--config", str(quick_config), "--out", str(out),
                 "--seeds", "1,2,3"]) == 0
    rows = (out / "report.csv").read_text().splitlines()
    labels = [r.split(",")[0] for r in rows]
    assert labels == ["seed", "1", "2", "3", "mean", "std"]


def test_missing_config_exits_4(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o"),
                 "--seeds", "1"])
    assert code == 4
    assert "nope.cfg" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.max_lr = 3\n")
    code = main(["train", "--config", str(bad), "--out", str(tmp_path / "o"), "--seeds", "1"])
    assert code == 2
    assert "config" in capsys.readouterr().err


def test_bad_value_exits_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.epochs = soon\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "o"), "--seeds", "1"]) == 2


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_divergence_exits_3(quick_config, tmp_path, capsys):
    code = main(["train", "--config", str(quick_config), "--out", str(tmp_path / "o"),
                 "--seeds", "1", "--override", "train.learning_rate=1e30",
                 "--override", "train.optimizer=sgd"])
    assert code == 3
    assert "divergence" in capsys.readouterr().err


def test_override_equals_editing_config(quick_config, tmp_path):
    edited = tmp_path / "edited.cfg"
    edited.write_text(QUICK_CFG.replace("losses.lambda1 = 1.0", "losses.lambda1 = 0.0"))
    out_a, out_b = tmp_path / "ov", tmp_path / "ed"
    assert main(["train", "--config", str(quick_config), "--out", str(out_a), "--seeds", "1",
                 "--override", "losses.lambda1=0.0"]) == 0
    assert main(["train", "--config", str(edited), "--out", str(out_b), "--seeds", "1"]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()


def test_label_ratio_flag_matches_config_key(quick_config, tmp_path):
    out_a, out_b = tmp_path / "fl", tmp_path / "cf"
    assert main(["train", "--config", str(quick_config), "--out", str(out_a), "--seeds", "1",
                 "--label-ratio", "0.5"]) == 0
    assert main(["train", "--config", str(quick_config), "--out", str(out_b), "--seeds", "1",
                 "--override", "data.label_ratio=0.5"]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()


def test_eval_on_saved_checkpoint(quick_config, tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--config", str(quick_config), "--out", str(out), "--seeds", "1"]) == 0
    out_eval = tmp_path / "eval"
    code = main(["eval", "--config", str(quick_config), "--out", str(out_eval),
                 "--seeds", "1", "--model", str(out / "model.ckpt")])
    assert code == 0
    rows = (out_eval / "report.csv").read_text().splitlines()
    assert rows[0].startswith("seed,accuracy")
    # Same data, same split, same model: metrics must match the training report.
    train_row = (out / "report.csv").read_text().splitlines()[1]
    assert rows[1] == train_row


def test_ablate_rows_and_shared_hashes(quick_config, tmp_path):
    out = tmp_path / "ablate"
    code = main(["ablate", "--config", str(quick_config), "--out", str(out),
                 "--seeds", "1,2"])
    assert code == 0
    rows = (out / "ablation.csv").read_text().splitlines()
    header, body = rows[0], rows[1:]
    assert header.split(",")[:2] == ["ablation", "seed"]
    combos = [(r.split(",")[0], r.split(",")[1]) for r in body]
    assert combos == [("full", "1"), ("full", "2"), ("no_Lu", "1"), ("no_Lu", "2"),
                      ("no_Ls", "1"), ("no_Ls", "2")]
    split_hashes = {r.split(",")[1]: set() for r in body}
    labeled_hashes = {r.split(",")[1]: set() for r in body}
    for r in body:
        parts = r.split(",")
        split_hashes[parts[1]].add(parts[-2])
        labeled_hashes[parts[1]].add(parts[-1])
    for seed, hashes in split_hashes.items():
        assert len(hashes) == 1, f"split hash differs across ablations for seed {seed}"
    for seed, hashes in labeled_hashes.items():
        assert len(hashes) == 1
    assert (out / "ablation_summary.csv").exists()


def test_ablate_with_two_stage_ls(quick_config, tmp_path):
    out = tmp_path / "ablate2"
    code = main(["ablate", "--config", str(quick_config), "--out", str(out),
                 "--seeds", "1", "--label-ratio", "0.5", "--with-two-stage-ls"])
    assert code == 0
    rows = (out / "ablation.csv").read_text().splitlines()[1:]
    names = [r.split(",")[0] for r in rows]
    assert names == ["full", "no_Lu", "no_Ls", "two_stage_with_Ls"]


def test_compare_regimes_pairing(quick_config, tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare-regimes", "--config", str(quick_config), "--out", str(out),
                 "--seeds", "1", "--ratios", "0.5,1.0"])
    assert code == 0
    rows = (out / "compare.csv").read_text().splitlines()[1:]
    assert len(rows) == 4  # 2 ratios x 2 regimes x 1 seed
    by_key = {}
    for r in rows:
        parts = r.split(",")
        by_key.setdefault((parts[0], parts[2]), []).append(parts[-1])
    for (ratio, seed), hashes in by_key.items():
        assert len(set(hashes)) in (1,)  # same labeled subset for both regimes
    summary = (out / "compare_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2 * 2 * 2  # header + (ratio x regime x {mean,std})


def test_synth_gen_round_trip(quick_config, tmp_path):
    out = tmp_path / "gen"
    code = main(["synth-gen", "--config", str(quick_config), "--out", str(out), "--seeds", "7"])
    assert code == 0
    ds = load_csv(out / "manifest.txt")
    assert len(ds) == 48 and ds.num_classes == 2
    exp = load_config(quick_config)
    direct = exp.build_dataset(7)
    for a, b in zip(ds.samples, direct.samples):
        assert np.array_equal(a.values, b.values)
        assert a.label == b.label


def test_config_duplicate_key_rejected(tmp_path):
    cfg = tmp_path / "dup.cfg"
    cfg.write_text("train.epochs = 2\ntrain.epochs = 3\n")
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_config_closed_schema():
    with pytest.raises(ConfigError):
        load_config(__file__)  # a Python file is not a valid config
