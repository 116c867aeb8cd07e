import numpy as np
import pytest

from alise.cli import main
from alise.data import read_dataset

SYNTH = "n_train=4\nn_val=2\nn_test=2\nsize=8\nmin_dates=12\nmax_dates=16\nt_w_max=2\n"
TRAIN = "size=8\nn_dates=8\nd_model=8\nn_q=2\nd_emb=8\nn_head=2\nd_hidden=8\nepochs=1\nprobe_epochs=2\nfinetune_epochs=1\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.txt").write_text(SYNTH)
    assert main(["synth", "--config", str(root / "synth.txt"), "--out", str(root / "data"), "--seed", "2"]) == 0
    cfg = root / "train.txt"
    cfg.write_text(TRAIN + f"data_dir={root / 'data'}\nout_dir={root / 'run'}\n")
    return root, cfg


def metrics(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "metric,value"
    return dict(line.split(",") for line in lines[1:])


def test_synth_splits(workspace):
    root, _ = workspace
    assert [len(read_dataset(root / "data" / s)) for s in ("train", "val", "test")] == [4, 2, 2]
    assert (root / "data" / "stats.txt").exists()


def test_pipeline(workspace, capsys):
    root, cfg = workspace
    assert main(["pretrain", "--config", str(cfg), "--plot", str(root / "plots")]) == 0
    assert (root / "run" / "pretrain.ckpt").exists()
    assert (root / "plots" / "pretrain_loss.png").stat().st_size > 0
    with open(cfg, "a") as fh:
        fh.write(f"checkpoint={root / 'run' / 'pretrain.ckpt'}\n")
    assert main(["probe", "--config", str(cfg)]) == 0
    m = metrics(root / "run" / "probe_metrics.csv")
    assert 0 <= float(m["macro_f1"]) <= 1
    pred = np.fromfile(root / "run" / "probe_predictions.u8", dtype=np.uint8)
    assert "shape=2,8,8" in (root / "run" / "probe_predictions.txt").read_text()
    assert pred.size == 2 * 8 * 8 and pred.max() < 5
    assert main(["finetune", "--config", str(cfg)]) == 0
    assert (root / "run" / "finetune.ckpt").exists()
    assert main(["changedetect", "--config", str(cfg)]) == 0
    m = metrics(root / "run" / "changedetect_metrics.csv")
    assert set(m) == {"auc_alise", "auc_gf"}
    maps = np.fromfile(root / "run" / "change_alise.f32", dtype="<f4")
    assert maps.size == 2 * 8 * 8 and np.all(maps >= 0)
    assert "auc_alise," in capsys.readouterr().out


def test_sweep_isolates_failures(workspace):
    root, cfg = workspace
    sweep_cfg = root / "sweep.txt"
    # t_w=5 cannot fit two windows in 8 dates: that cell fails, the others run
    sweep_cfg.write_text(cfg.read_text() + "grid=t_w=1,5;w_inv=0,1\nseeds=0,1\nprobe_epochs=1\n")
    assert main(["sweep", "--config", str(sweep_cfg)]) == 0
    lines = (root / "run" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "t_w,w_inv,seed,macro_f1,auc,error"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 8
    assert {r[2] for r in rows} == {"0", "1"}
    assert all(r[5] == "ValueError" for r in rows if r[0] == "5")
    assert all(r[5] == "" and r[3] for r in rows if r[0] == "1")


def test_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["probe", "--config", str(tmp_path / "missing.txt")]) == 1
    (tmp_path / "bad.txt").write_text("unknown_key=3\n")
    assert main(["pretrain", "--config", str(tmp_path / "bad.txt")]) == 1
    assert "unknown_key" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nonsense"])
