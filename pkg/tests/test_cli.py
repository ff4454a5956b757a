"""End-to-end CLI flows over a temp directory: synth -> train -> evaluate ->
predict -> stats, plus the prepare join and the error-code contract."""

import numpy as np
import pytest

from geotag.cli import main
from geotag.data_model import builtin_vocabulary
from geotag.evaluate import parse_submission
from geotag.heads import load_checkpoint
from geotag.ingest import load_dataset, write_embeddings


@pytest.fixture()
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--n", "300", "--seed", "3", "--out", str(out)]) == 0
    return out


def _write_config(tmp_path, **overrides):
    values = {"combo": "image", "head_kind": "linear", "batch_size": "64",
              "max_epochs": "10", "patience": "10", "lr_max": "0.01",
              "seed": "1", "val_fraction": "0.25"}
    values.update({k: str(v) for k, v in overrides.items()})
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


class TestSynthTrainEvaluatePredict:
    def test_full_flow(self, tmp_path, synth_dir, capsys):
        config = _write_config(tmp_path)
        ckpt = tmp_path / "head.ckpt"

        assert main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(ckpt)]) == 0
        assert ckpt.exists()
        history = (tmp_path / "head.ckpt.history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_subset_acc,val_macro_f1,lr"

        report_csv = tmp_path / "report.csv"
        assert main(["evaluate", "--checkpoint", str(ckpt), "--dataset", str(synth_dir),
                     "--out", str(report_csv)]) == 0
        assert len(report_csv.read_text().splitlines()) == 52

        produced = tmp_path / "submission.csv"
        assert main(["predict", "--checkpoint", str(ckpt), "--dataset", str(synth_dir),
                     "--out", str(produced)]) == 0
        parsed = parse_submission(produced)
        assert len(parsed) == 300
        assert all(len(tags) >= 1 for tags in parsed.values())

        assert main(["stats", "--dataset", str(synth_dir)]) == 0
        out = capsys.readouterr().out
        assert "samples: 300" in out

    def test_train_rerun_identical_history(self, tmp_path, synth_dir):
        config = _write_config(tmp_path)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        assert main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(a)]) == 0
        assert main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(b)]) == 0
        ha = (tmp_path / "a.ckpt.history.csv").read_text()
        hb = (tmp_path / "b.ckpt.history.csv").read_text()
        assert ha == hb
        assert a.read_bytes() == b.read_bytes()

    def test_sweep_command(self, tmp_path, synth_dir):
        config = _write_config(tmp_path, max_epochs=2)
        out = tmp_path / "sweepout"
        assert main(["sweep", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(out)]) == 0
        csv_lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(csv_lines) == 29  # header + 28 cells
        assert (out / "sweep.txt").exists()


class TestExitCodes:
    def test_usage_error_is_1(self):
        for argv in (["train", "--dataset", "x"],  # missing required flags
                     ["train"],
                     ["frobnicate"]):
            with pytest.raises(SystemExit) as exc:
                main(argv)
            assert exc.value.code == 1

    def test_data_error_is_2(self, tmp_path, synth_dir):
        config = _write_config(tmp_path)
        missing = main(["train", "--dataset", str(tmp_path / "nope"),
                        "--config", str(config), "--out", str(tmp_path / "x.ckpt")])
        assert missing == 2

    def test_unknown_config_key_is_2(self, tmp_path, synth_dir, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("combo = image\nwarp_factor = 9\n")
        code = main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(tmp_path / "x.ckpt")])
        assert code == 2
        assert "warp_factor" in capsys.readouterr().err

    def test_combo_mismatch_is_2(self, tmp_path, synth_dir):
        config = _write_config(tmp_path, combo="all", max_epochs=1)
        ckpt = tmp_path / "all.ckpt"
        assert main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(ckpt)]) == 0
        # strip the packaged dataset down to image-only
        import json
        manifest_path = synth_dir / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["modalities"] = ["image"]
        manifest_path.write_text(json.dumps(manifest))
        code = main(["evaluate", "--checkpoint", str(ckpt), "--dataset", str(synth_dir),
                     "--out", str(tmp_path / "r.csv")])
        assert code == 2


class TestPrepare:
    def _inputs(self, tmp_path, n=3, drop_txt_for=None):
        rng = np.random.default_rng(0)
        meta = tmp_path / "meta.csv"
        rows = ['image_id,title,grid_reference,tags']
        for i in range(1, n + 1):
            rows.append(f'{i},"photo {i}","TQ30{i}0","Coastal;Paths"')
        meta.write_text("\n".join(rows) + "\n")
        img = {i: rng.standard_normal(512).astype(np.float32) for i in range(1, n + 1)}
        txt = {i: rng.standard_normal(512).astype(np.float32) for i in range(1, n + 1)}
        if drop_txt_for:
            del txt[drop_txt_for]
        img_path, txt_path = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        write_embeddings(img_path, img, dim=512)
        write_embeddings(txt_path, txt, dim=512)
        return meta, img_path, txt_path

    def test_happy_path(self, tmp_path, capsys):
        meta, img, txt = self._inputs(tmp_path)
        out = tmp_path / "prepared"
        assert main(["prepare", "--metadata", str(meta), "--img-emb", str(img),
                     "--txt-emb", str(txt), "--out", str(out)]) == 0
        assert "packaged 3/3 samples" in capsys.readouterr().out
        ds = load_dataset(out)
        assert len(ds) == 3
        assert ds.labeled
        vocab = builtin_vocabulary()
        assert ds.samples[0].labels[vocab.index_of("Paths")] == 1

    def test_missing_text_embedding_dropped_with_summary(self, tmp_path, capsys):
        meta, img, txt = self._inputs(tmp_path, drop_txt_for=2)
        out = tmp_path / "prepared"
        assert main(["prepare", "--metadata", str(meta), "--img-emb", str(img),
                     "--txt-emb", str(txt), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "packaged 2/3 samples" in stdout
        assert "missing_text_emb: 1" in stdout

    def test_malformed_gridref_names_line(self, tmp_path, capsys):
        meta = tmp_path / "meta.csv"
        meta.write_text('image_id,title,grid_reference,tags\n'
                        '1,"a","TQ3080","Coastal"\n'
                        '2,"b","TI999","Coastal"\n')
        rng = np.random.default_rng(0)
        emb = {1: rng.standard_normal(512).astype(np.float32),
               2: rng.standard_normal(512).astype(np.float32)}
        img_path, txt_path = tmp_path / "i.geoemb", tmp_path / "t.geoemb"
        write_embeddings(img_path, emb, dim=512)
        write_embeddings(txt_path, emb, dim=512)
        code = main(["prepare", "--metadata", str(meta), "--img-emb", str(img_path),
                     "--txt-emb", str(txt_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_checkpoint_records_combo_and_seed(self, tmp_path, synth_dir):
        config = _write_config(tmp_path, combo="image_location", max_epochs=1, seed=77)
        ckpt = tmp_path / "c.ckpt"
        assert main(["train", "--dataset", str(synth_dir), "--config", str(config),
                     "--out", str(ckpt)]) == 0
        _, meta = load_checkpoint(ckpt)
        assert meta["combo"].value == "image_location"
        assert meta["seed"] == 77
