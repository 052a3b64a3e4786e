import csv
import json
import math

import numpy as np
import pytest

from mmfsga import __version__
from mmfsga.cli import main
from mmfsga.data import MultiViewDataset, SyntheticSpec, bayes_error_mc, generate_synthetic
from mmfsga.evaluation import fit_classifier
from mmfsga.formats import (
    ConfigError,
    DataFormatError,
    load_experiment_config,
    load_multiview_csv,
    read_mask_file,
    table_rows,
    write_experiment_config,
    write_mask_file,
    write_multiview_csv,
)
from mmfsga.metrics import balanced_accuracy


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _two_view_dir(tmp_path, n=166, drop_id=None, empty_label=None):
    rng = np.random.default_rng(0)
    ids = [f"P{i:03d}" for i in range(n)]
    with open(tmp_path / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "dx"])
        for i, sid in enumerate(ids):
            w.writerow([sid, "" if sid == empty_label else ("MCI" if i % 2 else "CN")])
    for name, k in (("mri", 4), ("pet", 7)):
        with open(tmp_path / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", *[f"{name}{j}" for j in range(k)]])
            # rows in reverse order: alignment must go by id
            for sid in reversed(ids):
                if sid == drop_id and name == "pet":
                    continue
                w.writerow([sid, *rng.normal(size=k).round(4)])
    return _write(
        tmp_path / "manifest.ini",
        "[dataset]\nid_column = subject\nlabel_column = dx\nlabels = labels.csv\n\n"
        "[views]\nmri = mri.csv\npet = pet.csv\n",
    )


class TestCSV:
    def test_shared_ids(self, tmp_path):
        ds = load_multiview_csv(_two_view_dir(tmp_path))
        assert ds.n_samples == 166 and ds.view_dims == [4, 7]
        assert ds.class_names == ["CN", "MCI"] and ds.labels[:2].tolist() == [0, 1]

    def test_missing_id(self, tmp_path):
        with pytest.raises(DataFormatError, match="P010"):
            load_multiview_csv(_two_view_dir(tmp_path, drop_id="P010"))

    def test_empty_label(self, tmp_path):
        with pytest.raises(DataFormatError, match=r"labels.csv:6: empty label"):
            load_multiview_csv(_two_view_dir(tmp_path, empty_label="P004"))

    def test_ragged_row(self, tmp_path):
        m = _two_view_dir(tmp_path, n=20)
        lines = (tmp_path / "mri.csv").read_text().splitlines()
        lines[3] += ",9.9"
        _write(tmp_path / "mri.csv", "\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match=r"mri.csv:4: expected 5 cells, found 6"):
            load_multiview_csv(m)

    def test_non_numeric(self, tmp_path):
        m = _two_view_dir(tmp_path, n=20)
        lines = (tmp_path / "pet.csv").read_text().splitlines()
        cells = lines[2].split(",")
        cells[3] = "high"
        lines[2] = ",".join(cells)
        _write(tmp_path / "pet.csv", "\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match=r"pet.csv:3: non-numeric value 'high' in column 'pet2'"):
            load_multiview_csv(m)

    def test_round_trip(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec.four_class(view_dim=15, n_per_class=12), 3)
        back = load_multiview_csv(write_multiview_csv(ds, tmp_path / "d"))
        assert back.view_names == ds.view_names and back.feature_names == ds.feature_names
        assert np.array_equal(back.labels, ds.labels)
        for a, b in zip(back.views, ds.views):
            assert np.array_equal(a, b)
        for a, b in zip(back.informative_masks, ds.informative_masks):
            assert np.array_equal(a, b)

    def test_numeric_labels_sort_numerically(self, tmp_path):
        _write(tmp_path / "labels.csv", "id,label\na,10\nb,9\nc,10\n")
        _write(tmp_path / "v.csv", "id,x\na,1\nb,2\nc,3\n")
        m = _write(tmp_path / "m.ini", "[dataset]\nlabels = labels.csv\n[views]\nv = v.csv\n")
        ds = load_multiview_csv(m)
        assert ds.class_names == ["9", "10"] and ds.labels.tolist() == [1, 0, 1]


class TestMaskFile:
    def _ds(self):
        return MultiViewDataset([np.zeros((2, 3)), np.zeros((2, 2))], [0, 1], 2, ["a", "b"])

    def test_round_trip(self, tmp_path):
        ds = self._ds()
        mask = np.array([1, 0, 1, 0, 0], bool)
        write_mask_file(tmp_path / "m.txt", ds, mask)
        assert (tmp_path / "m.txt").read_text() == "a: a_f0, a_f2\nb:\n"
        assert np.array_equal(read_mask_file(tmp_path / "m.txt", ds), mask)

    @pytest.mark.parametrize("text,msg", [("c: x\n", "unknown view"), ("a: zz\n", "no feature"), ("a a_f0\n", "expected")])
    def test_errors(self, tmp_path, text, msg):
        with pytest.raises(DataFormatError, match=msg):
            read_mask_file(_write(tmp_path / "m.txt", text), self._ds())


class TestConfig:
    def test_round_trip(self, tmp_path):
        path = _write(
            tmp_path / "c.ini",
            "[data]\ntask = binary\ndata_seed = 4\nview_dim = 30\n\n[search]\npreset = desk\nseed = 7\n"
            "ivfs_gen = 12\n\n[bvfs_variation]\ncrossover_prob = 0.4\n",
        )
        cfg = load_experiment_config(path)
        assert (cfg.task, cfg.data_seed, cfg.view_dim, cfg.seed) == ("binary", 4, 30, 7)
        assert cfg.search.ivfs_gen == 12 and cfg.search.n_niches == 2
        assert cfg.search.bvfs_variation.crossover_prob == 0.4
        write_experiment_config(cfg, tmp_path / "back.ini")
        again = load_experiment_config(tmp_path / "back.ini")
        assert again.search == cfg.search and again.digest() == cfg.digest()

    def test_overrides(self, tmp_path):
        path = _write(tmp_path / "c.ini", "[data]\ntask = binary\n[search]\nseed = 1\n")
        cfg = load_experiment_config(path, preset="paper", seed=9, threads=3)
        assert cfg.search.n_niches == 6 and cfg.seed == 9 and cfg.search.threads == 3

    @pytest.mark.parametrize(
        "text,field",
        [
            ("[data]\ntask = binary\n[search]\nniches = 3\n", "niches"),
            ("[data]\ntask = binary\n[search]\nivfs_pop = many\n", "ivfs_pop"),
            ("[data]\ntask = trinary\n", "task"),
            ("[data]\ntask = binary\nmanifest = m.ini\n", "exactly one"),
            ("[data]\ntask = binary\n[search]\nmigration_fraction = 1.5\n", "migration_fraction"),
            ("[data]\ntask = binary\n[extra]\nx = 1\n", "extra"),
        ],
    )
    def test_errors_name_the_field(self, tmp_path, text, field):
        with pytest.raises(ConfigError, match=field):
            load_experiment_config(_write(tmp_path / "c.ini", text))

    def test_table_rows(self):
        out = table_rows([0.96, 0.94])
        assert out.splitlines() == ["experiment,accuracy", "Experiment 1,0.96", "Experiment 2,0.94", "Mean,0.95 ± 0.010"]


TINY = (
    "[data]\ntask = binary\nview_dim = 20\ndata_seed = 1\n\n"
    "[search]\npreset = desk\nseed = 2\nivfs_pop = 10\nivfs_gen = 6\nbvfs_pop = 10\nbvfs_gen = 6\nthreads = 1\n"
)


class TestCommands:
    def test_synth_shapes_and_determinism(self, tmp_path, capsys):
        assert main(["synth", "--task", "binary", "--replicates", "2", "--seed", "0", "--out", str(tmp_path / "a")]) == 0
        ds = load_multiview_csv(tmp_path / "a" / "binary_seed1" / "train" / "manifest.ini")
        assert ds.n_samples == 200 and ds.view_dims == [500] * 5
        main(["synth", "--task", "binary", "--replicates", "1", "--seed", "0", "--out", str(tmp_path / "b")])
        left, right = tmp_path / "a" / "binary_seed0", tmp_path / "b" / "binary_seed0"
        files = sorted(p.relative_to(left) for p in left.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(right) for p in right.rglob("*") if p.is_file())
        assert all((left / f).read_bytes() == (right / f).read_bytes() for f in files)

    def test_synth_four_class(self, tmp_path):
        main(["synth", "--task", "four_class", "--replicates", "1", "--out", str(tmp_path), "--view-dim", "8"])
        ds = load_multiview_csv(tmp_path / "four_class_seed0" / "train" / "manifest.ini")
        assert ds.n_samples == 400 and ds.n_classes == 4

    def test_run_eval_round_trip(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.ini", TINY)
        out = tmp_path / "run"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("mask.txt", "config.ini", "report.json", "trajectories.csv", "evaluation.txt", "metadata.json", "table_row.csv"):
            assert (out / name).exists(), name
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["version"] == __version__ and len(meta["config_sha256"]) == 64 and meta["seed"] == 2
        assert (out / "table_row.csv").read_text().splitlines()[1].startswith("Experiment 2,")

        # rerunning the written config reproduces the mask
        assert main(["run", "--config", str(out / "config.ini"), "--out", str(tmp_path / "again")]) == 0
        assert (tmp_path / "again" / "mask.txt").read_text() == (out / "mask.txt").read_text()

        # exported data + saved mask reproduce the reported metrics exactly
        main(["synth", "--task", "binary", "--replicates", "1", "--seed", "1", "--view-dim", "20", "--out", str(tmp_path / "d")])
        root = tmp_path / "d" / "binary_seed1"
        assert main(["eval", "--mask", str(out / "mask.txt"), "--train", str(root / "train" / "manifest.ini"),
                     "--test", str(root / "test" / "manifest.ini"), "--out", str(tmp_path / "ev")]) == 0
        assert (tmp_path / "ev" / "evaluation.txt").read_text() == (out / "evaluation.txt").read_text()

    def test_run_from_task_flag(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr("mmfsga.cli.SyntheticSpec.for_task", lambda task, view_dim=500: SyntheticSpec.binary(view_dim=12))
        from mmfsga import search

        monkeypatch.setattr(search.NicheConfig, "desk", classmethod(
            lambda cls, seed=0, **kw: cls(seed=seed, n_niches=2, ivfs_pop=8, ivfs_gen=4, bvfs_pop=8, bvfs_gen=4, **kw)))
        assert main(["run", "--task", "binary", "--data-seed", "0", "--seed", "1", "--out", str(tmp_path)]) == 0
        assert "test_balanced_accuracy" in capsys.readouterr().out

    def test_eval_all_features_matches_baseline(self, tmp_path, capsys):
        ds_tr = generate_synthetic(SyntheticSpec.binary(view_dim=10), 0, split=0)
        ds_te = generate_synthetic(SyntheticSpec.binary(view_dim=10), 0, split=1)
        tr, te = write_multiview_csv(ds_tr, tmp_path / "tr"), write_multiview_csv(ds_te, tmp_path / "te")
        write_mask_file(tmp_path / "all.txt", ds_tr, np.ones(ds_tr.n_features, bool))
        assert main(["eval", "--mask", str(tmp_path / "all.txt"), "--train", str(tr), "--test", str(te)]) == 0
        model = fit_classifier(ds_tr.X, ds_tr.labels, 2)
        expected = balanced_accuracy(ds_te.labels, model.predict(ds_te.X))
        assert f"balanced_accuracy = {round(expected, 12)!r}" in capsys.readouterr().out

    def test_eval_informative_mask_near_bayes(self, tmp_path, capsys):
        main(["synth", "--task", "binary", "--replicates", "1", "--seed", "2", "--view-dim", "40", "--out", str(tmp_path)])
        root = tmp_path / "binary_seed2"
        assert main(["eval", "--mask", str(root / "train" / "informative.txt"), "--train", str(root / "train" / "manifest.ini"),
                     "--test", str(root / "test" / "manifest.ini")]) == 0
        line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("balanced_accuracy"))
        acc = float(line.split("=")[1])
        p = bayes_error_mc(SyntheticSpec.binary(), ("A", "B"), 200_000, seed=0)
        sigma = math.sqrt(p * (1 - p) / 200)
        assert acc >= 1 - p - 3 * sigma

    def test_eval_empty_mask_exit_3(self, tmp_path, capsys):
        ds = generate_synthetic(SyntheticSpec.binary(view_dim=8), 0)
        m = write_multiview_csv(ds, tmp_path / "d")
        _write(tmp_path / "empty.txt", "")
        assert main(["eval", "--mask", str(tmp_path / "empty.txt"), "--train", str(m), "--test", str(m)]) == 3
        assert "at least one feature" in capsys.readouterr().err

    def test_eval_dimension_mismatch(self, tmp_path, capsys):
        a = write_multiview_csv(generate_synthetic(SyntheticSpec.binary(view_dim=8), 0), tmp_path / "a")
        b = write_multiview_csv(generate_synthetic(SyntheticSpec.binary(view_dim=9), 0), tmp_path / "b")
        _write(tmp_path / "m.txt", "view1: view1_f0\n")
        assert main(["eval", "--mask", str(tmp_path / "m.txt"), "--train", str(a), "--test", str(b)]) == 3

    def test_bayes(self, capsys):
        assert main(["bayes", "--task", "binary", "--views", "B", "--samples", "200000"]) == 0
        lines = dict(l.split(" = ") for l in capsys.readouterr().out.strip().splitlines())
        assert abs(float(lines["bayes_error"]) - 0.141) <= 0.004
        assert float(lines["std_error"]) == pytest.approx(math.sqrt(0.141 * 0.859 / 200000), rel=0.05)

    def test_exit_codes(self, tmp_path, capsys):
        assert main(["run"]) == 2
        assert main(["run", "--config", str(_write(tmp_path / "bad.ini", "[data]\ntask = x\n"))]) == 2
        with pytest.raises(SystemExit) as info:
            main(["bayes", "--task", "nope"])
        assert info.value.code == 2
        assert main(["eval", "--mask", "nope.txt", "--train", "x.ini", "--test", "y.ini"]) == 3

    def test_runtime_failure_exit_4(self, tmp_path, monkeypatch, capsys):
        from mmfsga import search

        def boom(*a, **k):
            raise RuntimeError("bad")

        monkeypatch.setattr(search, "run_bvfs", boom)
        cfg = _write(tmp_path / "c.ini", TINY)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
        assert "phase BV-FS" in capsys.readouterr().err
