import json

import numpy as np
import pytest

from treextract.cli import build_parser, main
from treextract.io import load_tree, save_csv, save_json, blackbox_to_doc
from treextract import Dataset, synthetic_box_blackbox, BoxConstraint


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def synthetic_spec(workdir, rng):
    bb = synthetic_box_blackbox(
        [BoxConstraint([-np.inf, -np.inf], [0.0, np.inf])], [1], d=2, m=2)
    save_json(workdir / "bb.json", blackbox_to_doc(bb))
    X = rng.normal(size=(200, 2))
    save_csv(workdir / "train.csv", Dataset.from_arrays(X, bb.predict(X)))
    return bb


class TestParsing:
    def test_every_subcommand_has_help(self, capsys):
        parser = build_parser()
        subs = ["fit-gmm", "train-rf", "train-cartpole", "extract", "baseline",
                "evaluate", "export", "experiment"]
        for name in subs:
            with pytest.raises(SystemExit) as exc:
                parser.parse_args([name, "--help"])
            assert exc.value.code == 0
            assert "--help" not in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, capsys):
        code, _, err = run(["export", "--tree", "x.json", "--bogus"], capsys)
        assert code == 1 and "usage" in err

    def test_missing_required_flag_exits_1(self, capsys):
        code, _, err = run(["extract", "--max-nodes", "3"], capsys)
        assert code == 1

    def test_missing_file_exits_1(self, capsys):
        code, _, _ = run(["export", "--tree", "/nonexistent/tree.json"], capsys)
        assert code == 1

    def test_internal_error_exits_2(self, workdir, capsys, monkeypatch):
        (workdir / "tree.json").write_text(
            '{"kind": "decision_tree", "d": 1, "m": 1, "root": 0, '
            '"nodes": [{"type": "leaf", "label": 0, "class_histogram": [1.0], '
            '"mass": 1.0, "cached_gain": 0.0}]}', encoding="utf-8")
        import treextract.cli as cli_mod
        monkeypatch.setitem(cli_mod._COMMANDS, "export",
                            lambda args: (_ for _ in ()).throw(RuntimeError("boom")))
        code, _, err = run(["export", "--tree", "tree.json"], capsys)
        assert code == 2 and "internal error" in err


class TestPipeline:
    def test_fit_extract_evaluate_export(self, workdir, synthetic_spec, capsys):
        code, out, err = run(["fit-gmm", "--data", "train.csv", "--k", "2",
                              "--seed", "0", "--out", "gmm.json"], capsys)
        assert code == 0 and "fitted mixture" in out
        assert json.loads(err.splitlines()[0])["command"] == "fit-gmm"

        code, out, _ = run(["extract", "--gmm", "gmm.json",
                            "--blackbox", "synthetic:bb.json",
                            "--max-nodes", "5", "--samples-per-node", "300",
                            "--seed", "1", "--out", "tree.json"], capsys)
        assert code == 0
        tree = load_tree(workdir / "tree.json")
        assert tree.size <= 5

        code, out, _ = run(["evaluate", "--tree", "tree.json",
                            "--blackbox", "synthetic:bb.json",
                            "--data", "train.csv"], capsys)
        assert code == 0
        report = json.loads(out.splitlines()[-1])
        assert report["accuracy"] >= 0.95

        code, out, _ = run(["export", "--tree", "tree.json", "--format", "dot"],
                           capsys)
        assert code == 0 and out.startswith("digraph")

    def test_train_rf_and_cart_baseline(self, workdir, synthetic_spec, capsys):
        code, out, _ = run(["train-rf", "--data", "train.csv", "--n-trees", "5",
                            "--seed", "0", "--out", "rf.json"], capsys)
        assert code == 0 and "forest" in out
        code, out, _ = run(["baseline", "--kind", "cart",
                            "--blackbox", "rf:rf.json", "--data", "train.csv",
                            "--max-nodes", "7", "--out", "cart.json"], capsys)
        assert code == 0
        assert load_tree(workdir / "cart.json").size <= 7

    def test_born_again_baseline(self, workdir, synthetic_spec, capsys):
        run(["fit-gmm", "--data", "train.csv", "--k", "1", "--seed", "0",
             "--out", "gmm.json"], capsys)
        code, out, _ = run(["baseline", "--kind", "born-again",
                            "--blackbox", "synthetic:bb.json", "--gmm", "gmm.json",
                            "--max-nodes", "5", "--samples-per-node", "100",
                            "--budget", "1000", "--seed", "0",
                            "--out", "ba.json"], capsys)
        assert code == 0
        assert load_tree(workdir / "ba.json").budget <= 1000

    def test_blackbox_kind_mismatch(self, workdir, synthetic_spec, capsys):
        code, _, err = run(["evaluate", "--tree", "missing.json",
                            "--blackbox", "rf:bb.json"], capsys)
        assert code == 1


class TestDeterminism:
    def test_identical_seeds_byte_identical_outputs(self, workdir, synthetic_spec, capsys):
        run(["fit-gmm", "--data", "train.csv", "--k", "2", "--seed", "0",
             "--out", "gmm.json"], capsys)
        for out in ("t1.json", "t2.json"):
            run(["extract", "--gmm", "gmm.json", "--blackbox", "synthetic:bb.json",
                 "--max-nodes", "5", "--samples-per-node", "200", "--seed", "9",
                 "--out", out], capsys)
        assert (workdir / "t1.json").read_bytes() == (workdir / "t2.json").read_bytes()

    def test_env_seed_honored_when_flag_absent(self, workdir, synthetic_spec,
                                               capsys, monkeypatch):
        run(["fit-gmm", "--data", "train.csv", "--k", "2", "--seed", "0",
             "--out", "gmm.json"], capsys)
        run(["extract", "--gmm", "gmm.json", "--blackbox", "synthetic:bb.json",
             "--max-nodes", "5", "--samples-per-node", "200", "--seed", "4",
             "--out", "flagged.json"], capsys)
        monkeypatch.setenv("EXTRACT_SEED", "4")
        run(["extract", "--gmm", "gmm.json", "--blackbox", "synthetic:bb.json",
             "--max-nodes", "5", "--samples-per-node", "200",
             "--out", "envseed.json"], capsys)
        assert (workdir / "flagged.json").read_bytes() == (workdir / "envseed.json").read_bytes()


class TestConfigFile:
    def test_flags_override_config(self, workdir, synthetic_spec, capsys):
        (workdir / "cfg.txt").write_text("seed=5\nk=2\n", encoding="utf-8")
        code, _, err = run(["fit-gmm", "--data", "train.csv", "--config", "cfg.txt",
                            "--k", "1", "--out", "g.json"], capsys)
        assert code == 0
        echoed = json.loads(err.splitlines()[0])
        assert echoed["k"] == "1"      # flag wins
        assert echoed["seed"] == 5     # config fills the gap

    def test_unknown_config_key_rejected(self, workdir, synthetic_spec, capsys):
        (workdir / "cfg.txt").write_text("bogus=1\n", encoding="utf-8")
        code, _, _ = run(["fit-gmm", "--data", "train.csv", "--config", "cfg.txt",
                          "--out", "g.json"], capsys)
        assert code == 1


class TestExperimentCommand:
    def test_tiny_synthetic_curve(self, workdir, capsys):
        code, out, _ = run(["experiment", "fidelity-curve", "--task", "synthetic-rf",
                            "--sizes", "3", "--seeds", "1",
                            "--algorithms", "ours,cart",
                            "--samples-per-node", "100",
                            "--out", "rows.csv"], capsys)
        assert code == 0
        text = (workdir / "rows.csv").read_text()
        assert text.splitlines()[0] == "algorithm,size,seed,fidelity_acc,fidelity_f1,budget,wall_ms"
        assert len(text.splitlines()) == 3
