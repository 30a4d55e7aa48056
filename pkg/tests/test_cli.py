import json
import random
import shutil
import zipfile
from pathlib import Path

import pytest
import yaml

from apkgan.cli import build_parser, main, parse_schedule
from apkgan.corpus import CorpusManifest, Origin

FIXTURES = Path(__file__).parent / "fixtures"


def run(*args):
    return main([str(a) for a in args])


def test_parse_schedule():
    assert parse_schedule("n4,n2,n", 10) == (3, 5, 10)
    assert parse_schedule("10,20,40", 99) == (10, 20, 40)
    assert parse_schedule("", 10) is None


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    for cmd in ("convert", "split", "perturb", "synth-corpus", "train-gan", "generate", "fid", "train-clf",
                "evaluate", "experiment", "compare"):
        assert cmd in text


def test_convert_split_perturb(tmp_path, capsys):
    src = tmp_path / "in"
    src.mkdir()
    shutil.copy(FIXTURES / "fixture_1mb.apk", src / "big.apk")
    rng = random.Random(3)
    lines = ["big.apk,malware"]
    for i in range(10):
        with zipfile.ZipFile(src / f"app{i}.apk", "w") as zf:
            zf.writestr("classes.dex", rng.randbytes(4096 + 512 * i))
            zf.writestr("AndroidManifest.xml", b"<manifest/>")
        lines.append(f"app{i}.apk,{'malware' if i % 2 else 'benign'}")
    (tmp_path / "labels.csv").write_text("\n".join(lines) + "\n")
    out = tmp_path / "corpus"
    assert run("convert", "--in", src, "--labels", tmp_path / "labels.csv", "--sizes", "32,64", "--out", out) == 0
    m = CorpusManifest.load(out / "manifest.jsonl")
    assert len(m.records) == 22 and all(r.split is None for r in m.records)
    assert run("split", "--manifest", out / "manifest.jsonl", "--gan-frac", "0.3") == 0
    assert all(r.split is not None for r in CorpusManifest.load(out / "manifest.jsonl").records)
    assert run("perturb", "--manifest", out / "manifest.jsonl", "--kinds", "xor_mask", "--fraction", "1",
               "--out", out / "perturbed.jsonl") == 0
    pm = CorpusManifest.load(out / "perturbed.jsonl")
    assert sum(r.origin is Origin.PERTURBED for r in pm.records) >= 1


def test_error_exit_code(tmp_path, capsys):
    (tmp_path / "in").mkdir()
    (tmp_path / "labels.csv").write_text("missing.apk,malware\n")
    m = tmp_path / "m.jsonl"
    m.write_text("not json\n")
    assert run("split", "--manifest", m) == 2
    assert "error:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth-corpus -> train-gan -> generate -> train-clf -> evaluate with tiny budgets."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert run("synth-corpus", "--n", 40, "--size", 32, "--test-frac", 0.5, "--out", corpus) == 0
    manifest = corpus / "manifest.jsonl"
    assert run("train-gan", "--manifest", manifest, "--class", "malware", "--size", 32, "--epochs", 1,
               "--batch-size", 4, "--out", root / "gan") == 0
    assert run("generate", "--model", root / "gan" / "model.bin", "--n", 40, "--fid-gate", 90,
               "--ref-manifest", manifest, "--fid-dim", 2, "--rounds", 1, "--out", root / "gen") == 0
    assert run("train-clf", "--manifest", manifest, "--synthetic", root / "gen" / "manifest.jsonl",
               "--regime", "model3", "--size", 32, "--epochs", 1, "--out", root / "clf") == 0
    assert run("evaluate", "--model", root / "clf" / "classifier.ckpt", "--manifest", manifest,
               "--out", root / "report.json") == 0
    return root


def test_pipeline_artifacts(pipeline):
    gan = pipeline / "gan"
    assert (gan / "model.bin").exists() and (gan / "train_log.csv").exists()
    header = (gan / "train_log.csv").read_text().splitlines()[0]
    assert header == "epoch,mean_real_score,mean_fake_score,gen_loss,fid_inf"
    gen = CorpusManifest.load(pipeline / "gen" / "manifest.jsonl")
    assert len(gen.records) == 40 and {r.origin for r in gen.records} == {Origin.SYNTHETIC}
    gate = json.loads((pipeline / "gen" / "gate.json").read_text())
    assert set(gate) == {"fid_inf", "accepted", "rounds", "history"}
    assert (pipeline / "clf" / "curve.csv").exists()


def test_report_json_fields(pipeline):
    rep = json.loads((pipeline / "report.json").read_text())
    assert list(rep) == ["accuracy", "precision", "recall", "f1", "specificity", "tp", "fp", "fn", "tn"]
    assert rep["tp"] + rep["fp"] + rep["fn"] + rep["tn"] == 40


def test_fid_command(pipeline, capsys):
    out = pipeline / "fid.csv"
    assert run("fid", "--real", pipeline / "corpus" / "manifest.jsonl", "--fake", pipeline / "gen" / "manifest.jsonl",
               "--label", "malware", "--dim", 2, "--out", out) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "N,resample_mean_fid,resample_std,kind" and rows[-1].startswith("inf,")
    assert len(rows) == 5


def test_experiment_and_compare(tmp_path, capsys):
    cfg = dict(synth_n=20, sizes=[32], test_fraction=0.5, gan_epochs=1, gan_batch_size=2, fid_dim=2,
               n_generate=40, gate_rounds=1, gate_epochs=0, fid_every=0, clf_epochs=1, regimes=["model2"])
    (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
    assert run("experiment", "--config", tmp_path / "exp.yaml", "--out", tmp_path / "run") == 0
    assert "2 completed" in capsys.readouterr().out
    assert run("experiment", "--config", tmp_path / "exp.yaml", "--out", tmp_path / "run", "--resume") == 0
    assert "0 run, 2 reused" in capsys.readouterr().out
    assert run("compare", "--results", tmp_path / "run" / "results.csv", "--out", tmp_path / "cmp.csv") == 0
    assert "1 matched cells" in capsys.readouterr().out


def test_experiment_all_failed_exit(tmp_path, capsys):
    cfg = dict(synth_n=20, sizes=[32], test_fraction=0.5, gan_batch_size=16, regimes=["model2"],
               variants=["wgan-gp"])
    (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
    assert run("experiment", "--config", tmp_path / "exp.yaml", "--out", tmp_path / "run") == 1
