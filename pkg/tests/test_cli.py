import sys
import pytest
from click.testing import CliRunner
import selbox
from cli import create_cli
from config import get_settings
from models.ground_truth import GroundTruth
from services.normalizer import is_normal_form
from services.parser import load_tbox, parse_tbox


STUDENTS = ("cond 0.2 0.2 CS | Student\ncond 0.8 0.8 UG | CS\n"
            "cond 1 1 Student | CS\ncond 1 1 Student | UG\n")


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def cli():
    return create_cli(get_settings("test"))


def setup_file(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def setup_corpus(tmp_path):
    lines = ["cond 0.5 0.5 M | S"]
    for i in range(4):
        lines += [f"cond 0.3 0.3 H{i} | S", f"cond 0.6 0.6 H{i} | (and M S)"]
    return setup_file(tmp_path, "corpus.tbox", "\n".join(lines) + "\n")


def test_gen_is_deterministic(runner, cli, tmp_path):
    args = ["gen", "--concepts", "4", "--roles", "0", "--domain", "20", "--seed", "1"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0
    assert first.output == second.output
    assert all(line.startswith("cond ") for line in first.output.splitlines())
    out = tmp_path / "gen.tbox"
    gt = tmp_path / "gt.json"
    result = runner.invoke(cli, ["--seed", "1", "gen", "--concepts", "4", "--roles", "0", "--domain", "20",
                                 "-o", str(out), "--ground-truth", str(gt)])
    assert result.exit_code == 0
    assert out.read_text(encoding="utf-8") == first.output
    truth = GroundTruth.load(gt)
    assert all(truth.satisfies(c) for c in load_tbox(out))


def test_stats_and_normalize(runner, cli, tmp_path):
    result = runner.invoke(cli, ["stats", setup_corpus(tmp_path)])
    assert result.exit_code == 0
    assert "conditionals\t9" in result.output
    assert "pnf2\t0.4444" in result.output
    # (H | M ⊓ S) 的体不是名称
    assert "normal_form\tfalse" in result.output
    assert "safe\tn/a" in result.output
    src = setup_file(tmp_path, "raw.tbox", "cond 0.4 0.6 (and A B) | C\n")
    nf = tmp_path / "raw.nf.tbox"
    result = runner.invoke(cli, ["normalize", src, "-o", str(nf)])
    assert result.exit_code == 0
    assert "_N0" in nf.read_text(encoding="utf-8")
    assert is_normal_form(load_tbox(nf, allow_reserved=True))
    result = runner.invoke(cli, ["stats", str(nf)])
    assert result.exit_code == 0
    assert "normal_form\ttrue" in result.output
    assert "safe\ttrue" in result.output
    assert runner.invoke(cli, ["normalize", str(nf)]).exit_code == 1
    result = runner.invoke(cli, ["stats", src])
    assert "safe\tn/a" in result.output


def test_queryset(runner, cli, tmp_path):
    q, tr = tmp_path / "q.txt", tmp_path / "train.tbox"
    result = runner.invoke(cli, ["queryset", setup_corpus(tmp_path), "--fraction", "0.5", "--seed", "2",
                                 "-o", str(q), "--train-out", str(tr)])
    assert result.exit_code == 0
    assert "queries\t2" in result.output
    assert len(load_tbox(tr)) == 7
    assert q.read_text(encoding="utf-8").startswith("query M ")


def test_pmp_command(runner, cli, tmp_path):
    corpus = setup_corpus(tmp_path)
    result = runner.invoke(cli, ["pmp", corpus, "--query", "H0 | S"])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0].startswith("M\t")
    assert [float(x) for x in lines[-1].split("\t")[1:]] == pytest.approx([0.3, 0.8])
    assert runner.invoke(cli, ["pmp", corpus, "--query", "M | S"]).exit_code == 1
    assert runner.invoke(cli, ["pmp", corpus, "--query", "H0 |"]).exit_code == 1


def test_oracle_command(runner, cli, tmp_path):
    kb = setup_file(tmp_path, "students.tbox", STUDENTS)
    result = runner.invoke(cli, ["oracle", kb, "--query", "UG | Student"])
    assert result.exit_code == 0
    assert [float(x) for x in result.output.split()] == pytest.approx([0.16, 0.96], abs=1e-9)
    result = runner.invoke(cli, ["oracle", kb, "--query", "UG | Student", "--brute-force", "5"])
    assert result.output.strip() == "VACUOUS"
    bad = setup_file(tmp_path, "bad.tbox", "cond 1 1 A | top\ncond 0 0 A | top\n")
    assert runner.invoke(cli, ["oracle", bad, "--query", "A | A"]).output.strip() == "INCONSISTENT"
    roles = setup_file(tmp_path, "roles.tbox", "cond 1 1 (some r B) | A\n")
    assert runner.invoke(cli, ["oracle", roles, "--query", "B | A"]).exit_code == 1
    assert runner.invoke(cli, ["oracle", kb, "--query", "UG | Student", "--brute-force", "6"]).exit_code == 2


def test_train_infer_and_emb_error(runner, cli, tmp_path):
    kb = setup_file(tmp_path, "kb.tbox", "cond 1 1 B | A\ncond 0.5 0.5 C | A\n")
    out = tmp_path / "emb"
    result = runner.invoke(cli, ["train", kb, "-o", str(out), "--ensemble", "2", "--epochs", "2", "--dim", "2",
                                 "--seed", "4"])
    assert result.exit_code == 0
    assert sorted(p.name for p in out.iterdir()) == ["seed_4.json", "seed_5.json"]
    paths = [str(out / "seed_4.json"), str(out / "seed_5.json")]
    result = runner.invoke(cli, ["infer", *paths, "--query", "C | A"])
    assert result.exit_code == 0
    last = result.output.splitlines()[-1].split("\t")
    assert last[0] == "interval"
    lower, upper = float(last[1]), float(last[2])
    assert 0.0 <= lower <= upper <= 1.0
    csv = tmp_path / "emb.csv"
    result = runner.invoke(cli, ["emb-error", kb, *paths, "--csv", str(csv)])
    assert result.exit_code == 0
    assert csv.read_text(encoding="utf-8").startswith("metric,total")
    assert runner.invoke(cli, ["infer", *paths, "--query", "D | A"]).exit_code == 1


def test_train_rejects_non_normal_input(runner, cli, tmp_path):
    raw = setup_file(tmp_path, "raw.tbox", "cond 0.4 0.6 (and A B) | C\n")
    out = str(tmp_path / "emb")
    assert runner.invoke(cli, ["train", raw, "-o", out, "--epochs", "1"]).exit_code == 1
    result = runner.invoke(cli, ["train", raw, "-o", out, "--epochs", "1", "--normalize"])
    assert result.exit_code == 0
    assert runner.invoke(cli, ["train", raw, "-o", out, "--epochs", "0", "--normalize"]).exit_code == 1


def test_eval_command(runner, cli, tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(cli, ["eval", setup_corpus(tmp_path), "-o", str(out), "--ensemble", "2",
                                 "--epochs", "2", "--dim", "2", "--fraction", "0.5"])
    assert result.exit_code == 0
    assert (out / "metrics.csv").exists()
    assert (out / "summary.txt").read_text(encoding="utf-8").startswith("tbox: ")


def test_main_maps_usage_errors_to_one(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["selbox", "no-such-command"])
    assert selbox.main() == 1
    monkeypatch.setattr(sys, "argv", ["selbox", "--env", "test", "oracle", "missing.tbox", "--query", "A | B"])
    assert selbox.main() == 1
