import json

import numpy as np
import pytest

from fastuss.cli import main
from fastuss.io import read_wav, write_wav


@pytest.fixture
def mixture(tmp_path):
    path = tmp_path / "mix.wav"
    write_wav(path, np.random.default_rng(0).uniform(-0.5, 0.5, 1600).astype(np.float32), 8000)
    return path


def test_masks_prints_blocks(capsys):
    assert main(["masks", "--variant", "CAUSAL", "-N", "2", "-T", "3"]) == 0
    assert capsys.readouterr().out.split("\n")[:6] == ["11000", "11000", "", "11100", "11110", "11111"]


def test_profile_report_and_json(capsys):
    assert main(["profile", "--preset", "ID7"]) == 0
    assert "total" in capsys.readouterr().out
    assert main(["profile", "--preset", "ID9", "--json", "--duration", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["duration_s"] == 2.0 and d["macs_total"] > 0


def test_profile_id_table(capsys):
    assert main(["profile", "--table1"]) == 0
    out = capsys.readouterr().out
    for pid in ("ID1", "ID4", "ID7P", "ID9"):
        assert f"\n{pid} " in out


def test_profile_css_table(capsys):
    assert main(["profile", "--table2"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 5


def test_profile_breakdown_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["profile", "--breakdown", "--durations", "1,5", "--csv", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "duration_s,conv_share,attn_share"
    assert len(out.read_text().splitlines()) == 3


def test_run_writes_outputs_and_manifest(mixture, tmp_path, capsys):
    out_dir = tmp_path / "out"
    rc = main(["run", "--preset", "TOY", "--input", str(mixture), "--prompts", "Speech,Bass", "--output-dir", str(out_dir)])
    assert rc == 0
    for name in ("mix.0.Speech.wav", "mix.1.Bass.wav"):
        y, sr = read_wav(out_dir / name)
        assert sr == 8000 and len(y) == 1600
    manifest = json.loads((out_dir / "mix.manifest.json").read_text())
    assert manifest["prompts"] == ["Speech", "Bass"] and manifest["seed"] == 0 and manifest["mac_estimate"] > 0


def test_run_is_deterministic(mixture, tmp_path):
    for d in ("a", "b"):
        main(["run", "--preset", "TOY", "--input", str(mixture), "--prompts", "SFX", "--output-dir", str(tmp_path / d)])
    assert (tmp_path / "a" / "mix.0.SFX.wav").read_bytes() == (tmp_path / "b" / "mix.0.SFX.wav").read_bytes()


def test_run_streaming_and_chunked(mixture, tmp_path, capsys):
    common = ["run", "--input", str(mixture), "--prompts", "Speech", "--output-dir", str(tmp_path)]
    assert main(common + ["--preset", "TOY-CAUSAL", "--streaming"]) == 0
    assert main(common + ["--preset", "TOY", "--chunk", "0.1", "--overlap", "0.5"]) == 0
    assert "chunks of 800 samples" in capsys.readouterr().out
    assert main(common + ["--preset", "TOY", "--streaming"]) == 2


def test_run_with_saved_weights(mixture, tmp_path):
    wpath = tmp_path / "w.ftss"
    assert main(["init-weights", "--preset", "TOY", "--seed", "4", "--out", str(wpath)]) == 0
    base = ["run", "--input", str(mixture), "--prompts", "Speech", "--weights", str(wpath), "--strict"]
    assert main(base + ["--preset", "TOY", "--output-dir", str(tmp_path / "a")]) == 0
    assert main(base + ["--preset", "TOY-INDALL", "--output-dir", str(tmp_path / "b")]) == 2


def test_exit_codes_for_bad_input(mixture, tmp_path, capsys):
    assert main(["run", "--preset", "TOY", "--input", str(tmp_path / "nope.wav"), "--prompts", "Speech"]) == 3
    assert main(["run", "--preset", "TOY", "--input", str(mixture), "--prompts", "Kazoo"]) == 2
    assert main(["run", "--preset", "ID1", "--input", str(mixture), "--prompts", "Speech"]) == 2  # 8 kHz into 48 kHz model
    assert main(["profile", "--preset", "ID99"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_verify_suite(capsys):
    assert main(["verify", "masks"]) == 0
    assert "[PASS] reference matrix CAUSAL" in capsys.readouterr().out
