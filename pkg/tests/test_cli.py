import json
import os
from pathlib import Path

import numpy as np
import pytest

from spectracast.cli import main
from spectracast.corpus import load_dataset


def run(argv):
    return main(argv)


def test_help_touches_no_files(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    before = set(os.listdir(tmp_path))
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert set(os.listdir(tmp_path)) == before
    assert "synth" in capsys.readouterr().out


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_synth_categorize_stats_flow(tmp_path, capsys):
    ds = tmp_path / "ds.jsonl"
    assert run(["--seed", "1", "synth", "--n", "120", "--out", str(ds)]) == 0
    records = load_dataset(ds)
    assert len(records) == 120

    assert run(["categorize", "--input", str(ds)]) == 0
    out = capsys.readouterr().out
    assert "thresholds" in out
    recat = load_dataset(ds)
    proportions = {}
    for r in recat:
        proportions[r.category.value] = proportions.get(r.category.value, 0) + 1
    assert abs(proportions.get("steady", 0) / 120 - 0.6) < 0.08

    assert run(["stats", "--input", str(ds)]) == 0
    assert "Records" in capsys.readouterr().out


def test_synth_deterministic_under_seed(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    run(["--seed", "9", "synth", "--n", "12", "--out", str(a)])
    run(["--seed", "9", "synth", "--n", "12", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_caption_and_analyze_and_retrieve(tmp_path, capsys):
    ds = tmp_path / "ds.jsonl"
    run(["--seed", "3", "synth", "--n", "12", "--out", str(ds)])
    captioned = tmp_path / "cap.jsonl"
    assert (
        run(["--seed", "3", "caption", "--input", str(ds), "--out", str(captioned),
             "--backends", "mock:3", "--rounds", "2"])
        == 0
    )
    records = load_dataset(captioned)
    assert all(len(r.captions) == 3 for r in records)
    assert all(r.accepted_caption is not None for r in records)

    capsys.readouterr()  # drain earlier command output
    assert run(["analyze", "--input", str(captioned), "--index", "0"]) == 0
    facts = json.loads(capsys.readouterr().out)
    assert "direction" in facts and "period" in facts

    assert run(["retrieve", "--input", str(captioned)]) == 0
    out = capsys.readouterr().out
    assert "text->series" in out and "series->text" in out


def test_analyze_bad_index_exit_2(tmp_path):
    ds = tmp_path / "ds.jsonl"
    run(["synth", "--n", "3", "--out", str(ds)])
    assert run(["analyze", "--input", str(ds), "--index", "99"]) == 2


def test_missing_input_file_exit_2(tmp_path):
    assert run(["stats", "--input", str(tmp_path / "nope.jsonl")]) == 2


def test_train_generate_evaluate_flow(tmp_path, capsys):
    # miniature end-to-end: tiny corpus, tiny models, few steps
    ds = tmp_path / "ds.jsonl"
    assert run(["--seed", "5", "synth", "--n", "8", "--out", str(ds)]) == 0
    cap = tmp_path / "cap.jsonl"
    assert run(["--seed", "5", "caption", "--input", str(ds), "--out", str(cap),
                "--backends", "mock:1"]) == 0

    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "codec": {"steps": 150},
                "training": {"steps": 40, "k_steps": 50},
                "sampling": {"steps": 10},
            }
        )
    )
    codec_path = tmp_path / "codec.pt"
    assert run(["--config", str(config), "train-codec", "--input", str(cap),
                "--out", str(codec_path)]) == 0

    model_path = tmp_path / "model.pt"
    assert run(["--config", str(config), "--seed", "5", "train", "--input", str(cap),
                "--codec", str(codec_path), "--out", str(model_path)]) == 0

    out_a = tmp_path / "gen_a.jsonl"
    out_b = tmp_path / "gen_b.jsonl"
    caption_text = "stable week with strong daily cycle"
    for out in (out_a, out_b):
        assert run(["--config", str(config), "--seed", "7", "generate",
                    "--checkpoint", str(model_path), "--caption", caption_text,
                    "--out", str(out)]) == 0
    assert out_a.read_text() == out_b.read_text()  # seeded determinism

    assert run(["--seed", "5", "evaluate", "--suite", "gen", "--checkpoint",
                str(model_path), "--input", str(cap), "--samples", "1"]) == 0
    assert "WAPE" in capsys.readouterr().out


def test_evaluate_aaa_untrained_checkpoint_exit_2(tmp_path):
    import torch

    from spectracast.codec import train_codec
    from spectracast.conditioning import SpectralConfig
    from spectracast.corpus import SyntheticSpec, generate_synthetic
    from spectracast.diffusion import DenoiserConfig, SpectralDiffusionGenerator

    series = [generate_synthetic(SyntheticSpec(seed=1, regime="transitional", length=96))]
    codec, _ = train_codec(series, steps=30, seed=0)
    gen = SpectralDiffusionGenerator(
        codec,
        DenoiserConfig(
            n_layers=1, model_dim=32, n_heads=2, ff_dim=64, patch_size=2,
            spectral=SpectralConfig(
                n_bands=2, tokens_per_band=4, model_dim=32, text_dim=64, band_proj_dim=8
            ),
        ),
        seed=0,
    )
    ckpt = tmp_path / "untrained.pt"
    gen.save(ckpt)
    assert run(["evaluate", "--suite", "aaa", "--checkpoint", str(ckpt)]) == 2
