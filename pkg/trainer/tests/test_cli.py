import json

import numpy as np
import pytest

from hicodec import image_io
from hitrainer import load_golden, make_toy_corpus
from hitrainer.cli import main


def test_gradcheck_command(capsys):
    rc = main(["gradcheck", "--crop", "8", "--scales", "2", "--filters", "4",
               "--latent-channels", "3", "--mixture", "2", "--resblocks", "1",
               "--entries", "2", "--report", "json"])
    report = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert report["max_relative_error"] < 1e-3


def test_train_and_export_golden(tmp_path, capsys):
    corpus = str(tmp_path / "corpus")
    make_toy_corpus(corpus, count=4, size=48, seed=0)
    weights = str(tmp_path / "model.hicw")
    rc = main(["train", corpus, weights, "--steps", "5", "--batch", "2",
               "--crop", "16", "--scales", "2", "--filters", "4",
               "--latent-channels", "3", "--mixture", "2", "--resblocks", "1"])
    assert rc == 0
    assert "bpsp" in capsys.readouterr().out

    src = str(tmp_path / "in.ppm")
    img = np.random.default_rng(1).integers(0, 256, (24, 24, 3), dtype=np.uint8)
    image_io.write_ppm(src, img)
    bundle_path = str(tmp_path / "golden.npz")
    rc = main(["export-golden", src, bundle_path, "--weights", weights,
               "--crop", "16"])
    assert rc == 0
    bundle = load_golden(bundle_path)
    assert bundle["crop"].shape == (16, 16, 3)
    assert "container" in bundle and "z1" in bundle


def test_export_golden_rejects_small_input(tmp_path, capsys):
    corpus = str(tmp_path / "corpus")
    make_toy_corpus(corpus, count=2, size=48, seed=0)
    weights = str(tmp_path / "model.hicw")
    main(["train", corpus, weights, "--steps", "1", "--batch", "1",
          "--crop", "16", "--scales", "2", "--filters", "4",
          "--latent-channels", "3", "--mixture", "2", "--resblocks", "1"])
    capsys.readouterr()
    src = str(tmp_path / "tiny.ppm")
    image_io.write_ppm(src, np.zeros((4, 4, 3), dtype=np.uint8))
    rc = main(["export-golden", src, str(tmp_path / "g.npz"),
               "--weights", weights, "--crop", "16"])
    assert rc == 1
