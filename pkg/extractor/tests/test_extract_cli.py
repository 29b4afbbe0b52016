"""Command-line behavior of the `extract` entry point."""

import os
import subprocess
import sys

import numpy as np
from PIL import Image

from dcftextract import read_container
from dcftextract.cli import main


def _png(path, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def test_bad_settings_exit_two(tmp_path, capsys):
    img = _png(tmp_path / "a.png")
    out = tmp_path / "out"
    assert _run(img, "--encoder", "toy-unet", "--timestep", "2000",
                "--out", out) == 2
    assert _run(img, "--encoder", "resnet50", "--out", out) == 2
    err = capsys.readouterr().err
    assert "timestep" in err and "unknown encoder" in err


def test_empty_directory_exits_one(tmp_path, capsys):
    empty = tmp_path / "imgs"
    empty.mkdir()
    assert _run(empty, "--encoder", "toy-vit", "--size", "64",
                "--out", tmp_path / "out") == 1
    assert "no images" in capsys.readouterr().err


def test_single_file_extraction(tmp_path):
    img = _png(tmp_path / "a.png")
    out = tmp_path / "out"
    assert _run(img, "--encoder", "toy-vit", "--size", "64", "--out", out) == 0
    feats = read_container(str(out / "a.dcft"))
    assert feats.shape == (2, 2, 48)
    assert (out / "a.json").exists()


def test_directory_batch_skips_non_images(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    for i, name in enumerate(("a.png", "b.jpg", "c.webp")):
        _png(imgs / name, seed=i)
    (imgs / "notes.txt").write_text("ignored")
    out = tmp_path / "out"
    assert _run(imgs, "--encoder", "toy-unet", "--size", "64", "--seed", "4",
                "--out", out) == 0
    assert sorted(p for p in os.listdir(out) if p.endswith(".dcft")) == \
        ["a.dcft", "b.dcft", "c.dcft"]
    assert not (out / "notes.dcft").exists()


def test_reruns_are_byte_identical(tmp_path):
    img = _png(tmp_path / "a.png")
    blobs = []
    for d in ("o1", "o2"):
        out = tmp_path / d
        assert _run(img, "--encoder", "toy-unet", "--size", "64",
                    "--timestep", "50", "--seed", "7", "--out", out) == 0
        blobs.append(open(out / "a.dcft", "rb").read())
    assert blobs[0] == blobs[1]


def test_one_bad_file_does_not_sink_the_batch(tmp_path, capsys):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    _png(imgs / "good.png")
    (imgs / "broken.png").write_bytes(b"not a png")
    out = tmp_path / "out"
    assert _run(imgs, "--encoder", "toy-vit", "--size", "64", "--out", out) == 1
    assert (out / "good.dcft").exists()
    assert not (out / "broken.dcft").exists()
    assert "broken.png" in capsys.readouterr().err


def test_console_script_is_installed():
    proc = subprocess.run([sys.executable, "-m", "dcftextract.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "DCFT" in proc.stdout
