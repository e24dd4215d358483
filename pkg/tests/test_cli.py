import json

import numpy as np
import pytest
from PIL import Image

from supervec.cli import (
    EXIT_BUDGET,
    EXIT_CHECK_FAILED,
    EXIT_GAMMA,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_OUTPUT,
    main,
)
from supervec.experiments import four_region_image
from supervec.raster import to_uint8
from supervec.svgio import from_svg


@pytest.fixture
def png(tmp_path):
    path = tmp_path / "in.png"
    Image.fromarray(to_uint8(four_region_image(24))).save(path)
    return path


def records(out: str) -> list:
    return [json.loads(line) for line in out.splitlines() if line.strip()]


def test_missing_input(tmp_path, capsys):
    assert main(["vectorize", str(tmp_path / "nope.png")]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_unreadable_input(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_text("not an image")
    assert main(["vectorize", str(bad)]) == EXIT_INPUT


def test_unwritable_output(png, tmp_path):
    assert main(["vectorize", str(png), "-o", str(tmp_path / "missing" / "out.svg")]) == EXIT_OUTPUT


def test_budget_below_superpixel_count(png, tmp_path):
    assert main(["vectorize", str(png), "-o", str(tmp_path / "o.svg"), "--paths", "2",
                 "--superpixels", "4"]) == EXIT_BUDGET


def test_gradcheck_rejects_zero_gamma(capsys):
    assert main(["gradcheck", "--gamma", "0", "--report-format", "json-lines"]) == EXIT_GAMMA
    out = records(capsys.readouterr().out)
    assert out[-1]["name"] == "error" and out[-1]["pass"] is False


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["vectorize"])
    assert exc.value.code == 2


def test_small_vectorize_run(png, tmp_path, capsys):
    out = tmp_path / "out.svg"
    code = main(["vectorize", str(png), "-o", str(out), "--paths", "4", "--coarse-steps", "100",
                 "--finetune-steps", "5", "--preview", "--report-format", "json-lines"])
    assert code in (EXIT_OK, EXIT_CHECK_FAILED)
    recs = records(capsys.readouterr().out)
    for r in recs:
        assert set(r) == {"name", "value", "threshold", "pass"}
    names = {r["name"] for r in recs}
    assert {"visible_paths", "superpixels", "seconds", "mse", "psnr", "ssim"} <= names
    visible = next(r for r in recs if r["name"] == "visible_paths")
    assert visible["value"] <= 4 and visible["pass"]
    assert len(from_svg(out.read_text())) == visible["value"]
    assert (tmp_path / "out.preview.png").exists()


def test_text_report(png, tmp_path, capsys):
    main(["vectorize", str(png), "-o", str(tmp_path / "o.svg"), "--paths", "1", "--coarse-steps", "20",
          "--finetune-seconds", "0"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[0] == "visible_paths" and lines[0].split()[-1] in ("PASS", "FAIL")


def test_dpw_demo_outputs(tmp_path, capsys):
    out = tmp_path / "demo"
    assert main(["dpw-demo", "-o", str(out), "--snapshot-every", "250", "--report-format", "json-lines"]) == EXIT_OK
    recs = {r["name"]: r for r in records(capsys.readouterr().out)}
    assert recs["local_l2_area_ratio"]["pass"] and recs["local_dpw_iou"]["pass"]
    assert recs["average_softdtw_events"]["value"] >= 1 and recs["average_dpw_events"]["value"] == 0
    assert (out / "average_dpw_alignment.csv").read_text().startswith("target,gen0")
    assert list(out.glob("local_l2_*.png")) and list(out.glob("local_dpw_*.png"))
