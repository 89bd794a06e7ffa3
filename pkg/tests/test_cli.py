import csv
import json

import numpy as np
import pytest

from passmri import cli, io
from passmri.sampling import LINES, SamplingMask


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SMALL = {"seed": 3, "coils": 2, "phantom": {"n": 3, "height": 16, "width": 16}, "mask": {"strategy": "no_learn", "R": 4}}


def test_phantom_command_counts(tmp_path):
    cfg = write_config(tmp_path / "c.json", SMALL)
    assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    out = tmp_path / "a"
    assert len(list(out.glob("gt_*.c128"))) == 3
    assert len(list(out.glob("boxes_*.json"))) == 3
    assert len(list(out.glob("gt_*.pgm"))) == 3
    assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for f in out.glob("gt_*.c128"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_zero_lesion_box_file(tmp_path):
    cfg = dict(SMALL, phantom={"specs": [{"height": 16, "width": 16}]})
    assert cli.main(["phantom", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "boxes_s000.json").read_text()) == []


def test_phantom_dir_roundtrip(tmp_path):
    cfg = write_config(tmp_path / "c.json", SMALL)
    cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "ph")])
    direct = cli.build_cases(cli.read_config(cfg))
    loaded = cli.build_cases(cli.parse_config(dict(SMALL, phantom={"dir": str(tmp_path / "ph")})))
    assert [c.sid for c in loaded] == [c.sid for c in direct]
    for a, b in zip(direct, loaded):
        assert a.gt.tobytes() == b.gt.tobytes() and a.boxes == b.boxes
        np.testing.assert_array_equal(a.coils, b.coils)


def test_from_file_full_mask_identity_gives_sentinel(tmp_path):
    full = SamplingMask(LINES, np.zeros((16, 16), bool), np.ones((16, 16), bool))
    (tmp_path / "full.json").write_text(full.to_json())
    cfg = dict(
        SMALL,
        mask={"strategy": "from_file", "R": 4, "path": str(tmp_path / "full.json")},
        recon={"denoiser": {"kind": "identity"}},
    )
    assert cli.main(["run", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "metrics.csv")
    assert len(rows) == 3
    assert all(float(r["psnr"]) == 300.0 for r in rows)


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path / "c.json", SMALL)
    for name, workers in (("a", "1"), ("b", "2")):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name), "--workers", workers]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    rows = read_rows(a / "metrics.csv")
    assert list(rows[0]) == list(cli.METRIC_FIELDS)
    assert [r["subject"] for r in rows] == ["s000", "s001", "s002"]


def test_seed_flag_changes_suite(tmp_path):
    cfg = write_config(tmp_path / "c.json", SMALL)
    cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    assert (tmp_path / "a" / "gt_s000.c128").read_bytes() != (tmp_path / "b" / "gt_s000.c128").read_bytes()


def test_noise_is_seeded(tmp_path):
    cfg = cli.parse_config(dict(SMALL, noise={"sigma": 0.01}))
    case = cli.build_cases(cfg)[0]
    a = cli.simulate_kspace(cfg, case, 0)
    assert a.tobytes() == cli.simulate_kspace(cfg, case, 0).tobytes()
    assert a.tobytes() != cli.simulate_kspace(cfg, case, 1).tobytes()
    clean = cli.simulate_kspace(cfg.replace(noise_sigma=0.0), case, 0)
    assert not np.allclose(a, clean)


def test_ablate_grid_row_count(tmp_path):
    cfg = dict(
        SMALL,
        coils=1,
        phantom={"n": 5, "height": 16, "width": 16},
        mask={"R": 4, "acs_fraction": 0.125, "train_subjects": 1},
        personalize={"kind": "greedy"},
        recon={"K": 1, "n_inner": 1},
        ablate={"R": [4, 8]},
    )
    # R = 8 leaves no budget beyond the ACS lines, which the optimizers report as a warning
    with pytest.warns(RuntimeWarning):
        code = cli.main(["ablate", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "ablation.csv")
    assert len(rows) == 2 * 3 * 2 * 5
    assert list(rows[0]) == list(cli.ABLATE_FIELDS)
    aware = [r for r in rows if r["mask_strategy"] == "anomaly_aware"]
    assert all(r["flag"].startswith("surrogate") for r in aware)
    assert all(r["flag"] == "" for r in rows if r["mask_strategy"] != "anomaly_aware")


def test_grappa_command(tmp_path):
    cfg = dict(SMALL, coils=8, phantom={"n": 1, "height": 32, "width": 32}, mask={"R": 2, "acs_fraction": 0.5})
    assert cli.main(["grappa", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "grappa.csv")
    by = {r["method"]: float(r["psnr"]) for r in rows}
    assert by["grappa"] > by["zero_filled"]


def test_metrics_command(tmp_path, capsys):
    ref = np.outer(np.hanning(16), np.hanning(16))
    io.write_array(tmp_path / "ref", ref)
    io.write_array(tmp_path / "x", ref)
    (tmp_path / "boxes.json").write_text(json.dumps([{"row_min": 4, "row_max": 10, "col_min": 4, "col_max": 10}]))
    code = cli.main(
        ["metrics", "--recon", str(tmp_path / "x.c128"), "--ref", str(tmp_path / "ref.c128"),
         "--boxes", str(tmp_path / "boxes.json"), "--out", str(tmp_path)]
    )
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["psnr"] == 300.0 and result["lf_psnr"] == 300.0
    assert json.loads((tmp_path / "metrics.json").read_text()) == result


def test_exit_codes(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", dict(SMALL, unknown=1))
    assert cli.main(["run", "--config", bad]) == cli.EXIT_CONFIG
    assert "unknown" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    (tmp_path / "junk.json").write_text("{not json")
    assert cli.main(["run", "--config", str(tmp_path / "junk.json")]) == cli.EXIT_CONFIG
    low_r = write_config(tmp_path / "r.json", dict(SMALL, mask={"R": 1}))
    assert cli.main(["run", "--config", low_r]) == cli.EXIT_CONFIG
    nofile = write_config(tmp_path / "f.json", dict(SMALL, mask={"strategy": "from_file", "path": "/nonexistent"}))
    assert cli.main(["run", "--config", nofile]) == cli.EXIT_CONFIG


def test_grappa_random_mask_error_surfaces(tmp_path, capsys):
    cfg = dict(SMALL, method="grappa", mask={"strategy": "no_learn", "R": 2})
    code = cli.main(["run", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    assert "not equispaced" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from passmri.operators import NumericalError

    def boom(*a, **k):
        raise NumericalError("CG produced a non-finite residual")

    monkeypatch.setattr(cli, "reconstruct", boom)
    cfg = write_config(tmp_path / "c.json", SMALL)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_NUMERICAL
    assert "non-finite" in capsys.readouterr().err


def test_workers_env(monkeypatch):
    cfg = cli.parse_config(SMALL)
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli.resolve_workers(cfg) == 3
    assert cli.resolve_workers(cfg, 2) == 2
    monkeypatch.setenv(cli.WORKERS_ENV, "x")
    with pytest.raises(cli.ConfigError):
        cli.resolve_workers(cfg)


def test_schema_rejects_unknown_nested_keys():
    with pytest.raises(cli.ConfigError, match="recon"):
        cli.parse_config(dict(SMALL, recon={"mu3": 1.0}))
