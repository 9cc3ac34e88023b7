from __future__ import annotations

import csv

import numpy as np
import pytest
from conftest import linear_displacement, random_tensors, smooth_image
from PIL import Image

from orchestration_cli import __version__, pipeline
from orchestration_cli.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main, parse_levels
from orchestration_cli.pipeline import compare_modes, input_fingerprint
from orchestration_cli.reports import read_report, summarize_rows
from phantom_generation import (
    GroundTruthError,
    PhantomKind,
    PhantomSpec,
    make_ground_truth_svf,
    make_phantom,
    make_registration_pair,
)
from registration_metrics.snapshot import DEFAULT_TILE_PX
from velocity_optimization import RegistrationConfig, RegistrationInputs
from volume_io import (
    GridSpec,
    LabelVolume,
    ScalarVolume,
    VectorField,
    VectorKind,
    VolumeKind,
    load_volume,
    save_volume,
)

COMMANDS = ("register", "warp", "exp", "jacobian", "fa", "phantom", "metrics", "snapshot", "compare", "summarize")
FAST_FLAGS = ["--levels", "3", "--iterations", "2"]


@pytest.fixture
def phantom_pair(tmp_path):
    prefix = tmp_path / "ph"
    code = main(["-q", "phantom", "--size", "10", "--seed", "3", "--max-displacement", "1.0",
                 "--out-prefix", str(prefix)])
    assert code == EXIT_OK
    return {name: tmp_path / f"ph_{name}.nii.gz" for name in (
        "t2w", "dti", "labels", "moving_t2w", "moving_dti", "moving_labels", "v_true", "phi_true")}


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_has_help(command, capsys):
    assert main([command, "--help"]) == EXIT_OK
    assert "usage" in capsys.readouterr().out


def test_version_flag(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_missing_command_and_bad_flags_are_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["register", "--fixed-t2w", "a.nii.gz"]) == EXIT_USAGE
    assert main(["warp", "--in", "a", "--field", "b", "--out", "c", "--type", "vector"]) == EXIT_USAGE


def test_parse_levels_accepts_both_forms():
    assert parse_levels("6x6x6,12x12x12") == ((6, 6, 6), (12, 12, 12))
    assert parse_levels("6,12") == ((6, 6, 6), (12, 12, 12))


def test_tensor_flags_must_come_in_pairs(phantom_pair, tmp_path):
    code = main(["register", "--fixed-t2w", str(phantom_pair["t2w"]), "--moving-t2w", str(phantom_pair["moving_t2w"]),
                 "--fixed-dti", str(phantom_pair["dti"]), "--out-dir", str(tmp_path / "run")])
    assert code == EXIT_USAGE
    assert not (tmp_path / "run").exists()


def test_register_writes_outputs_and_reuses(phantom_pair, tmp_path, capsys):
    out_dir = tmp_path / "run"
    argv = ["-q", "register",
            "--fixed-t2w", str(phantom_pair["t2w"]), "--moving-t2w", str(phantom_pair["moving_t2w"]),
            "--fixed-dti", str(phantom_pair["dti"]), "--moving-dti", str(phantom_pair["moving_dti"]),
            "--out-dir", str(out_dir), *FAST_FLAGS]
    assert main(argv) == EXIT_OK
    for name in ("phi", "velocity", "warped_t2w", "warped_dti"):
        assert (out_dir / f"{name}.nii.gz").exists()

    manifest = read_report(out_dir / "manifest.txt")
    assert len(manifest["fingerprint"]) == 64
    assert manifest["provenance.alpha"] == "published"
    assert manifest["provenance.iterations"] == "assumed"
    assert manifest["cfg.levels"] == "3x3x3"
    assert float(manifest["final.total"]) <= float(manifest["initial.total"])

    trace = (out_dir / "loss_trace.txt").read_text().splitlines()
    assert trace[0].startswith("level=1 iter=0 event=initial")
    assert load_volume(out_dir / "velocity.nii.gz", VolumeKind.VECTOR).kind is VectorKind.VELOCITY

    capsys.readouterr()
    assert main(argv + ["--reuse"]) == EXIT_OK
    assert "reused" in capsys.readouterr().out
    assert main(argv + ["--reuse", "--alpha", "0.5"]) == EXIT_OK
    assert "wrote" in capsys.readouterr().out


def test_fingerprint_tracks_params_and_bytes(tmp_path):
    a = tmp_path / "a.bin"
    a.write_bytes(b"one")
    first = input_fingerprint([a, None], {"cfg.alpha": 1.0})
    assert first == input_fingerprint([a, None], {"cfg.alpha": 1.0})
    assert first != input_fingerprint([a, None], {"cfg.alpha": 0.5})
    a.write_bytes(b"two")
    assert first != input_fingerprint([a, None], {"cfg.alpha": 1.0})


def test_warp_by_zero_field_is_identity(tmp_path):
    grid = GridSpec(6, 6, 6)
    image = save_volume(smooth_image(grid), tmp_path / "img.nii.gz")
    field = save_volume(VectorField.zeros(grid, VectorKind.DISPLACEMENT), tmp_path / "zero.nii.gz")
    out = tmp_path / "out.nii.gz"
    assert main(["-q", "warp", "--in", str(image), "--field", str(field), "--out", str(out)]) == EXIT_OK
    np.testing.assert_array_equal(
        load_volume(out, VolumeKind.SCALAR).data, load_volume(image, VolumeKind.SCALAR).data
    )


def test_exp_of_zero_velocity_and_jacobian(tmp_path, capsys):
    grid = GridSpec(5, 5, 5)
    velocity = save_volume(VectorField.zeros(grid, VectorKind.VELOCITY), tmp_path / "v.nii.gz")
    phi = tmp_path / "phi.nii.gz"
    assert main(["-q", "exp", "--velocity", str(velocity), "--out", str(phi)]) == EXIT_OK
    loaded = load_volume(phi, VolumeKind.VECTOR)
    assert loaded.kind is VectorKind.DISPLACEMENT
    assert not np.any(loaded.data)

    capsys.readouterr()
    assert main(["-q", "jacobian", "--field", str(phi), "--out", str(tmp_path / "det.nii.gz")]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["min_det=1.0", "folds=0"]


def test_metrics_dice_on_identical_labels(tmp_path, capsys):
    grid = GridSpec(6, 6, 6)
    data = np.zeros(grid.shape, dtype=int)
    data[1:4, 1:4, 1:4] = 1
    data[4:, 4:, 4:] = 2
    path = save_volume(LabelVolume(grid, data), tmp_path / "labels.nii.gz")
    table = tmp_path / "dice.csv"
    assert main(["-q", "metrics", "dice", str(path), str(path), "--table", str(table)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "dice.mean=1.0" in out.splitlines()
    with table.open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["metric"] == "dice"


def test_metrics_needs_two_operands(tmp_path):
    grid = GridSpec(4, 4, 4)
    path = save_volume(smooth_image(grid), tmp_path / "a.nii.gz")
    assert main(["-q", "metrics", "ncc", str(path)]) == EXIT_USAGE


def test_data_errors_exit_three(tmp_path):
    a = save_volume(smooth_image(GridSpec(6, 6, 6)), tmp_path / "a.nii.gz")
    b = save_volume(smooth_image(GridSpec(6, 6, 7)), tmp_path / "b.nii.gz")
    assert main(["-q", "metrics", "ncc", str(a), str(b)]) == EXIT_DATA
    assert main(["-q", "metrics", "ncc", str(a), str(tmp_path / "missing.nii.gz")]) == EXIT_DATA
    flat = save_volume(ScalarVolume(GridSpec(6, 6, 6), np.ones((6, 6, 6))), tmp_path / "flat.nii.gz")
    assert main(["-q", "metrics", "ncc", str(a), str(flat)]) == EXIT_DATA


def test_folding_tensor_warp_is_numerical_failure(tmp_path, rng):
    grid = GridSpec(5, 5, 5)
    tensors = save_volume(random_tensors(grid, rng), tmp_path / "dti.nii.gz")
    field = save_volume(linear_displacement(grid, np.diag([-2.0, 0.0, 0.0])), tmp_path / "fold.nii.gz")
    out = tmp_path / "out.nii.gz"
    argv = ["-q", "warp", "--in", str(tensors), "--field", str(field), "--out", str(out), "--type", "tensor"]
    assert main(argv) == EXIT_NUMERICAL
    assert not out.exists()
    assert main(argv + ["--lenient-folds"]) == EXIT_OK
    assert out.exists()


def test_ground_truth_failure_is_numerical_failure(monkeypatch, tmp_path):
    def give_up(grid, bound, seed):
        raise GroundTruthError(f"could not build a fold-free field with max displacement {bound}")

    monkeypatch.setattr(pipeline, "make_ground_truth_svf", give_up)
    code = main(["-q", "phantom", "--size", "8", "--max-displacement", "9.0",
                 "--out-prefix", str(tmp_path / "ph")])
    assert code == EXIT_NUMERICAL


def test_fa_and_snapshot(phantom_pair, tmp_path):
    fa_out = tmp_path / "fa.nii.gz"
    assert main(["-q", "fa", "--tensor", str(phantom_pair["dti"]), "--out", str(fa_out)]) == EXIT_OK
    fa = load_volume(fa_out, VolumeKind.SCALAR).data
    assert fa.min() >= 0.0 and fa.max() <= 1.0

    png = tmp_path / "panel.png"
    code = main(["-q", "snapshot",
                 "--fixed-t2w", str(phantom_pair["t2w"]), "--moving-t2w", str(phantom_pair["moving_t2w"]),
                 "--fixed-dti", str(phantom_pair["dti"]), "--moving-dti", str(phantom_pair["moving_dti"]),
                 "--labels", str(phantom_pair["labels"]), str(phantom_pair["moving_labels"]),
                 "--outline-label", "1", "--out", str(png)])
    assert code == EXIT_OK
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_snapshot_places_each_warp_in_its_own_column(phantom_pair, tmp_path):
    png = tmp_path / "two_warps.png"
    code = main(["-q", "snapshot",
                 "--fixed-t2w", str(phantom_pair["t2w"]), "--moving-t2w", str(phantom_pair["moving_t2w"]),
                 "--warped-t2w", str(phantom_pair["t2w"]), str(phantom_pair["moving_t2w"]),
                 "--fixed-dti", str(phantom_pair["dti"]), "--moving-dti", str(phantom_pair["moving_dti"]),
                 "--warped-dti", str(phantom_pair["dti"]), str(phantom_pair["moving_dti"]),
                 "--out", str(png)])
    assert code == EXIT_OK
    with Image.open(png) as panel:
        assert panel.size == (4 * DEFAULT_TILE_PX, 2 * DEFAULT_TILE_PX)
        rgb = np.asarray(panel.convert("L"))
    # third column renders the fixed image again
    assert np.array_equal(rgb[:, 2 * DEFAULT_TILE_PX:3 * DEFAULT_TILE_PX], rgb[:, :DEFAULT_TILE_PX])


def test_compare_writes_three_rows(phantom_pair, tmp_path):
    table = tmp_path / "compare.csv"
    report = tmp_path / "compare.txt"
    code = main(["-q", "compare",
                 "--fixed-t2w", str(phantom_pair["t2w"]), "--moving-t2w", str(phantom_pair["moving_t2w"]),
                 "--fixed-dti", str(phantom_pair["dti"]), "--moving-dti", str(phantom_pair["moving_dti"]),
                 "--fixed-labels", str(phantom_pair["labels"]), "--moving-labels", str(phantom_pair["moving_labels"]),
                 "--out", str(report), "--table", str(table), *FAST_FLAGS])
    assert code == EXIT_OK
    with table.open() as fh:
        rows = list(csv.DictReader(fh))
    assert [row["mode"] for row in rows] == ["identity", "t2w", "t2w+dti"]
    assert rows[0]["total"] == ""
    flat = read_report(report)
    assert float(flat["identity.min_det"]) == 1.0
    assert "t2w+dti.dice_mean" in flat
    for row in rows:
        assert np.isfinite([float(row[k]) for k in ("fa_ssd", "ncc", "dice_mean", "min_det")]).all()
        assert 0.0 <= float(row["dice_mean"]) <= 1.0
        assert -1.0 <= float(row["ncc"]) <= 1.0
        assert float(row["fa_ssd"]) >= 0.0
    for row in rows[1:]:
        assert float(row["min_det"]) > 0.0
        assert np.isfinite(float(row["total"]))


def _write_compare_table(path, rows):
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["mode", "fa_ssd", "ncc", "dice_mean", "min_det", "total"])
        writer.writeheader()
        writer.writerows(rows)
    return path


def test_summarize_aggregates_modes_across_tables(tmp_path, capsys):
    seed0 = _write_compare_table(tmp_path / "seed0.csv", [
        {"mode": "identity", "fa_ssd": "4.0", "dice_mean": "0.5", "min_det": "1.0", "total": ""},
        {"mode": "t2w", "fa_ssd": "2.0", "dice_mean": "0.7", "min_det": "0.8", "total": "-0.9"},
    ])
    seed1 = _write_compare_table(tmp_path / "seed1.csv", [
        {"mode": "identity", "fa_ssd": "6.0", "dice_mean": "0.5", "min_det": "1.0", "total": ""},
        {"mode": "t2w", "fa_ssd": "4.0", "dice_mean": "", "min_det": "0.7", "total": "-0.8"},
    ])
    out = tmp_path / "summary.csv"
    assert main(["-q", "summarize", str(seed0), str(seed1), "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "identity.n=2" in printed
    assert "identity.fa_ssd_mean=5.0" in printed

    with out.open() as fh:
        summary = {row["mode"]: row for row in csv.DictReader(fh)}
    assert list(summary) == ["identity", "t2w"]
    assert float(summary["identity"]["fa_ssd_std"]) == pytest.approx(np.sqrt(2.0))
    assert float(summary["identity"]["dice_mean_std"]) == 0.0
    assert float(summary["t2w"]["fa_ssd_mean"]) == pytest.approx(3.0)
    # a blank cell is skipped, not read as zero
    assert float(summary["t2w"]["dice_mean_mean"]) == pytest.approx(0.7)
    assert float(summary["t2w"]["dice_mean_std"]) == 0.0


def test_summarize_rows_field_selection_and_errors():
    rows = [{"mode": "t2w", "total": -1.0}, {"mode": "t2w", "total": -3.0}, {"mode": "identity", "total": ""}]
    summary = summarize_rows(rows, ["total"])
    assert summary[0] == {"mode": "t2w", "n": 2, "total_mean": -2.0, "total_std": pytest.approx(np.sqrt(2.0))}
    assert summary[1] == {"mode": "identity", "n": 1, "total_mean": "", "total_std": ""}
    with pytest.raises(ValueError):
        summarize_rows([{"seed": 0}])


def test_summarize_missing_table_is_data_error(tmp_path):
    assert main(["-q", "summarize", str(tmp_path / "absent.csv")]) == EXIT_DATA


@pytest.mark.slow
def test_registration_reduces_fa_error_on_tracts(tmp_path):
    prefix = tmp_path / "tr"
    assert main(["-q", "phantom", "--kind", "tracts", "--size", "24", "--seed", "1",
                 "--max-displacement", "2.0", "--out-prefix", str(prefix)]) == EXIT_OK
    fixed_dti, moving_dti = tmp_path / "tr_dti.nii.gz", tmp_path / "tr_moving_dti.nii.gz"
    out_dir = tmp_path / "run"
    assert main(["-q", "register", "--fixed-t2w", str(tmp_path / "tr_t2w.nii.gz"),
                 "--moving-t2w", str(tmp_path / "tr_moving_t2w.nii.gz"),
                 "--fixed-dti", str(fixed_dti), "--moving-dti", str(moving_dti),
                 "--out-dir", str(out_dir), "--levels", "4,8", "--iterations", "15", "--threads", "2"]) == EXIT_OK

    before = tmp_path / "before.txt"
    after = tmp_path / "after.txt"
    assert main(["-q", "metrics", "fa-ssd", str(fixed_dti), str(moving_dti), "--out", str(before)]) == EXIT_OK
    assert main(["-q", "metrics", "fa-ssd", str(fixed_dti), str(out_dir / "warped_dti.nii.gz"),
                 "--out", str(after)]) == EXIT_OK
    assert float(read_report(after)["fa_ssd"]) < float(read_report(before)["fa_ssd"])


@pytest.mark.slow
def test_tensor_term_wins_on_orientation_contrast_pairs():
    """Over ten seeds the tensor term must beat T2w-only on FA error, and both must raise Dice."""

    cfg = RegistrationConfig(levels=((3, 3, 3), (5, 5, 5)), iterations=8, threads=4)
    grid = GridSpec(20, 20, 20)
    table = []
    for seed in range(10):
        phantom = make_phantom(PhantomSpec(grid=grid, kind=PhantomKind.ORIENTATION_CONTRAST, seed=seed))
        pair = make_registration_pair(phantom, make_ground_truth_svf(grid, 2.0, seed), seed=seed)
        inputs = RegistrationInputs(pair.fixed.t2w, pair.moving.t2w, pair.fixed.dti, pair.moving.dti)
        rows = compare_modes(inputs, cfg, fixed_labels=pair.fixed.labels, moving_labels=pair.moving.labels)
        table.extend({**row, "seed": seed} for row in rows)

    by_mode = {row["mode"]: row for row in summarize_rows(table)}
    fa = {(row["seed"], row["mode"]): row["fa_ssd"] for row in table}
    wins = sum(fa[seed, "t2w+dti"] < fa[seed, "t2w"] for seed in range(10))
    assert wins >= 9
    assert by_mode["t2w"]["dice_mean_mean"] > by_mode["identity"]["dice_mean_mean"]
    assert by_mode["t2w+dti"]["dice_mean_mean"] > by_mode["identity"]["dice_mean_mean"]
    assert by_mode["t2w+dti"]["dice_mean_mean"] >= by_mode["t2w"]["dice_mean_mean"]
