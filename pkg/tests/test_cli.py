import json

import numpy as np
import pytest

from phaserecon.arrayfile import read_array, write_array
from phaserecon.cli import main
from phaserecon.errors import DataError


@pytest.fixture
def sim_setup(tmp_path):
    sim = tmp_path / "sim"
    sim.mkdir()
    cfg = {
        "seed": 17,
        "out": str(sim),
        "coils": 3,
        "phantom": {"kind": "pf-brain-like", "shape": [32, 32],
                    "phase_range": 6.5},
        "sampling": {"poisson": {"accel": 2.0, "calib": 8}},
        "noise_sigma": 0.002,
        "model": {"kind": "partial_fourier"},
    }
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(cfg_path), "--quiet"]) == 0
    return tmp_path, sim, cfg, cfg_path


def _recon_config(tmp_path, sim, outdir, **solver_overrides):
    outdir.mkdir(exist_ok=True)
    solver_cfg = {"outer_iters": 8, "inner_iters": 4, "wrap_count": 4,
                  "wrap_kind": "from-init", "record_history": True}
    solver_cfg.update(solver_overrides)
    cfg = {
        "seed": 17,
        "out": str(outdir),
        "model": {"kind": "partial_fourier"},
        "regularizers": {
            "magnitude": {"kind": "l1-wavelet", "lam": 1e-4,
                          "family": "daub4", "levels": 3},
            "phase": {"kind": "l1-wavelet", "lam": 1e-3,
                      "family": "daub6", "levels": 3},
        },
        "solver": solver_cfg,
        "inputs": {
            "kspace": str(sim / "kspace"),
            "masks": str(sim / "masks"),
            "maps": str(sim / "maps"),
            "truth_magnitude": str(sim / "truth_magnitude"),
            "truth_phase": str(sim / "truth_phase"),
        },
    }
    path = tmp_path / f"rec_{outdir.name}.json"
    path.write_text(json.dumps(cfg))
    return path


def test_arrayfile_roundtrip_bytes(tmp_path):
    rng = np.random.default_rng(0)
    for arr in (rng.standard_normal((3, 5, 4)),
                rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))):
        base = tmp_path / "arr"
        payload = write_array(base, arr, axis_labels=list("abc")[:arr.ndim])
        back, labels = read_array(base)
        assert np.array_equal(back, arr)
        assert labels == list("abc")[:arr.ndim]
        payload2 = write_array(tmp_path / "arr2", back)
        assert payload.read_bytes() == payload2.read_bytes()


def test_arrayfile_truncated_payload_detected(tmp_path):
    base = tmp_path / "arr"
    write_array(base, np.zeros((4, 4)))
    (tmp_path / "arr.bin").write_bytes(b"\x00" * 17)
    with pytest.raises(DataError, match="expected"):
        read_array(base)


def test_simulate_writes_expected_files_and_manifest(sim_setup):
    _, sim, cfg, _ = sim_setup
    for name in ("truth_magnitude", "truth_phase", "maps", "masks", "kspace"):
        assert (sim / f"{name}.json").exists()
        assert (sim / f"{name}.bin").exists()
    manifest = json.loads((sim / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert set(manifest["files"]) == {
        "truth_magnitude", "truth_phase", "maps", "masks", "kspace"}
    assert 1.8 <= manifest["achieved_acceleration"][0] <= 2.2


def test_simulate_manifest_reproducible(sim_setup):
    tmp_path, sim, cfg, cfg_path = sim_setup
    first = (sim / "manifest.json").read_bytes()
    kspace = (sim / "kspace.bin").read_bytes()
    assert main(["simulate", "--config", str(cfg_path), "--quiet"]) == 0
    assert (sim / "manifest.json").read_bytes() == first
    assert (sim / "kspace.bin").read_bytes() == kspace


def test_noiseless_full_sampling_pipeline_high_psnr(tmp_path):
    sim = tmp_path / "sim0"
    sim.mkdir()
    cfg = {
        "seed": 3,
        "out": str(sim),
        "coils": 2,
        "phantom": {"kind": "pf-brain-like", "shape": [32, 32],
                    "phase_range": 1.5},
        "noise_sigma": 0.0,
        "model": {"kind": "partial_fourier"},
    }
    cfg_path = tmp_path / "s.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(cfg_path), "--quiet"]) == 0

    rec = tmp_path / "rec0"
    rec_path = _recon_config(tmp_path, sim, rec, outer_iters=40,
                             inner_iters=10, wrap_count=1)
    cfg2 = json.loads(rec_path.read_text())
    cfg2["regularizers"]["magnitude"]["kind"] = "none"
    cfg2["regularizers"]["phase"]["kind"] = "none"
    rec_path.write_text(json.dumps(cfg2))
    assert main(["reconstruct", "--config", str(rec_path), "--quiet"]) == 0
    report = json.loads((rec / "report.json").read_text())
    assert report["psnr_db"] > 60.0


def test_reconstruct_outputs_and_metrics_crosscheck(sim_setup, capsys):
    tmp_path, sim, _, _ = sim_setup
    rec = tmp_path / "rec"
    rec_path = _recon_config(tmp_path, sim, rec)
    assert main(["reconstruct", "--config", str(rec_path), "--quiet"]) == 0
    report = json.loads((rec / "report.json").read_text())
    assert "psnr_db" in report

    assert main(["metrics", str(sim / "truth_magnitude"),
                 str(rec / "recon_magnitude_abs"), "--quiet",
                 "--out", str(tmp_path / "metrics.json")]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["psnr_db"] == pytest.approx(report["psnr_db"], abs=1e-10)

    hist, _ = read_array(rec / "objective_history")
    assert len(hist) == 2 * 8 * 4
    assert hist.dtype == np.float64


def test_reconstruct_wrap_count_is_one_config_key(sim_setup):
    tmp_path, sim, _, _ = sim_setup
    out1, out8 = tmp_path / "w1", tmp_path / "w8"
    p1 = _recon_config(tmp_path, sim, out1, wrap_count=1)
    p8 = _recon_config(tmp_path, sim, out8, wrap_count=8)
    assert main(["reconstruct", "--config", str(p1), "--quiet"]) == 0
    assert main(["reconstruct", "--config", str(p8), "--quiet"]) == 0
    a, _ = read_array(out1 / "recon_magnitude")
    b, _ = read_array(out8 / "recon_magnitude")
    assert a.shape == b.shape
    assert not np.array_equal(a, b)


def test_reconstruct_deterministic_payloads(sim_setup):
    tmp_path, sim, _, _ = sim_setup
    rec = tmp_path / "det"
    rec_path = _recon_config(tmp_path, sim, rec)
    assert main(["reconstruct", "--config", str(rec_path), "--quiet"]) == 0
    payloads = {p.name: p.read_bytes() for p in rec.glob("*.bin")}
    assert payloads
    assert main(["reconstruct", "--config", str(rec_path), "--quiet"]) == 0
    for p in rec.glob("*.bin"):
        assert p.read_bytes() == payloads[p.name], p.name


def test_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1, "unexpected": True}))
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_missing_output_dir_exits_3(tmp_path):
    cfg = {
        "seed": 1, "out": str(tmp_path / "missing_dir"), "coils": 1,
        "phantom": {"kind": "pf-brain-like", "shape": [32, 32],
                    "phase_range": 1.0},
        "model": {"kind": "partial_fourier"},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path)]) == 3


def test_missing_data_exits_3(tmp_path, sim_setup):
    tmp_path2, sim, _, _ = sim_setup
    rec = tmp_path2 / "rec_missing"
    rec_path = _recon_config(tmp_path2, sim, rec)
    cfg = json.loads(rec_path.read_text())
    cfg["inputs"]["kspace"] = str(tmp_path2 / "nope")
    rec_path.write_text(json.dumps(cfg))
    assert main(["reconstruct", "--config", str(rec_path)]) == 3


def test_render_constant_image_uniform(tmp_path):
    write_array(tmp_path / "const", np.full((8, 8), 3.7))
    out = tmp_path / "c.pgm"
    assert main(["render", str(tmp_path / "const"), str(out), "--quiet"]) == 0
    data = out.read_bytes()
    assert data.startswith(b"P5\n8 8\n255\n")
    pixels = set(data.split(b"255\n", 1)[1])
    assert len(pixels) == 1


def test_render_phase_ramp_is_sawtooth(tmp_path):
    ramp = np.tile(np.linspace(0, 6 * np.pi, 64), (8, 1))
    write_array(tmp_path / "ramp", ramp)
    out = tmp_path / "r.pgm"
    assert main(["render", str(tmp_path / "ramp"), str(out), "--phase",
                 "--quiet"]) == 0
    row = np.frombuffer(out.read_bytes().split(b"255\n", 1)[1],
                        dtype=np.uint8).reshape(8, 64)[0].astype(float)
    jumps = np.abs(np.diff(row))
    assert (jumps > 180).sum() == 3  # three wraps across 6 pi of ramp
    between = jumps[jumps <= 180]
    assert np.all(between <= 30)  # gentle slope elsewhere


def test_render_mask_threshold_blanks_bottom_decile(tmp_path):
    rng = np.random.default_rng(8)
    img = rng.permutation(np.linspace(0.5, 2.0, 100)).reshape(10, 10)
    write_array(tmp_path / "img", img)
    out = tmp_path / "m.pgm"
    assert main(["render", str(tmp_path / "img"), str(out),
                 "--mask-threshold", "0.1", "--quiet"]) == 0
    pix = np.frombuffer(out.read_bytes().split(b"255\n", 1)[1],
                        dtype=np.uint8).reshape(10, 10)
    # Sort oracle: exactly the 10 smallest entries are blanked to 0.
    cutoff = np.sort(img.ravel())[10]
    assert np.array_equal(pix == 0, img < cutoff)
    assert (pix == 0).sum() == 10


def test_gridsearch_runs_two_stages(sim_setup):
    tmp_path, sim, _, _ = sim_setup
    gs = tmp_path / "gs"
    rec_path = _recon_config(tmp_path, sim, gs, outer_iters=2, inner_iters=2,
                             wrap_count=2, record_history=False)
    cfg = json.loads(rec_path.read_text())
    cfg["gridsearch"] = {"lam_m_grid": [0.0, 1e-4],
                         "lam_p_grid": [0.0, 1e-3]}
    cfg["truth"] = str(sim / "truth_magnitude")
    rec_path.write_text(json.dumps(cfg))
    assert main(["gridsearch", "--config", str(rec_path), "--quiet"]) == 0
    results = json.loads((gs / "gridsearch.json").read_text())
    assert set(results) == {"stage1", "stage2", "best"}
    assert len(results["stage1"]["errors"]) == 2
    assert results["best"]["lam_p"] in (0.0, 1e-3)
