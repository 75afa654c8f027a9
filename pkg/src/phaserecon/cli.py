"""Command-line front end: simulate, reconstruct, metrics, render, gridsearch.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence.  All randomized steps are driven by the config seed, so re-running
a subcommand on the same config reproduces byte-identical payloads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import models, phantom as ph, solver
from .arrayfile import read_array, write_array
from .config import load_config
from .errors import ConfigError, DataError
from .regularizers import (make_divfree_reg, make_l1_wavelet_reg, make_l2_reg)
from .solver import DivergenceError
from .wavelets import WaveletSpec

__all__ = ["main"]


def _say(quiet, *parts):
    if not quiet:
        print(*parts)


def _outdir(cfg, override):
    out = Path(override) if override else Path(cfg["out"])
    if not out.is_dir():
        raise DataError(f"output directory does not exist: {out}")
    return out


def _config_digest(cfg) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _payload_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _n_channels(model_cfg) -> int:
    kind = model_cfg["kind"]
    if kind == "partial_fourier":
        return 1
    if kind == "water_fat":
        return len(model_cfg["echo_times_s"])
    enc = model_cfg.get("encoding_matrix")
    return len(enc) if enc is not None else 4  # balanced four-point default


def _make_masks(shape, model_cfg, sampling_cfg, seed):
    """One sampling pattern per echo/encode channel, as a stacked bool array."""
    nchan = _n_channels(model_cfg)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(nchan)
    chans = []
    accels = []
    for c in range(nchan):
        parts = []
        if sampling_cfg.get("poisson"):
            pcfg = sampling_cfg["poisson"]
            parts.append(ph.poisson_disk_mask(shape, pcfg["accel"],
                                              pcfg["calib"], seed=seeds[c]))
        if sampling_cfg.get("partial_fourier"):
            fcfg = sampling_cfg["partial_fourier"]
            parts.append(ph.partial_fourier_mask(shape, fcfg["fraction"],
                                                 fcfg.get("axis", 0)))
        if not parts:
            parts.append(ph.full_mask(shape))
        sm = parts[0] if len(parts) == 1 else ph.combine_masks(*parts)
        chans.append(sm.mask)
        accels.append(sm.acceleration)
    return np.stack(chans), accels


def _build_model(model_cfg, masks, maps):
    kind = model_cfg["kind"]
    mask_list = [masks[i].astype(bool) for i in range(masks.shape[0])]
    if kind == "partial_fourier":
        if len(mask_list) != 1:
            raise DataError(f"partial_fourier expects 1 mask channel, "
                            f"got {len(mask_list)}")
        return models.build_partial_fourier(mask_list[0], maps)
    if kind == "water_fat":
        spec = models.WaterFatSpec(
            tuple(model_cfg["echo_times_s"]),
            tuple((a, f) for a, f in model_cfg["fat_peaks"]))
        return models.build_waterfat(spec, mask_list, maps)
    enc = model_cfg.get("encoding_matrix")
    spec = models.FlowEncodingSpec(
        np.asarray(enc, dtype=float) if enc is not None
        else models.FlowEncodingSpec.balanced_four_point().matrix,
        model_cfg.get("venc_rad_per_unit", 1.0))
    return models.build_flow(spec, mask_list, maps)


def _build_reg(reg_cfg, model_kind, role):
    kind = reg_cfg["kind"]
    if kind == "none":
        return None
    lam = reg_cfg.get("lam", 0.0)
    wspec = WaveletSpec(reg_cfg.get("family", "daub4"),
                        reg_cfg.get("levels", 4))
    if kind == "l1-wavelet":
        return make_l1_wavelet_reg(lam, wspec)
    if kind == "l2":
        return make_l2_reg(lam)
    if kind == "divfree":
        if role != "phase" or model_kind != "flow":
            raise ConfigError("divfree regularizer applies to flow phases only")
        return make_divfree_reg(lam, wspec)
    raise ConfigError(f"unknown regularizer kind {kind!r}")


def cmd_simulate(cfg, out_override=None, quiet=False):
    out = _outdir(cfg, out_override)
    pcfg = cfg["phantom"]
    shape = tuple(pcfg["shape"])
    seed = cfg["seed"]
    seeds = np.random.SeedSequence(seed).spawn(4)

    truth = ph.make_phantom(pcfg["kind"], shape, pcfg["phase_range"],
                            seed=seeds[0],
                            field_range_hz=pcfg.get("field_range_hz", 60.0))
    maps = ph.make_sens_maps(shape, cfg["coils"], seed=seeds[1])
    masks, accels = _make_masks(shape, cfg["model"], cfg.get("sampling", {}),
                                seeds[2])
    model = _build_model(cfg["model"], masks, maps)
    y = ph.simulate_acquisition(model, truth, cfg.get("noise_sigma", 0.0),
                                seed=seeds[3])

    files = {
        "truth_magnitude": (truth.magnitude, ("component",) + _axes(shape)),
        "truth_phase": (truth.phase, ("component",) + _axes(shape)),
        "maps": (maps, ("coil",) + _axes(shape)),
        "masks": (masks.astype(np.float64), ("channel",) + _axes(shape)),
        "kspace": (y, _kspace_axes(model)),
    }
    manifest = {
        "command": "simulate",
        "config_sha256": _config_digest(cfg),
        "seed": seed,
        "achieved_acceleration": accels,
        "files": {},
    }
    for name, (arr, labels) in files.items():
        payload = write_array(out / name, arr, axis_labels=list(labels))
        manifest["files"][name] = _payload_digest(payload)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2)
                             + "\n")
    _say(quiet, f"simulated {pcfg['kind']} at {shape}, "
                f"accelerations {['%.2f' % a for a in accels]}, "
                f"wrote {len(files)} arrays to {out}")
    return 0


def _axes(shape):
    return tuple("zyx"[-len(shape):])


def _kspace_axes(model):
    lead = 1 if model.kind == "partial_fourier" else 2
    img_axes = _axes(model.y_shape[lead:])
    if model.kind == "partial_fourier":
        return ("coil",) + img_axes
    return ("channel", "coil") + img_axes


def _load_inputs(cfg):
    inputs = cfg["inputs"]
    y, _ = read_array(inputs["kspace"])
    masks, _ = read_array(inputs["masks"])
    maps, _ = read_array(inputs["maps"])
    truth_m = truth_p = None
    if "truth_magnitude" in inputs:
        truth_m, _ = read_array(inputs["truth_magnitude"])
    if "truth_phase" in inputs:
        truth_p, _ = read_array(inputs["truth_phase"])
    return y, masks, maps, truth_m, truth_p


def cmd_reconstruct(cfg, out_override=None, seed_override=None, quiet=False):
    out = _outdir(cfg, out_override)
    seed = seed_override if seed_override is not None else cfg["seed"]
    y, masks, maps, truth_m, truth_p = _load_inputs(cfg)
    model = _build_model(cfg["model"], masks, maps)
    if y.shape != model.y_shape:
        raise DataError(f"k-space shape {y.shape} does not match the model's "
                        f"{model.y_shape}")

    g_m = _build_reg(cfg["regularizers"]["magnitude"], model.kind, "magnitude")
    g_p = _build_reg(cfg["regularizers"]["phase"], model.kind, "phase")

    scfg_in = cfg.get("solver", {})
    scfg = solver.SolverConfig(
        outer_iters=scfg_in.get("outer_iters", 100),
        inner_iters=scfg_in.get("inner_iters", 10),
        seed=seed,
        wrap_count=scfg_in.get("wrap_count", 8),
        step_safety=scfg_in.get("step_safety", 1.0),
        record_history=scfg_in.get("record_history", False),
    )

    m0, p0 = solver.init_zero_filled(model, y)
    init_kind = scfg_in.get("init", "zero-filled")
    if init_kind == "truth-phase":
        if truth_p is None:
            raise DataError("truth-phase init requires inputs.truth_phase")
        if truth_p.shape != model.p_shape:
            raise DataError("truth phase shape does not match the model")
        p0 = truth_p.real.copy()

    wrap_kind = scfg_in.get("wrap_kind", "constant")
    wraps = (solver.make_phase_wrap_set_from_init(p0, scfg.wrap_count)
             if wrap_kind == "from-init"
             else solver.make_phase_wrap_set(scfg.wrap_count))

    t0 = time.perf_counter()
    result = solver.reconstruct(model, y, m0, p0, g_m, g_p, scfg, wraps=wraps)
    wall = time.perf_counter() - t0

    m_rec = result.m.data
    write_array(out / "recon_magnitude", m_rec,
                ["component"] + [f"axis{i}" for i in range(m_rec.ndim - 1)])
    write_array(out / "recon_magnitude_abs", np.abs(m_rec),
                ["component"] + [f"axis{i}" for i in range(m_rec.ndim - 1)])
    write_array(out / "recon_phase", result.p.data,
                ["component"] + [f"axis{i}" for i in range(m_rec.ndim - 1)])
    if scfg.record_history:
        write_array(out / "objective_history", result.objective_history,
                    ["step"])
        write_array(out / "robust_objective_history",
                    result.robust_objective_history, ["outer"])
        write_array(out / "residual_norm_history",
                    result.residual_norm_history, ["step"])

    report = {
        "command": "reconstruct",
        "config_sha256": _config_digest(cfg),
        "seed": seed,
        "outer_iters": scfg.outer_iters,
        "inner_iters": scfg.inner_iters,
        "wrap_count": scfg.wrap_count,
        "wrap_kind": wrap_kind,
        "final_objective": models.objective(model, m_rec, result.p.data, y,
                                            g_m, g_p),
        "final_data_term": result.info["final_data_term"],
        "wall_time_s": wall,
    }
    if truth_m is not None:
        if truth_m.shape != m_rec.shape:
            raise DataError("truth magnitude shape does not match recon")
        report["psnr_db"] = ph.psnr(truth_m.real, np.abs(m_rec))
        report["psnr_db_per_component"] = [
            ph.psnr(truth_m[i].real, np.abs(m_rec[i]))
            for i in range(m_rec.shape[0])
        ]
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    _say(quiet, f"reconstructed in {wall:.1f}s, final objective "
                f"{report['final_objective']:.4e}"
                + (f", PSNR {report['psnr_db']:.2f} dB"
                   if "psnr_db" in report else ""))
    return 0


def cmd_gridsearch(cfg, out_override=None, seed_override=None, quiet=False):
    out = _outdir(cfg, out_override)
    seed = seed_override if seed_override is not None else cfg["seed"]
    y, masks, maps, _, _ = _load_inputs(cfg)
    truth, _ = read_array(cfg["truth"])
    model = _build_model(cfg["model"], masks, maps)
    truth = truth.real

    scfg_in = cfg.get("solver", {})
    scfg = solver.SolverConfig(
        outer_iters=scfg_in.get("outer_iters", 100),
        inner_iters=scfg_in.get("inner_iters", 10),
        seed=seed,
        wrap_count=scfg_in.get("wrap_count", 8),
        record_history=False,
    )
    m0, p0 = solver.init_zero_filled(model, y)

    def solve_mse(lam_m, lam_p):
        reg_m = dict(cfg["regularizers"]["magnitude"], lam=lam_m)
        reg_p = dict(cfg["regularizers"]["phase"], lam=lam_p)
        g_m = _build_reg(reg_m, model.kind, "magnitude")
        g_p = _build_reg(reg_p, model.kind, "phase")
        res = solver.reconstruct(model, y, m0, p0, g_m, g_p, scfg)
        err = truth - np.abs(res.m.data)
        mse = float(np.mean(err ** 2))
        _say(quiet, f"  lam_m={lam_m:g} lam_p={lam_p:g} mse={mse:.6e}")
        return mse

    gcfg = cfg["gridsearch"]
    results = solver.two_stage_grid_search(
        solve_mse, gcfg["lam_m_grid"], gcfg["lam_p_grid"],
        lam_m_fixed=gcfg.get("lam_m_fixed"))
    (out / "gridsearch.json").write_text(json.dumps(results, indent=2) + "\n")
    _say(quiet, f"best lambdas: {results['best']}")
    return 0


def cmd_metrics(ref_path, rec_path, out_path=None, quiet=False):
    ref, _ = read_array(ref_path)
    rec, _ = read_array(rec_path)
    if ref.shape != rec.shape:
        raise DataError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    ref = np.abs(ref) if np.iscomplexobj(ref) else ref.real
    rec = np.abs(rec) if np.iscomplexobj(rec) else rec.real
    err = ref - rec
    report = {
        "psnr_db": ph.psnr(ref, rec),
        "psnr_rmse_db": ph.psnr_rmse(ref, rec),
        "mse": float(np.mean(err ** 2)),
        "max_abs_err": float(np.max(np.abs(err))),
    }
    text = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n")
    if not quiet:
        print(text)
    return 0


def _write_pgm(path, img8):
    header = f"P5\n{img8.shape[1]} {img8.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img8.astype(np.uint8).tobytes())


def cmd_render(array_path, out_path, window=None, phase=False, component=0,
               slice_index=None, mask_threshold=None, mask_by=None,
               quiet=False):
    arr, _ = read_array(array_path)
    arr = np.abs(arr) if (np.iscomplexobj(arr) and not phase) else arr
    if np.iscomplexobj(arr):
        arr = np.angle(arr)
    img = arr
    if img.ndim > 2:
        if component >= img.shape[0]:
            raise DataError(f"component {component} out of range")
        img = img[component]
    if img.ndim == 3:
        k = img.shape[-1] // 2 if slice_index is None else slice_index
        if not 0 <= k < img.shape[-1]:
            raise DataError(f"slice {k} out of range")
        img = img[..., k]
    if img.ndim != 2:
        raise DataError(f"cannot render array of shape {arr.shape}")

    img = img.astype(np.float64)
    if phase:
        img = np.angle(np.exp(1j * img))
        lo, hi = (-np.pi, np.pi) if window is None else window
    elif window is not None:
        lo, hi = window
    else:
        lo, hi = float(img.min()), float(img.max())

    if hi <= lo:
        scaled = np.full(img.shape, 128.0)
    else:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0) * 255.0

    if mask_threshold is not None:
        ref = img
        if mask_by is not None:
            mref, _ = read_array(mask_by)
            mref = np.abs(mref)
            if mref.ndim > 2:
                mref = mref[component]
            if mref.ndim == 3:
                mref = mref[..., img.shape[-1] // 2
                            if slice_index is None else slice_index]
            if mref.shape != img.shape:
                raise DataError("mask-by array does not match rendered shape")
            ref = mref
        k = int(np.floor(mask_threshold * ref.size))
        if k > 0:
            order = np.argsort(ref, axis=None, kind="stable")
            flat = scaled.reshape(-1)
            flat[order[:k]] = 0.0
            scaled = flat.reshape(scaled.shape)

    _write_pgm(out_path, np.round(scaled))
    _say(quiet, f"rendered {array_path} -> {out_path}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="phaserecon",
        description="Phase-regularized MRI reconstruction with phase cycling")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "reconstruct", "gridsearch"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("metrics")
    p.add_argument("ref")
    p.add_argument("rec")
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("render")
    p.add_argument("array")
    p.add_argument("out_image")
    p.add_argument("--window", type=float, nargs=2, default=None)
    p.add_argument("--phase", action="store_true")
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--slice", dest="slice_index", type=int, default=None)
    p.add_argument("--mask-threshold", type=float, default=None)
    p.add_argument("--mask-by", default=None)
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = load_config(args.config, "simulate")
            if args.seed is not None:
                cfg["seed"] = args.seed
            return cmd_simulate(cfg, args.out, args.quiet)
        if args.command == "reconstruct":
            cfg = load_config(args.config, "reconstruct")
            return cmd_reconstruct(cfg, args.out, args.seed, args.quiet)
        if args.command == "gridsearch":
            cfg = load_config(args.config, "gridsearch")
            return cmd_gridsearch(cfg, args.out, args.seed, args.quiet)
        if args.command == "metrics":
            return cmd_metrics(args.ref, args.rec, args.out, args.quiet)
        if args.command == "render":
            return cmd_render(args.array, args.out_image, args.window,
                              args.phase, args.component, args.slice_index,
                              args.mask_threshold, args.mask_by, args.quiet)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
