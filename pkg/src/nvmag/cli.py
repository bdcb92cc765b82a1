"""Command-line front end.

Every command reads one JSON config (``--config``), merges it over the
command defaults, validates it, and writes its products into ``--out``.
Each JSON output carries a ``provenance`` block (tool version, command,
resolved config, seed); passing such an output back as ``--config``
re-runs the same computation. Exit codes: 0 success, 1 usage, input or
I/O error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .calibration import (
    OdmrLineCenters,
    SensingMatrix,
    SlopeCalibration,
    fit_bias,
    linear_regime_matrix,
    linear_signs,
    linearize,
)
from .constants import GAMMA_E, SENSING_MATRIX, SENSING_PINV
from .dsp_chain import DemodChain, cancel_laser_noise, demodulate
from .errors import ConfigError, InputError, NumericalError, NVMagError, UnitMismatch
from .pipeline import calibrate_channel_slopes, run_pipeline
from .pulsed_walsh import RamseyConfig, WalshCode, compare_snr, decoded_std, projections_to_field
from .reconstruction import out_of_range_mask, reconstruct_stream
from .sensitivity import NoiseBudget, sensitivity_report
from .signal_synth import (
    ChannelConfig,
    CoilSignal,
    SynthConfig,
    carrier_frequencies,
    default_channels,
    default_coils,
    rin_for_excess,
    synthesize,
)
from .spin_model import HamiltonianParams, Line
from .streams import atomic_write_text, read_stream, write_csv, write_stream

COMMANDS = ("fit-bias", "linearize", "synth", "demod", "reconstruct", "pipeline", "sensitivity", "walsh")


# -- helpers ---------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_json(out: Path, name: str, command: str, cfg: dict, result: dict) -> Path:
    doc = {
        "provenance": {"tool": "nvmag", "version": __version__, "command": command, "config": cfg, "seed": cfg["seed"]},
        "result": result,
    }
    path = out / name
    atomic_write_text(path, dumps(doc))
    return path


def _params(d) -> HamiltonianParams:
    return HamiltonianParams.from_dict(d)


def _channels(spec) -> list[ChannelConfig]:
    if spec == "default":
        return default_channels()
    return [
        ChannelConfig(
            Line.parse(c["line"]),
            c["carrier_hz"],
            c["mod_freq_hz"],
            c["deviation_hz"],
            c.get("contrast", 0.008),
            c.get("linewidth_hz", 1e6),
        )
        for c in spec
    ]


def _coils(spec) -> list[CoilSignal]:
    if spec == "default":
        return default_coils()
    if spec == "none":
        return []
    return [CoilSignal(c["axis"], c["freq_hz"], c["rms_t"], c.get("phase_rad", 0.0)) for c in spec]


_SYNTH_KEYS = {
    "sample_rate": "sample_rate",
    "duration_s": "duration",
    "hyperfine_splitting_hz": "hyperfine_splitting",
    "i_sig_a": "pl_mean_current",
    "i_ref_a": "ref_mean_current",
    "r_sig_ohm": "sig_termination",
    "r_ref_ohm": "ref_termination",
    "noise": "noise",
    "lock_carriers": "lock_carriers",
    "pl_model": "pl_model",
}


def _synth_cfg(d: dict) -> SynthConfig:
    kw = {_SYNTH_KEYS[k]: v for k, v in d.items() if k in _SYNTH_KEYS}
    if "rin_excess" in d:
        kw["laser_rin"] = rin_for_excess(d["rin_excess"], kw.get("pl_mean_current", SynthConfig().pl_mean_current))
    return SynthConfig(**kw)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _result(doc: dict) -> dict:
    return doc.get("result", doc) if isinstance(doc, dict) else doc


def _read_line_centers(path) -> np.ndarray:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if p.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        vals = doc.get("line_centers_hz") if isinstance(doc, dict) else doc
    else:
        try:
            vals = [float(tok) for tok in text.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{path}: expected numbers: {exc}") from exc
    try:
        return OdmrLineCenters(np.asarray(vals, dtype=float)).frequencies
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _matrix(cfg: dict) -> SensingMatrix:
    if cfg.get("matrix"):
        return SensingMatrix.from_dict(_result(_read_json(cfg["matrix"])))
    return linearize(_params(cfg["point"]), [tuple(a) for a in cfg["addressed"]])


# -- commands --------------------------------------------------------------


def cmd_fit_bias(cfg: dict, out: Path) -> dict:
    if "line_centers_hz" in cfg and "input" in cfg:
        raise ConfigError("give either line_centers_hz or input, not both")
    if "line_centers_hz" in cfg:
        lines = OdmrLineCenters(cfg["line_centers_hz"]).frequencies
    elif "input" in cfg:
        lines = _read_line_centers(cfg["input"])
    else:
        raise ConfigError("fit-bias needs line_centers_hz or an input file")
    guess = _params(cfg["initial_guess"]) if "initial_guess" in cfg else None
    fit = fit_bias(lines, guess)
    result = fit.to_dict() | {"observed_hz": lines.tolist()}
    _write_json(out, "fit_bias.json", "fit-bias", cfg, result)
    return result


def cmd_linearize(cfg: dict, out: Path) -> dict:
    point = _params(cfg["point"])
    addressed = [tuple(a) for a in cfg["addressed"]]
    kw = {"step": cfg["step_t"]} if "step_t" in cfg else {}
    m = linearize(point, addressed, **kw)
    lin = linear_regime_matrix(addressed, linear_signs(point, addressed))
    result = m.to_dict() | {
        "linear_regime": {
            "signs": linear_signs(point, addressed).tolist(),
            "a_dimensionless": lin.dimensionless.tolist(),
            "a_pinv_dimensionless": lin.dimensionless_pinv.tolist(),
        },
        "condition_number": float(np.linalg.cond(m.a)),
    }
    _write_json(out, "sensing_matrix.json", "linearize", cfg, result)
    return result


def cmd_synth(cfg: dict, out: Path) -> dict:
    params = _params(cfg["params"])
    channels = _channels(cfg["channels"])
    coils = _coils(cfg["coils"])
    scfg = _synth_cfg(cfg["synth"])
    sig, ref = synthesize(params, channels, coils, scfg, cfg["seed"])
    write_stream(out / "signal.nvms", sig)
    write_stream(out / "reference.nvms", ref)
    result = {
        "signal": "signal.nvms",
        "reference": "reference.nvms",
        "n_samples": len(sig),
        "sample_rate": sig.rate,
        "carriers_hz": carrier_frequencies(params, channels, scfg).tolist(),
    }
    _write_json(out, "synth.json", "synth", cfg, result)
    return result


def _slopes(spec, cfg) -> SlopeCalibration:
    if isinstance(spec, str):
        cal = SlopeCalibration.from_dict(_result(_read_json(spec)))
    else:
        cal = SlopeCalibration(spec, phases=cfg.get("phases_rad", [0.0] * 4))
    if "phases_rad" in cfg:
        cal.phases = np.asarray(cfg["phases_rad"], dtype=float)
    return cal


def cmd_demod(cfg: dict, out: Path) -> dict:
    sig = read_stream(cfg["input"])
    if cfg.get("reference"):
        sig = cancel_laser_noise(sig, read_stream(cfg["reference"]))
    channels = _channels(cfg["channels"])
    res = demodulate(sig, channels, _slopes(cfg["slopes"], cfg), DemodChain(), settle=cfg["settle_s"])
    names = [f"shift_{ch.line.orientation.value}" for ch in channels]
    for name, s in zip(names, res.shifts):
        write_stream(out / f"{name}.nvms", s)
    write_csv(out / "shifts.csv", dict(zip(names, res.shifts)))
    result = {"shift_streams": [f"{n}.nvms" for n in names], "enbw_hz": res.enbw, "chain": res.chain}
    _write_json(out, "demod.json", "demod", cfg, result)
    return result


def cmd_reconstruct(cfg: dict, out: Path) -> dict:
    shifts = [read_stream(p) for p in cfg["inputs"]]
    m = _matrix(cfg)
    field = reconstruct_stream(shifts, m)
    names = ["b_x", "b_y", "b_z"]
    for name, s in zip(names, field):
        write_stream(out / f"{name}.nvms", s)
    write_csv(out / "field.csv", dict(zip(names, field)))
    result = {
        "field_streams": [f"{n}.nvms" for n in names],
        "out_of_range_frames": int(out_of_range_mask(shifts).sum()),
        "sensing_matrix": m.to_dict(),
    }
    _write_json(out, "reconstruct.json", "reconstruct", cfg, result)
    return result


def cmd_calibrate(cfg: dict, out: Path) -> dict:
    """Slope calibration by synthetic chirp; written alongside synth output."""
    params = _params(cfg["params"])
    scfg = _synth_cfg(cfg["synth"])
    cal = calibrate_channel_slopes(params, _channels(cfg["channels"]), replace(scfg, noise="none"), seed=cfg["seed"])
    return cal.to_dict()


def _spectra_csv(path: Path, spectra: dict) -> None:
    f = next(iter(spectra.values()))[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz"] + [f"asd_{ax}_t_per_rthz" for ax in spectra])
    cols = [asd for _, asd in spectra.values()]
    for k in range(f.size):
        w.writerow([repr(float(f[k]))] + [repr(float(c[k])) for c in cols])
    atomic_write_text(path, buf.getvalue())


def cmd_pipeline(cfg: dict, out: Path) -> dict:
    res = run_pipeline(
        _params(cfg["params"]),
        _channels(cfg["channels"]),
        _coils(cfg["coils"]),
        _synth_cfg(cfg["synth"]),
        cfg["seed"],
        settle=cfg["settle_s"],
        cancel=cfg["cancel_laser_noise"],
        spectral_method=cfg["spectral_method"],
    )
    names = ["b_x", "b_y", "b_z"]
    write_csv(out / "field.csv", dict(zip(names, res.field)))
    _spectra_csv(out / "spectra.csv", res.spectra())
    if cfg["write_streams"]:
        for name, s in zip(names, res.field):
            write_stream(out / f"{name}.nvms", s)
        for s, ch in zip(res.shifts, ("lambda", "chi", "phi", "kappa")):
            write_stream(out / f"shift_{ch}.nvms", s)
    result = res.summary() | {"field_csv": "field.csv", "spectra_csv": "spectra.csv"}
    _write_json(out, "pipeline.json", "pipeline", cfg, result)
    return result


def cmd_sensitivity(cfg: dict, out: Path) -> dict:
    if cfg["matrix"] == "reference":
        m = SensingMatrix(SENSING_MATRIX * GAMMA_E, SENSING_PINV / GAMMA_E, [("lambda", "-"), ("chi", "-"), ("phi", "+"), ("kappa", "+")])
    else:
        m = linearize(_params(cfg["point"]))
    budget = NoiseBudget(cfg["slopes_v_per_hz"], cfg["bandwidth_hz"], cfg["i_sig_a"], cfg["i_ref_a"], cfg["r_sig_ohm"])
    rep = sensitivity_report(budget, m, cfg["include_reference"], cfg["excess_noise_factor"])
    result = rep.to_dict() | {"reference_factor": budget.reference_factor, "matrix": cfg["matrix"]}
    _write_json(out, "sensitivity.json", "sensitivity", cfg, result)
    return result


def cmd_walsh(cfg: dict, out: Path) -> dict:
    r = cfg["ramsey"]
    rc = RamseyConfig(r["t_init_s"], r["t_sense_s"], r["t_read_s"], r["alphas_t"], r["mean_pl"])
    code = WalshCode(np.asarray(cfg["codes"], dtype=float)) if "codes" in cfg else WalshCode()
    cmp = compare_snr(rc, code, cfg["b_t"], cfg["noise_std"], cfg["trials"], cfg["seed"])
    m = linearize(_params(cfg["point"]))
    result = cmp.to_dict() | {
        "analytic_std_simultaneous": decoded_std(rc, cfg["noise_std"], code).tolist(),
        "analytic_std_sequential": decoded_std(rc, cfg["noise_std"]).tolist(),
        "code_balanced": code.balanced,
        "vector_rate_hz": rc.measurement_rate(code.length),
        "field_from_mean_t": projections_to_field(cmp.mean_simultaneous, m).tolist(),
    }
    _write_json(out, "walsh.json", "walsh", cfg, result)
    return result


HANDLERS = {
    "fit-bias": cmd_fit_bias,
    "linearize": cmd_linearize,
    "synth": cmd_synth,
    "demod": cmd_demod,
    "reconstruct": cmd_reconstruct,
    "pipeline": cmd_pipeline,
    "sensitivity": cmd_sensitivity,
    "walsh": cmd_walsh,
}


# -- entry point -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nvmag", description="Vector NV magnetometry: fitting, synthesis, demodulation, reconstruction.")
    p.add_argument("--version", action="version", version=f"nvmag {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HANDLERS[name].__doc__ or name)
        sp.add_argument("--config", type=Path, help="JSON config or a previous output embedding one")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory (created if missing)")
    sub.choices["synth"].add_argument("--calibrate", action="store_true", help="also write slopes.json from a synthetic chirp")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = cfgmod.extract_config(cfgmod.load_document(args.config), args.command) if args.config else {}
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg = cfgmod.resolve(args.command, user, args.seed)
        try:
            args.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {args.out}: {exc}") from exc
        result = HANDLERS[args.command](cfg, args.out)
        if args.command == "synth" and args.calibrate:
            _write_json(args.out, "slopes.json", "synth", cfg, cmd_calibrate(cfg, args.out))
    except NumericalError as exc:
        print(f"nvmag: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (InputError, UnitMismatch, OSError, NVMagError) as exc:
        print(f"nvmag: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(dumps({"command": args.command, "out": str(args.out), "keys": sorted(result)}), end="")
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
