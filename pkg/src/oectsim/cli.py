"""Command-line entry point.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Exit status: 0 success, 1 usage, 2 data/parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import ArraySpec, tune_array
from .config import ConfigError, ToolkitConfig, load_config
from .device import (
    InvalidSweepError,
    drain_current,
    peak_transconductance,
    total_capacitance,
    transconductance,
    vg_sweep,
)
from .eis import (
    CircuitParams,
    FitError,
    add_noise,
    fit_circuit,
    log_grid,
    read_spectrum,
    simulate_spectrum,
    write_spectrum,
)
from .growth import (
    CalibrationRangeError,
    EpCondition,
    RandomStream,
    gm_capacitance_trajectory,
    grow,
    morphology,
)
from .io import DataFormatError, rounded, write_csv, write_json
from .transient import PulseTrainSpec, modulation_depth, simulate_pulse_train, spike_report, write_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
# stream purpose for synthetic EIS noise
EIS_NOISE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_STEP = re.compile(r"^\s*([0-9.eE+-]+)\s*:\s*([0-9.eE+-]+)\s*(?:x\s*(\d+))?\s*$")


def parse_schedule(text: str | None) -> list[EpCondition]:
    """``"0.6:2x5,0.7:1.8"`` -> five 2 s steps at 0.6 V, then one 1.8 s step at 0.7 V."""
    if not text:
        return []
    steps = []
    for item in text.split(","):
        m = _STEP.match(item)
        if not m:
            raise UsageError(f"bad EP schedule item {item!r}; expected POTENTIAL:DURATION[xCOUNT]")
        try:
            cond = EpCondition(float(m.group(1)), float(m.group(2)))
        except ValueError as exc:
            raise UsageError(f"bad EP schedule item {item!r}: {exc}") from None
        steps.extend([cond] * int(m.group(3) or 1))
    return steps


def _grow(cfg: ToolkitConfig, schedule, seed: int):
    return grow(cfg.device, schedule, cfg.growth, RandomStream(seed, 0))


def _sweep(cfg: ToolkitConfig, args) -> np.ndarray:
    sw = cfg.raw["sweep"]
    start = sw["vg_start"] if args.vg_start is None else args.vg_start
    stop = sw["vg_stop"] if args.vg_stop is None else args.vg_stop
    points = sw["vg_points"] if args.vg_points is None else args.vg_points
    try:
        return vg_sweep(start, stop, points)
    except InvalidSweepError as exc:
        raise UsageError(str(exc)) from None


def _vd(cfg: ToolkitConfig, args) -> float:
    vd = cfg.vd if args.vd is None else args.vd
    if vd > 0:
        raise UsageError("--vd must be <= 0")
    return vd


def cmd_simulate_transfer(cfg, args, seed, out: Path) -> list[Path]:
    sweep = _sweep(cfg, args)
    vd = _vd(cfg, args)
    schedule = parse_schedule(args.ep_schedule)
    states = [cfg.device] + _grow(cfg, schedule, seed)
    rows = []
    ep_time = 0.0
    for k, state in enumerate(states):
        if k:
            ep_time += schedule[k - 1].duration
        ids = drain_current(state, sweep, vd)
        gms = transconductance(state, sweep, vd)
        rows.extend((k, ep_time, vg, i, g) for vg, i, g in zip(sweep, ids, gms))
    return [write_csv(out / "transfer.csv", ("step", "ep_time_s", "vg_v", "id_a", "gm_s"), rows)]


def cmd_simulate_eis(cfg, args, seed, out: Path) -> list[Path]:
    states = _grow(cfg, parse_schedule(args.ep_schedule), seed)
    state = states[-1] if states else cfg.device
    params = cfg.circuit_for(state)
    c = cfg.raw["circuit"]
    try:
        grid = log_grid(
            c["f_max_hz"] if args.f_max is None else args.f_max,
            c["f_min_hz"] if args.f_min is None else args.f_min,
            c["points_per_decade"] if args.ppd is None else args.ppd,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    meta = {
        "v_dc": c["v_dc"],
        "v_ac": c["v_ac"],
        "rs_ohm": params.rs,
        "rp_ohm": params.rp,
        "cp_f": params.cp,
        "noise": args.noise,
    }
    spectrum = simulate_spectrum(params, grid, meta)
    if args.noise > 0:
        spectrum = add_noise(spectrum, args.noise, RandomStream(seed, 0).generator(EIS_NOISE))
    return [write_spectrum(out / "spectrum.csv", spectrum)]


def cmd_fit_eis(cfg, args, seed, out: Path) -> list[Path]:
    spectrum = read_spectrum(Path(args.input))
    guess = CircuitParams(*args.guess) if args.guess else None
    result = fit_circuit(spectrum, guess)
    report = {
        "input": Path(args.input).name,
        "params": {
            "rs_ohm": rounded(result.params.rs),
            "rp_ohm": rounded(result.params.rp),
            "cp_f": rounded(result.params.cp),
        },
        "residual": rounded(result.residual),
        "iterations": result.iterations,
        "n_points": len(spectrum),
    }
    return [write_json(out / "fit_report.json", report)]


def cmd_ep_grow(cfg, args, seed, out: Path) -> list[Path]:
    schedule = parse_schedule(args.schedule)
    if not schedule:
        raise UsageError("--schedule must contain at least one step")
    states = [cfg.device] + _grow(cfg, schedule, seed)
    rows = []
    for k, state in enumerate(states):
        gm, _ = peak_transconductance(state, cfg.sweep, cfg.vd)
        if k == 0:
            pot, dur, layer_d = float("nan"), 0.0, 0.0
            morph = morphology(None, cfg.morphology)
        else:
            pot, dur, layer_d = schedule[k - 1].potential, schedule[k - 1].duration, state.layers[-1].thickness
            try:
                morph = morphology(pot, cfg.morphology)
            except CalibrationRangeError:
                morph = None
        grain = float("nan") if morph is None or morph.grain_size is None else morph.grain_size
        rough = float("nan") if morph is None else morph.roughness
        rows.append((k, pot, dur, layer_d, state.ep_thickness, total_capacitance(state), gm, grain, rough))
    header = (
        "step", "potential_v", "duration_s", "layer_thickness_nm", "ep_thickness_nm",
        "capacitance_f", "peak_gm_s", "grain_nm", "roughness_nm",
    )
    return [write_csv(out / "ep_grow.csv", header, rows)]


def cmd_tune_array(cfg, args, seed, out: Path) -> list[Path]:
    n = cfg.array.n_devices if args.n is None else args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    target = cfg.policy.target_gm if args.target is None else args.target
    if not target > 0:
        raise UsageError("--target must be positive")
    spread = cfg.array.mobility_spread if args.mobility_spread is None else args.mobility_spread
    if spread < 0:
        raise UsageError("--mobility-spread must be >= 0")
    potential = cfg.policy.ep_potential if args.potential is None else args.potential
    policy = replace(cfg.policy, target_gm=target, ep_potential=potential)
    spec = ArraySpec(n, spread, cfg.array.capacitance_spread, seed)
    report = tune_array(spec, policy, cfg.growth, cfg.device)
    gm_rows = [(i, d.initial_gm, d.final_gm) for i, d in enumerate(report.devices)]
    c_rows = [(i, d.initial_capacitance, d.final_capacitance) for i, d in enumerate(report.devices)]
    return [
        write_json(out / "tuning_report.json", report.to_dict()),
        write_csv(out / "gm_hist.csv", ("device", "gm_initial_s", "gm_final_s"), gm_rows),
        write_csv(out / "cap_hist.csv", ("device", "c_initial_f", "c_final_f"), c_rows),
    ]


def cmd_pulse_train(cfg, args, seed, out: Path) -> list[Path]:
    threshold = cfg.threshold if args.threshold is None else args.threshold
    if not 0 < threshold < 1:
        raise UsageError("--threshold must lie in (0, 1)")
    frac = cfg.transient_fraction if args.transient_fraction is None else args.transient_fraction
    if not 0 <= frac < 1:
        raise UsageError("--transient-fraction must lie in [0, 1)")
    p = cfg.pulse
    try:
        spec = PulseTrainSpec(
            p.amplitude if args.amplitude is None else args.amplitude,
            p.width if args.width is None else args.width,
            p.frequency if args.frequency is None else args.frequency,
            p.n_pulses if args.n_pulses is None else args.n_pulses,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.cp is not None and args.ep_schedule:
        raise UsageError("--cp and --ep-schedule are mutually exclusive")
    if args.cp is not None:
        cp = args.cp
    else:
        states = _grow(cfg, parse_schedule(args.ep_schedule), seed)
        cp = total_capacitance(states[-1] if states else cfg.device)
    rs = cfg.transient_rs if args.rs is None else args.rs
    if not (cp > 0 and rs > 0):
        raise UsageError("--cp and --rs must be positive")
    trace = simulate_pulse_train(rs, cp, spec, cfg.samples_per_segment)
    spikes = spike_report(trace, threshold, frac)
    report = spikes.to_dict()
    for pulse in report["pulses"]:
        pulse["modulation"] = rounded(pulse["modulation"])
    report.update(
        rs_ohm=rounded(rs),
        cp_f=rounded(cp),
        tau_s=rounded(rs * cp),
        frequency_hz=rounded(spec.frequency),
        width_s=rounded(spec.width),
        amplitude_v=rounded(spec.amplitude),
        modulation_depth=rounded(modulation_depth(trace)) if spec.n_pulses >= 3 else None,
        transient_fraction=frac,
    )
    return [write_trace(out / "trace.csv", trace), write_json(out / "spike_report.json", report)]


def cmd_trajectory(cfg, args, seed, out: Path) -> list[Path]:
    potential = cfg.policy.ep_potential if args.potential is None else args.potential
    duration = cfg.policy.step_duration if args.duration is None else args.duration
    if args.n_steps < 1:
        raise UsageError("--n-steps must be >= 1")
    try:
        cond = EpCondition(potential, duration)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    points = gm_capacitance_trajectory(
        cfg.device, cond, args.n_steps, cfg.vd, cfg.sweep, cfg.growth, RandomStream(seed, 0)
    )
    rows = [(k + 1, (k + 1) * duration, dg, dc) for k, (dg, dc) in enumerate(points)]
    return [write_csv(out / "trajectory.csv", ("step", "ep_time_s", "d_gm_rel", "d_c_rel"), rows)]


COMMANDS = {
    "simulate-transfer": cmd_simulate_transfer,
    "simulate-eis": cmd_simulate_eis,
    "fit-eis": cmd_fit_eis,
    "ep-grow": cmd_ep_grow,
    "tune-array": cmd_tune_array,
    "pulse-train": cmd_pulse_train,
    "trajectory": cmd_trajectory,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="YAML config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed override")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")

    parser = _Parser(prog="oectsim", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    def sweep_flags(p):
        p.add_argument("--vg-start", type=float)
        p.add_argument("--vg-stop", type=float)
        p.add_argument("--vg-points", type=int)
        p.add_argument("--vd", type=float)

    p = add("simulate-transfer", "transfer curves (Vg, Id, Gm), optionally per EP step")
    sweep_flags(p)
    p.add_argument("--ep-schedule", help="e.g. 0.6:2x5")

    p = add("simulate-eis", "impedance spectrum of the (optionally EP-grown) device")
    p.add_argument("--ep-schedule")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise on Re and Im")
    p.add_argument("--f-max", type=float)
    p.add_argument("--f-min", type=float)
    p.add_argument("--ppd", type=int, help="points per decade")

    p = add("fit-eis", "fit Rs + (Rp || Cp) to a spectrum CSV")
    p.add_argument("input", help="spectrum CSV (freq_hz,z_real_ohm,z_imag_ohm)")
    p.add_argument("--guess", type=float, nargs=3, metavar=("RS", "RP", "CP"))

    p = add("ep-grow", "apply an EP schedule and tabulate layers, C, Gm, morphology")
    p.add_argument("--schedule", required=True)

    p = add("tune-array", "closed-loop Gm tuning of a device array")
    p.add_argument("--n", type=int)
    p.add_argument("--target", type=float, help="target peak Gm (S)")
    p.add_argument("--potential", type=float)
    p.add_argument("--mobility-spread", type=float)

    p = add("pulse-train", "pulse-train response and spike count")
    p.add_argument("--frequency", type=float)
    p.add_argument("--n-pulses", type=int)
    p.add_argument("--width", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--cp", type=float, help="capacitance override (F)")
    p.add_argument("--rs", type=float)
    p.add_argument("--ep-schedule")
    p.add_argument("--threshold", type=float)
    p.add_argument("--transient-fraction", type=float)

    p = add("trajectory", "relative Gm vs C changes over repeated EP steps")
    p.add_argument("--potential", type=float)
    p.add_argument("--duration", type=float, help="step duration (s)")
    p.add_argument("--n-steps", type=int, default=5)
    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(getattr(args, "config", None))
        seed = getattr(args, "seed", cfg.seed)
        out = Path(getattr(args, "out", "."))
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](cfg, args, seed, out)
    except UsageError as exc:
        print(f"oectsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationRangeError as exc:
        print(f"oectsim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DataFormatError, OSError) as exc:
        print(f"oectsim: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"oectsim: fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"oectsim: {exc}", file=sys.stderr)
        return EXIT_DATA

    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("command", "config", "out")
    }
    manifest = {
        "command": args.command,
        "flags": flags,
        "config_sha256": cfg.digest(),
        "seed": seed,
        "version": __version__,
        "outputs": [p.name for p in outputs],
    }
    write_json(out / "manifest.json", manifest)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
