"""Benchmark driver: configure a model and protocol mode, run a session,
emit cost reports, and check reconstruction against the plaintext
reference.

Run configs are JSON with these keys (flags override the file):

    mode          "base" | "f" | "fp" | "fpc"        (default "f")
    seed          int, required
    model         inline model-config object, or
    model_path    path to a JSON file holding one
    weights_path  path to a saved weight file; if absent, weights are
                  generated from weights_seed (default: seed) at
                  weight_scale (default 0.5)
    tokens        list of vocabulary indices (default 0..n-1 mod d_oh)
    packing       "features_first" | "tokens_first" | null for the mode
                  default (fp/fpc pick tokens_first)
    backend       "semantic" | "gc" nonpoly backend (default semantic)
    strict        bool, range-check every nonpoly stage input
    he            {"slots": int, "ciphertext_bytes": int}
    channel       {"delay_s": float, "bandwidth_bps": float}
    report        output path for the structured report

The structured JSON report (sorted keys) is the canonical artifact; the
stdout table is a convenience view. All latencies are modeled from the
channel constants, never measured.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .costs import PHASES, STEPS
from .engine import MODES, Session
from .model import (
    ModelConfig,
    config_from_dict,
    config_to_dict,
    load_weights,
    random_weights,
    reference_forward,
)
from .packing import PackingLayout, PackingStrategy, plan_layout, predicted_rotations
from .she import HEParams
from .transcript import ChannelModel, estimate_latency

HE_OPS = ("he_enc", "he_dec", "he_add", "he_add_plain", "he_mul_plain", "he_rotate")


class ConfigError(ValueError):
    """Bad run config; message names the offending field."""


@dataclass
class RunConfig:
    mode: str
    seed: int
    model: ModelConfig
    weights: object
    tokens: list
    packing: PackingStrategy | None = None
    backend: str = "semantic"
    strict: bool = False
    he: HEParams | None = None
    channel: ChannelModel = field(default_factory=ChannelModel)
    report_path: str | None = None


def _field(obj: dict, name: str, typ, default=None, required=False):
    if name not in obj:
        if required:
            raise ConfigError(f"config field {name!r}: required")
        return default
    v = obj[name]
    if typ is int and isinstance(v, bool) or not isinstance(v, typ):
        raise ConfigError(f"config field {name!r}: expected {typ.__name__}, got {type(v).__name__}")
    return v


def load_run_config(obj: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed JSON object (plus flag overrides) into a RunConfig."""
    if not isinstance(obj, dict):
        raise ConfigError("config root: expected an object")
    known = {"mode", "seed", "model", "model_path", "weights_path", "weights_seed",
             "weight_scale", "tokens", "packing", "backend", "strict", "he", "channel",
             "report"}
    for k in obj:
        if k not in known:
            raise ConfigError(f"config field {k!r}: unknown")
    obj = dict(obj)
    for k, v in (overrides or {}).items():
        if v is not None:
            obj[k] = v

    mode = _field(obj, "mode", str, default="f")
    if mode not in MODES:
        raise ConfigError(f"config field 'mode': must be one of {MODES}")
    seed = _field(obj, "seed", int, required=True)

    if "model" in obj:
        model_obj = _field(obj, "model", dict, required=True)
    elif "model_path" in obj:
        path = _field(obj, "model_path", str, required=True)
        with open(path) as fh:
            model_obj = json.load(fh)
    else:
        raise ConfigError("config field 'model': required (inline object or model_path)")
    try:
        cfg = config_from_dict(model_obj)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"config field 'model': {e}") from e

    if "weights_path" in obj:
        weights, ring = load_weights(_field(obj, "weights_path", str))
        if ring != cfg.ring:
            raise ConfigError("config field 'weights_path': ring does not match the model")
    else:
        wseed = _field(obj, "weights_seed", int, default=seed)
        scale = _field(obj, "weight_scale", (int, float), default=0.5)
        weights = random_weights(cfg, np.random.default_rng(wseed), scale=float(scale))
    weights.validate(cfg)

    tokens = _field(obj, "tokens", list, default=[i % cfg.d_oh for i in range(cfg.n)])
    if len(tokens) != cfg.n or not all(isinstance(t, int) and 0 <= t < cfg.d_oh for t in tokens):
        raise ConfigError(f"config field 'tokens': need {cfg.n} indices in [0, {cfg.d_oh})")

    packing = None
    if obj.get("packing") is not None:
        name = _field(obj, "packing", str)
        try:
            packing = PackingStrategy(name)
        except ValueError:
            raise ConfigError(f"config field 'packing': unknown strategy {name!r}") from None

    backend = _field(obj, "backend", str, default="semantic")
    if backend not in ("semantic", "gc"):
        raise ConfigError("config field 'backend': must be 'semantic' or 'gc'")
    strict = _field(obj, "strict", bool, default=False)

    he = None
    if "he" in obj:
        h = _field(obj, "he", dict)
        slots = _field(h, "slots", int, required=True)
        he = HEParams(slots=slots,
                      ciphertext_bytes=_field(h, "ciphertext_bytes", int, default=16 * slots),
                      ring=cfg.ring)
    channel = ChannelModel()
    if "channel" in obj:
        c = _field(obj, "channel", dict)
        channel = ChannelModel(
            delay_s=float(_field(c, "delay_s", (int, float), default=channel.delay_s)),
            bandwidth_bps=float(_field(c, "bandwidth_bps", (int, float),
                                       default=channel.bandwidth_bps)),
        )

    return RunConfig(mode, seed, cfg, weights, list(tokens), packing, backend, strict,
                     he, channel, _field(obj, "report", str))


def read_config_file(path: str, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    return load_run_config(obj, overrides)


# -- commands -----------------------------------------------------------------


def cmd_run(rc: RunConfig) -> dict:
    """One session; returns the structured report."""
    session = Session(rc.model, rc.weights, rc.mode, rc.seed, he_params=rc.he,
                      packing=rc.packing, backend=rc.backend, strict=rc.strict)
    result = session.run(rc.tokens)
    want = reference_forward(rc.model, rc.weights, rc.tokens, strict=rc.strict)
    got = result.reconstruct()
    merged = result.merged_report()
    t = result.transcript

    steps = {}
    for step in STEPS:
        cell = {}
        for phase in PHASES:
            cell[phase] = {
                "interactions": t.interactions(step, phase),
                "messages": sum(1 for m in t.messages if m.step == step and m.phase == phase),
                "bytes": t.bytes_sent(step, phase),
                "he_ops": merged.he_ops(step, phase),
                "gc_and_gates": merged.get(step, phase, "gc_and_gates"),
                "gc_table_bytes": merged.get(step, phase, "gc_table_bytes"),
                "ot_count": merged.get(step, phase, "ot_count"),
            }
        steps[step] = cell
    totals = {
        phase: {k: sum(steps[s][phase][k] for s in STEPS)
                for k in ("interactions", "messages", "bytes", "he_ops")}
        for phase in PHASES
    }
    latency = estimate_latency(t, rc.channel)
    return {
        "schema": "bench-report/1",
        "mode": rc.mode,
        "seed": rc.seed,
        "backend": rc.backend,
        "strict": rc.strict,
        "packing": session.packing.value,
        "he_slots": session.he.slots,
        "ciphertext_bytes": session.he.ciphertext_bytes,
        "model": config_to_dict(rc.model),
        "tokens": rc.tokens,
        "equivalence": "exact" if np.array_equal(got.data, want.data) else "mismatch",
        "logits_signed": rc.model.ring.to_signed(got.data).tolist(),
        "steps": steps,
        "totals": totals,
        "modeled_latency_s": latency,
        "ct_ct_mul": merged.total("ct_ct_mul"),
    }


def cmd_compare(rc: RunConfig, modes=MODES) -> dict:
    """Same model, weights, seed, and input across protocol modes."""
    reports = {}
    for mode in modes:
        sub = RunConfig(mode, rc.seed, rc.model, rc.weights, rc.tokens, rc.packing,
                        rc.backend, rc.strict, rc.he, rc.channel)
        reports[mode] = cmd_run(sub)
    return {"schema": "bench-compare/1", "modes": list(modes), "reports": reports}


def cmd_verify(rc: RunConfig) -> tuple[bool, list[str]]:
    """Reconstruction and invariant checks across all four modes."""
    cmp = cmd_compare(rc)
    lines, ok = [], True

    def check(name: str, cond: bool):
        nonlocal ok
        ok &= cond
        lines.append(f"{'pass' if cond else 'FAIL'}  {name}")

    for mode in MODES:
        rep = cmp["reports"][mode]
        check(f"{mode}: reconstruction equals reference", rep["equivalence"] == "exact")
        check(f"{mode}: no ciphertext-by-ciphertext multiplies", rep["ct_ct_mul"] == 0)
    for mode in ("f", "fp", "fpc"):
        rep = cmp["reports"][mode]
        free = all(rep["steps"][s]["online"]["he_ops"] == 0 for s in ("Embed", "QKV", "Others"))
        check(f"{mode}: prepared steps are HE-free online", free)
    prefix = lambda rep: sum(rep["steps"][s]["online"]["interactions"]
                             for s in ("Embed", "QKV", "QxK"))
    n_blocks = rc.model.N
    check("f: fused prefix online interactions = 4",
          prefix(cmp["reports"]["f"]) == 4 + 2 * (n_blocks - 1))
    check("fpc: fused prefix online interactions = 1 per block",
          prefix(cmp["reports"]["fpc"]) == n_blocks)
    check("base: online HE present",
          cmp["reports"]["base"]["totals"]["online"]["he_ops"] > 0)
    return ok, lines


def cmd_plan(n: int, d: int, slots: int) -> dict:
    """Packing decision and predicted naive-kernel rotation counts."""
    layout = plan_layout(n, d, slots)
    rot_ff = predicted_rotations(PackingLayout(PackingStrategy.FEATURES_FIRST, n, d, slots))
    rot_chosen = predicted_rotations(layout)
    return {
        "schema": "bench-plan/1",
        "n": n,
        "d": d,
        "slots": slots,
        "strategy": layout.strategy.value,
        "ciphertexts": layout.c,
        "rotations": rot_chosen,
        "rotations_features_first": rot_ff,
        "rotation_saving": rot_ff - rot_chosen,
    }


# -- rendering ------------------------------------------------------------------


def render_report(rep: dict) -> str:
    head = (f"mode={rep['mode']} seed={rep['seed']} packing={rep['packing']} "
            f"backend={rep['backend']} equivalence={rep['equivalence']}")
    rows = [head, f"{'step':<12}{'phase':<9}{'inter':>6}{'msgs':>6}{'bytes':>12}{'he_ops':>8}"]
    for step in STEPS:
        for phase in PHASES:
            c = rep["steps"][step][phase]
            rows.append(f"{step:<12}{phase:<9}{c['interactions']:>6}{c['messages']:>6}"
                        f"{c['bytes']:>12}{c['he_ops']:>8}")
    for phase in PHASES:
        tot = rep["totals"][phase]
        rows.append(f"{'total':<12}{phase:<9}{tot['interactions']:>6}{tot['messages']:>6}"
                    f"{tot['bytes']:>12}{tot['he_ops']:>8}")
    lat = rep["modeled_latency_s"]
    rows.append(f"modeled latency (s): offline={lat['offline_s']:.6f} online={lat['online_s']:.6f}")
    return "\n".join(rows)


def render_compare(cmp: dict) -> str:
    modes = cmp["modes"]
    rows = ["online costs per step (interactions / HE ops / bytes), modes: " + " ".join(modes)]
    rows.append(f"{'step':<12}" + "".join(f"{m:>22}" for m in modes))
    for step in STEPS:
        cells = []
        for m in modes:
            c = cmp["reports"][m]["steps"][step]["online"]
            cells.append(f"{c['interactions']:>5}/{c['he_ops']:>6}/{c['bytes']:>9}")
        rows.append(f"{step:<12}" + "".join(f"{c:>22}" for c in cells))
    rows.append("modeled online s: " + "  ".join(
        f"{m}={cmp['reports'][m]['modeled_latency_s']['online_s']:.6f}" for m in modes))
    return "\n".join(rows)


def write_report(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- entry point ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run config JSON path")
    p.add_argument("--mode", choices=MODES, help="override protocol mode")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--report", help="override structured report output path")
    p.add_argument("--strict", action="store_true", default=None,
                   help="range-check nonpoly stage inputs")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="privtrans-bench",
                                 description="two-party inference benchmark driver")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "compare", "verify"):
        _add_common(sub.add_parser(name))
    plan = sub.add_parser("plan")
    plan.add_argument("n", type=int, help="token count")
    plan.add_argument("d", type=int, help="feature width")
    plan.add_argument("slots", type=int, help="HE slot count")
    args = ap.parse_args(argv)

    if args.cmd == "plan":
        rep = cmd_plan(args.n, args.d, args.slots)
        print(json.dumps(rep, indent=2, sort_keys=True))
        return 0

    overrides = {"mode": args.mode, "seed": args.seed, "report": args.report,
                 "strict": args.strict}
    try:
        rc = read_config_file(args.config, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1

    if args.cmd == "run":
        rep = cmd_run(rc)
        print(render_report(rep))
        if rc.report_path:
            write_report(rc.report_path, rep)
        return 0
    if args.cmd == "compare":
        cmp = cmd_compare(rc)
        print(render_compare(cmp))
        if rc.report_path:
            write_report(rc.report_path, cmp)
        return 0
    ok, lines = cmd_verify(rc)
    print("\n".join(lines))
    print("verify:", "pass" if ok else "FAIL")
    if rc.report_path:
        write_report(rc.report_path, {"schema": "bench-verify/1", "ok": ok, "checks": lines})
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
