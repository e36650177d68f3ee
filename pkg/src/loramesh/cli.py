"""Command-line front door.

Verbs: run, freqsel, cluster, phy, energy, footprint, sea-demo.
All outputs are CSV or JSONL with documented headers; exit code 0 on
success, 2 on usage or validation errors.
"""

from __future__ import annotations

import argparse
import csv
import socket
import sys

import numpy as np

from . import energy as energy_mod
from . import freqsel as freqsel_mod
from . import mlmodel, phy
from .engine import Simulator
from .report import export, read_link_metrics_csv
from .scenario import ScenarioError, load_scenario


def _csv_out(rows, header):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


# -- run ----------------------------------------------------------------------

def _cmd_run(args) -> int:
    try:
        spec = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    udp_sink = None
    sock = None
    if args.udp:
        host, _, port = args.udp.rpartition(":")
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        addr = (host or "127.0.0.1", int(port))
        udp_sink = lambda line: sock.sendto(line.encode("utf-8"), addr)
    sim = Simulator(spec, udp_sink=udp_sink)
    report = sim.run()
    if sock is not None:
        sock.close()
    paths = export(report, args.out)
    print(f"simulated {report.duration_s:.0f} s of '{spec.name}' "
          f"(seed {report.seed}, {report.events_processed} events)")
    for p in report.node_summaries:
        ratio = "-" if p.delivery_ratio is None else f"{p.delivery_ratio:.3f}"
        print(f"  node {p.node_id} ({p.role}): delivery {ratio}, "
              f"duty {p.duty_cycle:.4f}, radio {p.avg_radio_power_mw:.3f} mW")
    counts = ", ".join(f"{k}={v}" for k, v in report.outcome_counts.items())
    print(f"  packets: {counts}")
    print("  wrote: " + ", ".join(sorted(paths)))
    return 0


# -- freqsel ------------------------------------------------------------------

def _cmd_freqsel(args) -> int:
    rows = read_link_metrics_csv(args.metrics)
    link_rows = [r for r in rows if r.attempts > 0]
    passive_rows = [r for r in rows if r.noise_p95_dbm is not None]
    if args.method == "offline":
        chosen, ranking = freqsel_mod.offline_select(link_rows)
    elif args.method == "online":
        ctx = freqsel_mod.build_context(link_rows, noise_term=args.noise_term)
        chosen, ranking = freqsel_mod.online_select(
            link_rows, ctx=ctx, link_weighting=args.link_weighting)
    else:
        ctx = freqsel_mod.build_context(link_rows, noise_term=args.noise_term)
        chosen, ranking, shortlist = freqsel_mod.lowpower_select(
            passive_rows, link_rows, args.k, ctx=ctx,
            link_weighting=args.link_weighting)
        print("shortlist_mhz: " +
              ", ".join(f"{f / 1e6:.4f}" for f in shortlist))
    _csv_out([["%.1f" % f, "%.6f" % s] for f, s in ranking],
             ["freq_hz", "score"])
    print(f"chosen_freq_hz: {chosen:.1f}")
    return 0


def _cmd_cluster(args) -> int:
    rows = read_link_metrics_csv(args.metrics)
    result = freqsel_mod.cluster_links(rows, k_clusters=args.k,
                                       seed=args.seed, restarts=args.restarts)
    out = []
    for r, c in zip(result.rows, result.assignments):
        out.append([r.link_id, "%.1f" % r.freq_hz, r.interval, int(c),
                    result.regime_labels[int(c)]])
    _csv_out(out, ["link_id", "freq_hz", "interval", "cluster", "regime"])
    print(f"inertia: {result.inertia:.6f}")
    return 0


# -- phy ----------------------------------------------------------------------

def _phy_cfg(args) -> phy.RadioConfig:
    return phy.RadioConfig(bandwidth_hz=int(args.bw * 1000),
                           spreading_factor=args.sf,
                           coding_rate=args.cr,
                           tx_power_dbm=args.power)


def _cmd_phy(args) -> int:
    cfg = _phy_cfg(args)
    if args.verb == "datarate":
        value = phy.data_rate(cfg)
        rows = [["data_rate_bps", "%.6f" % value]]
    elif args.verb == "airtime":
        value = phy.airtime(cfg, args.payload)
        rows = [["airtime_s", "%.6f" % value]]
    elif args.verb == "sensitivity":
        value = phy.sensitivity(cfg, args.nf)
        rows = [["sensitivity_dbm", "%.6f" % value]]
    else:
        plan = phy.us915_plan(args.channels)
        verdict = phy.fcc_check(cfg, plan, args.mode)
        rows = [["compliant", str(verdict.compliant).lower()]]
        rows += [[rule, reason] for rule, reason in verdict.violations]
    if args.csv:
        _csv_out(rows, ["field", "value"])
    else:
        for _, v in [r if len(r) == 2 else (r[0], r[1]) for r in rows]:
            print(v)
    return 0


# -- energy -------------------------------------------------------------------

def _cmd_energy(args) -> int:
    if args.simulate:
        if args.harvest:
            days = {}
            with open(args.harvest, newline="", encoding="utf-8") as fh:
                for rec in csv.DictReader(fh):
                    days[int(rec["day"])] = float(rec["peak_sun_hours"])
            def harvest_at(t_h: float) -> float:
                day = int(t_h // 24)
                psh = days.get(day, 0.0)
                hour = t_h % 24.0
                lo, hi = 12.0 - psh / 2, 12.0 + psh / 2
                return args.panel_w if lo <= hour < hi else 0.0
        else:
            def harvest_at(t_h: float) -> float:
                hour = t_h % 24.0
                lo = 12.0 - args.sun_hours / 2
                hi = 12.0 + args.sun_hours / 2
                return args.panel_w if lo <= hour < hi else 0.0
        result = energy_mod.simulate_soc(
            args.capacity_wh, args.capacity_wh * args.initial_frac,
            args.load_w, harvest_at, args.days * 24.0, step_h=args.step_h,
            efficiency=args.efficiency)
        rows = [["%.4f" % t, "%.6f" % s]
                for t, s in zip(result.times_h, result.soc_wh)]
        if args.out:
            with open(args.out, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t_h", "soc_wh"])
                w.writerows(rows)
            print(f"wrote {args.out}")
        print(f"outages: {result.outage_count}")
        for (t0, t1) in result.outages:
            end = "-" if t1 is None else f"{t1:.2f}"
            print(f"  empty at {t0:.2f} h, restart at {end} h")
        return 0
    # sizing arithmetic
    req = energy_mod.storage_requirement(args.load_w, args.hours,
                                         args.efficiency)
    harv = energy_mod.daily_harvest(
        energy_mod.HarvesterSpec(args.panel_w, args.sun_hours,
                                 args.efficiency))
    profile = energy_mod.PowerProfile()
    print(f"storage_requirement_wh: {req:.3f}")
    print(f"daily_harvest_wh: {harv:.3f}")
    print(f"default_profile_total_mw: {energy_mod.total_power(profile):.3f}")
    return 0


# -- footprint ----------------------------------------------------------------

def _cmd_footprint(args) -> int:
    if args.model:
        spec, default_bytes = mlmodel.MODEL_PRESETS[args.model]
    else:
        import yaml
        with open(args.spec, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        spec = mlmodel.ConvStackSpec(
            input_hw=tuple(raw["input_hw"]),
            block_filters=tuple(raw["block_filters"]),
            width_factor=float(raw.get("width_factor", 1.0)),
            pool_rounding=raw.get("pool_rounding", "floor"))
        default_bytes = 1
    bpe = {"f32": 4, "i8": 1}[args.quant] if args.quant else default_bytes
    shapes = mlmodel.layer_shapes(spec, bpe)
    rows = []
    for i, s in enumerate(shapes):
        rows.append([f"conv{2 * i + 1}/conv{2 * i + 2}",
                     s.height, s.width, s.channels,
                     mlmodel.activation_kib(s)])
    rows.append(["total", "", "", "", mlmodel.total_activation_kib(spec, bpe)])
    rows.append(["static_bytes", "", "", "",
                 mlmodel.static_size_bytes(spec, 1 if bpe == 1 else 4)])
    _csv_out(rows, ["layer", "height", "width", "channels", "kib"])
    return 0


def _cmd_sea_demo(args) -> int:
    gen = np.random.default_rng(args.seed)
    if args.teacher:
        teacher = np.loadtxt(args.teacher, delimiter=",")
    else:
        # synthetic teacher embeddings on a low-dimensional manifold
        latent = gen.normal(size=(args.samples, args.dim))
        mix = gen.normal(size=(args.dim, args.teacher_dim))
        teacher = latent @ mix + 0.01 * gen.normal(
            size=(args.samples, args.teacher_dim))
    pca = mlmodel.pca_fit(teacher, args.dim)
    targets = pca.project(teacher)
    features = teacher + 0.05 * gen.normal(size=teacher.shape)
    w, residual = mlmodel.fit_linear_student(features, targets)
    baseline = mlmodel.sea_objective(np.zeros_like(targets), targets)
    print(f"samples: {teacher.shape[0]}, teacher_dim: {teacher.shape[1]}, "
          f"reduced_dim: {args.dim}")
    print(f"objective_zero_student: {baseline:.6f}")
    print(f"objective_linear_student: {residual:.6f}")
    print(f"explained_fraction: {1.0 - residual / baseline:.6f}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="loramesh",
        description="Frequency-agile multi-hop LoRa mesh simulator and tools")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="simulate a scenario file")
    run.add_argument("scenario")
    run.add_argument("--out", default="out")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--udp", default=None, metavar="HOST:PORT")
    run.set_defaults(fn=_cmd_run)

    fs = sub.add_parser("freqsel", help="rank frequencies from a metrics CSV")
    fs.add_argument("--metrics", required=True)
    fs.add_argument("--method", choices=("offline", "online", "lowpower"),
                    default="online")
    fs.add_argument("--k", type=int, default=5)
    fs.add_argument("--noise-term", choices=("inverted", "raw"),
                    default="inverted", dest="noise_term")
    fs.add_argument("--link-weighting", choices=("per_link", "flat"),
                    default="per_link", dest="link_weighting")
    fs.set_defaults(fn=_cmd_freqsel)

    cl = sub.add_parser("cluster", help="cluster link-interval metrics")
    cl.add_argument("--metrics", required=True)
    cl.add_argument("--k", type=int, default=8)
    cl.add_argument("--seed", type=int, default=0)
    cl.add_argument("--restarts", type=int, default=10)
    cl.set_defaults(fn=_cmd_cluster)

    ph = sub.add_parser("phy", help="LoRa link math")
    ph.add_argument("verb", choices=("datarate", "airtime", "sensitivity", "fcc"))
    ph.add_argument("--bw", type=float, default=500.0, help="kHz")
    ph.add_argument("--sf", type=int, default=8)
    ph.add_argument("--cr", default="4/5")
    ph.add_argument("--power", type=float, default=27.0)
    ph.add_argument("--payload", type=int, default=20)
    ph.add_argument("--nf", type=float, default=6.0)
    ph.add_argument("--mode", choices=("single_frequency", "hopping"),
                    default="single_frequency")
    ph.add_argument("--channels", type=int, default=52)
    ph.add_argument("--csv", action="store_true")
    ph.set_defaults(fn=_cmd_phy)

    en = sub.add_parser("energy", help="harvester sizing and battery runs")
    en.add_argument("--sizing", action="store_true")
    en.add_argument("--simulate", action="store_true")
    en.add_argument("--load-w", type=float, default=0.1, dest="load_w")
    en.add_argument("--hours", type=float, default=72.0)
    en.add_argument("--efficiency", type=float, default=0.8)
    en.add_argument("--panel-w", type=float, default=5.0, dest="panel_w")
    en.add_argument("--sun-hours", type=float, default=3.0, dest="sun_hours")
    en.add_argument("--capacity-wh", type=float, default=12.0,
                    dest="capacity_wh")
    en.add_argument("--initial-frac", type=float, default=1.0,
                    dest="initial_frac")
    en.add_argument("--days", type=float, default=7.0)
    en.add_argument("--step-h", type=float, default=0.25, dest="step_h")
    en.add_argument("--harvest", default=None,
                    help="CSV with day,peak_sun_hours columns")
    en.add_argument("--out", default=None)
    en.set_defaults(fn=_cmd_energy)

    fp = sub.add_parser("footprint", help="CNN activation/static memory table")
    group = fp.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", choices=sorted(mlmodel.MODEL_PRESETS))
    group.add_argument("--spec", help="YAML conv-stack description")
    fp.add_argument("--quant", choices=("f32", "i8"), default=None)
    fp.set_defaults(fn=_cmd_footprint)

    sea = sub.add_parser("sea-demo",
                         help="PCA + linear-student embedding pipeline")
    sea.add_argument("--teacher", default=None,
                     help="CSV matrix of teacher embeddings")
    sea.add_argument("--dim", type=int, default=8)
    sea.add_argument("--teacher-dim", type=int, default=64, dest="teacher_dim")
    sea.add_argument("--samples", type=int, default=512)
    sea.add_argument("--seed", type=int, default=0)
    sea.set_defaults(fn=_cmd_sea_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
