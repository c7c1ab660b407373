"""Batch experiment runner: sweeps, A/B scan comparisons, oracle checks.

Subcommands:
  model     evaluate the closed-form sector predictors over a sweep
  simulate  generate a trace and replay it through the cache model
  compare   run two scan/schedule variants of one workload side by side
  oracle    cross-validate the LRU simulator against stack-distance predictions

Workloads come from CLI flags, from a JSON spec file, or both (flags win).
All counters are emitted as exact integers; every report embeds the resolved
spec that produced it plus a hash of that spec, so reports are reproducible
and self-describing.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cachesim import classify, lru_misses, simulate
from .config import (
    DEFAULT_ELEM_BYTES,
    DEFAULT_HEAD_DIM,
    DEFAULT_SECTOR_BYTES,
    DEFAULT_TILE,
    AttentionConfig,
    CacheModel,
    ConfigError,
    Fidelity,
    Scan,
    Schedule,
    SchedulePolicy,
    validate,
)
from .models import (
    cold_sectors,
    mape,
    sectors_causal_approx,
    sectors_noncausal_approx,
)
from .reuse import (
    histogram_from_distances,
    misses_at_capacity,
    stack_distances,
    stack_distances_naive,
)
from .tracegen import TraceCapError, gen_trace, trace_totals

OUT_DIR_ENV = "ATTNL2_OUT_DIR"
DEFAULT_MAX_POINTS = 4096

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_SPEC = 2


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _scan_list(text: str) -> list[Scan]:
    return [Scan(v.strip()) for v in text.split(",") if v.strip()]


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", type=Path, help="JSON spec file; explicit flags override it")
    p.add_argument("--seq-len", type=_int_list, help="sequence length(s), comma separated")
    p.add_argument("--tile", type=int, help="square tile size T")
    p.add_argument("--head-dim", type=int, help="head dimension D")
    p.add_argument("--elem-bytes", type=int, help="bytes per element (1, 2 or 4)")
    p.add_argument("--batch", type=_int_list, help="batch size(s), comma separated")
    p.add_argument("--heads", type=int, help="number of heads")
    p.add_argument("--causal", action="store_true", default=None, help="causal masking")
    p.add_argument("--sm", type=_int_list, help="SM count(s), comma separated")
    p.add_argument("--l2-bytes", type=int, help="L2 capacity in bytes")
    p.add_argument("--sector-bytes", type=int, help="sector size in bytes")
    p.add_argument("--ways", type=int, help="set-associative ways (omit for fully associative)")
    p.add_argument(
        "--schedule", choices=[s.value for s in Schedule], help="CTA scheduling policy"
    )
    p.add_argument("--grid-size", type=int, help="persistent grid size override")
    p.add_argument("--scan", type=_scan_list, help="KV scan order(s): cyclic,sawtooth")
    p.add_argument(
        "--fidelity", choices=[f.value for f in Fidelity], help="simulation granularity"
    )
    p.add_argument("--max-points", type=int, default=DEFAULT_MAX_POINTS)
    p.add_argument("--out", type=Path, help=f"output path (default stdout; ${OUT_DIR_ENV} "
                   "prefixes relative paths)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized subcommands")


class ExperimentSpec:
    """One resolved sweep: fixed fields plus per-axis value lists."""

    def __init__(self, args: argparse.Namespace):
        doc = {}
        if args.spec:
            doc = json.loads(Path(args.spec).read_text())
        cfg = dict(doc.get("config", {}))
        cache = dict(doc.get("cache", {}))
        sched = dict(doc.get("schedule", {}))
        sweep = dict(doc.get("sweep", {}))

        def flag(name, current):
            v = getattr(args, name, None)
            return v if v is not None else current

        def axis(explicit, from_sweep, fallback):
            for values in (explicit, from_sweep):
                if values is not None:
                    if len(values) == 0:
                        raise ConfigError(["sweep axes must be non-empty"])
                    return list(values)
            return fallback

        self.seq_lens = axis(
            args.seq_len,
            sweep.get("seq_len"),
            [cfg["seq_len"]] if "seq_len" in cfg else None,
        )
        if self.seq_lens is None:
            raise ConfigError(["seq_len is required (flag --seq-len or spec file)"])
        self.batches = axis(args.batch, sweep.get("batch"), [cfg.get("batch", 1)])
        self.sms = axis(args.sm, sweep.get("n_sm"), [cache.get("n_sm", CacheModel().n_sm)])
        self.scans = axis(
            args.scan,
            [Scan(s) for s in sweep["scan"]] if "scan" in sweep else None,
            [Scan(doc.get("scan", "cyclic"))],
        )

        self.tile = flag("tile", cfg.get("tile", DEFAULT_TILE))
        self.head_dim = flag("head_dim", cfg.get("head_dim", DEFAULT_HEAD_DIM))
        self.elem_bytes = flag("elem_bytes", cfg.get("elem_bytes", DEFAULT_ELEM_BYTES))
        self.heads = flag("heads", cfg.get("heads", 1))
        self.causal = bool(flag("causal", cfg.get("causal", False)))
        self.l2_bytes = flag("l2_bytes", cache.get("capacity_bytes", CacheModel().capacity_bytes))
        self.sector_bytes = flag("sector_bytes", cache.get("sector_bytes", DEFAULT_SECTOR_BYTES))
        self.ways = flag("ways", cache.get("ways"))
        self.schedule = Schedule(flag("schedule", sched.get("kind", "persistent")))
        self.grid_size = flag("grid_size", sched.get("grid_size"))
        self.fidelity = Fidelity(flag("fidelity", doc.get("fidelity", "sector")))

        n_points = len(self.seq_lens) * len(self.batches) * len(self.sms) * len(self.scans)
        if n_points == 0:
            raise ConfigError(["sweep axes must be non-empty"])
        if n_points > args.max_points:
            raise ConfigError(
                [f"sweep has {n_points} points, above --max-points {args.max_points}"]
            )

    def points(self):
        for s in self.seq_lens:
            for b in self.batches:
                for n_sm in self.sms:
                    for scan in self.scans:
                        yield self.point(s, b, n_sm, scan)

    def point(self, seq_len: int, batch: int, n_sm: int, scan: Scan):
        config = AttentionConfig(
            seq_len=seq_len,
            head_dim=self.head_dim,
            tile=self.tile,
            elem_bytes=self.elem_bytes,
            batch=batch,
            heads=self.heads,
            causal=self.causal,
        )
        cache = CacheModel(
            capacity_bytes=self.l2_bytes,
            sector_bytes=self.sector_bytes,
            ways=self.ways,
            n_sm=n_sm,
        )
        sched = SchedulePolicy(kind=self.schedule, grid_size=self.grid_size)
        return config, cache, sched, scan


def _spec_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _point_spec(config, cache, sched, scan, fidelity=None) -> dict:
    d = {
        "config": config.to_dict(),
        "cache": cache.to_dict(),
        "schedule": sched.to_dict(),
        "scan": scan.value,
    }
    if fidelity is not None:
        d["fidelity"] = fidelity.value
    return d


def _flat_point(config, cache, sched, scan, fidelity=None) -> dict:
    """Fully resolved point spec as flat columns, so each row is self-describing."""
    row = {
        **config.to_dict(),
        **cache.to_dict(),
        "schedule": sched.kind.value,
        "grid_size": sched.grid_size,
        "scan": scan.value,
    }
    if fidelity is not None:
        row["fidelity"] = fidelity.value
    row["spec_hash"] = _spec_hash(_point_spec(config, cache, sched, scan, fidelity))
    return row


def _resolve_out(path: Path | None) -> Path | None:
    if path is None:
        return None
    base = os.environ.get(OUT_DIR_ENV)
    if base and not path.is_absolute():
        return Path(base) / path
    return path


def _emit(rows: list[dict], fmt: str, out: Path | None, envelope: dict | None = None) -> None:
    if fmt == "json":
        doc = dict(envelope or {})
        doc["points"] = rows
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        if rows:
            keys = list(rows[0].keys())
            w = csv.DictWriter(buf, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow({k: r.get(k, "") for k in keys})
        text = buf.getvalue()
    out = _resolve_out(out)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}")


def _envelope() -> dict:
    return {"tool": "attnl2", "version": __version__, "created_unix": int(time.time())}


def _validated_points(spec: ExperimentSpec) -> list:
    pts = list(spec.points())
    for config, cache, sched, _scan in pts:
        errors = validate(config, cache, sched)
        if errors:
            raise ConfigError(errors)
    return pts


# -- subcommands ------------------------------------------------------------------


def cmd_model(args) -> int:
    spec = ExperimentSpec(args)
    rows = []
    observed = []
    for config, cache, sched, scan in _validated_points(spec):
        fn = sectors_causal_approx if config.causal else sectors_noncausal_approx
        pred = fn(
            config.seq_len,
            config.head_dim,
            config.elem_bytes,
            cache.sector_bytes,
            config.tile,
        )
        scale = config.num_slices
        exact = trace_totals(gen_trace(config, cache, sched, scan)).total
        observed.append((exact, pred.total * scale))
        rows.append(
            {
                **_flat_point(config, cache, sched, scan),
                "model_sectors": pred.total * scale,
                "model_qo_sectors": pred.qo_sectors * scale,
                "model_kv_sectors": pred.kv_sectors * scale,
                "exact_sectors": exact,
                "cold_sectors": cold_sectors(
                    config.seq_len, config.head_dim, config.elem_bytes, cache.sector_bytes
                ) * scale,
                "ape_pct": abs(exact - pred.total * scale) / exact * 100.0,
                "mape_running_pct": mape(observed),
            }
        )
    _emit(rows, args.format, args.out, _envelope())
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = ExperimentSpec(args)
    rows = []
    for config, cache, sched, scan in _validated_points(spec):
        t0 = time.time()
        trace = gen_trace(config, cache, sched, scan)
        stats = simulate(trace, fidelity=spec.fidelity, track_waves=bool(args.wave_series))
        fn = sectors_causal_approx if config.causal else sectors_noncausal_approx
        pred = fn(
            config.seq_len, config.head_dim, config.elem_bytes, cache.sector_bytes, config.tile
        )
        total = stats.total
        rows.append(
            {
                **_flat_point(config, cache, sched, scan, spec.fidelity),
                "accesses": total.accesses,
                "hits": total.hits,
                "misses": total.misses,
                "compulsory_misses": total.compulsory_misses,
                "non_compulsory_misses": total.non_compulsory_misses,
                "hit_rate": total.hit_rate,
                "kv_hit_rate": stats.kv.hit_rate,
                "model_sectors": pred.total * config.num_slices,
                "cold_model": cold_sectors(
                    config.seq_len, config.head_dim, config.elem_bytes, cache.sector_bytes
                ) * config.num_slices,
                "elapsed_s": round(time.time() - t0, 3),
            }
        )
        if args.wave_series and stats.waves is not None:
            series_path = _resolve_out(Path(args.wave_series))
            series_path.parent.mkdir(parents=True, exist_ok=True)
            with series_path.open("w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["wave", "accesses", "hits", "hit_rate"])
                rates = stats.waves.hit_rates()
                for i in range(len(rates)):
                    w.writerow(
                        [i, int(stats.waves.accesses[i]), int(stats.waves.hits[i]), rates[i]]
                    )
            print(f"wrote {series_path}")
    _emit(rows, args.format, args.out, _envelope())
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = ExperimentSpec(args)
    base_scan = Scan(args.baseline_scan)
    alt_scan = Scan(args.alternate_scan)
    base_sched = SchedulePolicy(Schedule(args.baseline_schedule or spec.schedule.value),
                                spec.grid_size)
    alt_sched = SchedulePolicy(Schedule(args.alternate_schedule or spec.schedule.value),
                               spec.grid_size)
    rows = []
    failed = 0
    for s in spec.seq_lens:
        for b in spec.batches:
            for n_sm in spec.sms:
                config, cache, _sched, _ = spec.point(s, b, n_sm, base_scan)
                errors = validate(config, cache, base_sched) + validate(config, cache, alt_sched)
                if errors:
                    raise ConfigError(errors)
                stats_a = simulate(
                    gen_trace(config, cache, base_sched, base_scan), fidelity=spec.fidelity
                )
                stats_b = simulate(
                    gen_trace(config, cache, alt_sched, alt_scan), fidelity=spec.fidelity
                )
                rep = classify(stats_a, stats_b)
                gated = rep.baseline_non_compulsory > 0
                ok = (not gated) or (
                    rep.non_compulsory_reduction is not None
                    and rep.non_compulsory_reduction >= args.min_reduction
                )
                if not ok:
                    failed += 1
                flat = _flat_point(config, cache, base_sched, base_scan, spec.fidelity)
                flat.pop("scan")
                rows.append(
                    {
                        **flat,
                        "baseline": f"{base_sched.kind.value}/{base_scan.value}",
                        "alternate": f"{alt_sched.kind.value}/{alt_scan.value}",
                        **rep.as_dict(),
                        "meets_threshold": ok,
                    }
                )
    _emit(rows, args.format, args.out, _envelope())
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _random_trace(rng: np.random.Generator, max_events: int, max_sectors: int) -> np.ndarray:
    """Seeded random access stream mixing uniform, cyclic and sawtooth phases."""
    n_ids = int(rng.integers(1, max_sectors + 1))
    parts = []
    remaining = int(rng.integers(1, max_events + 1))
    while remaining > 0:
        kind = rng.integers(0, 3)
        span = min(remaining, int(rng.integers(1, max(2, n_ids * 2))))
        if kind == 0:
            parts.append(rng.integers(0, n_ids, span))
        elif kind == 1:  # cyclic passes
            reps = -(-span // n_ids)
            parts.append(np.tile(np.arange(n_ids), reps)[:span])
        else:  # forward/backward passes
            fwd = np.arange(n_ids)
            reps = -(-span // n_ids)
            saw = np.concatenate([fwd if i % 2 == 0 else fwd[::-1] for i in range(reps)])
            parts.append(saw[:span])
        remaining -= span
    return np.concatenate(parts).astype(np.int64)


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = []
    for trial in range(args.trials):
        trial_seed = int(rng.integers(0, 2**62))
        ids = _random_trace(
            np.random.default_rng(trial_seed), args.events, args.sectors
        )
        hist = stack_distances(ids)
        mismatched = []
        for cap in range(0, args.sectors + 1):
            predicted = misses_at_capacity(hist, cap)
            simulated = lru_misses(ids, cap)
            if predicted != simulated:
                mismatched.append((cap, simulated, predicted))
        if len(ids) <= args.naive_limit:
            naive = histogram_from_distances(stack_distances_naive(ids))
            for cap in range(0, args.sectors + 1):
                if misses_at_capacity(naive, cap) != misses_at_capacity(hist, cap):
                    mismatched.append((cap, -1, -1))
                    break
        if mismatched:
            failures.append((trial, trial_seed, mismatched[:3]))
            base = args.out if args.out else Path(".")
            dump = _resolve_out(base / f"oracle_mismatch_{trial_seed}.npy")
            dump.parent.mkdir(parents=True, exist_ok=True)
            np.save(dump, ids)
            print(f"MISMATCH trial={trial} seed={trial_seed} -> {dump}")
            for cap, sim_m, pred_m in mismatched[:3]:
                print(f"  capacity={cap}: simulated={sim_m} predicted={pred_m}")
    verdict = "ok" if not failures else "mismatch"
    print(
        f"oracle: {args.trials} traces, capacities 0..{args.sectors}, "
        f"seed={args.seed}: {verdict}"
    )
    return EXIT_CHECK_FAILED if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnl2",
        description="Trace-driven L2 cache experiments for tiled attention kernels.",
    )
    parser.add_argument("--version", action="version", version=f"attnl2 {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="closed-form sector predictions over a sweep")
    _add_workload_flags(p_model)
    p_model.set_defaults(fn=cmd_model)

    p_sim = sub.add_parser("simulate", help="trace generation plus cache simulation")
    _add_workload_flags(p_sim)
    p_sim.add_argument("--wave-series", type=Path, help="also write per-wave hit rates (CSV)")
    p_sim.set_defaults(fn=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="A/B two scan or schedule variants")
    _add_workload_flags(p_cmp)
    p_cmp.add_argument("--baseline-scan", default="cyclic", choices=[s.value for s in Scan])
    p_cmp.add_argument("--alternate-scan", default="sawtooth", choices=[s.value for s in Scan])
    p_cmp.add_argument("--baseline-schedule", choices=[s.value for s in Schedule])
    p_cmp.add_argument("--alternate-schedule", choices=[s.value for s in Schedule])
    p_cmp.add_argument(
        "--min-reduction",
        type=float,
        default=0.45,
        help="non-compulsory reduction gate (fraction of baseline)",
    )
    p_cmp.set_defaults(fn=cmd_compare)

    p_orc = sub.add_parser("oracle", help="simulator vs stack-distance cross-validation")
    p_orc.add_argument("--trials", type=int, default=100)
    p_orc.add_argument("--events", type=int, default=10_000)
    p_orc.add_argument("--sectors", type=int, default=256)
    p_orc.add_argument("--naive-limit", type=int, default=1500,
                       help="run the quadratic reference on traces up to this length")
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.add_argument("--out", type=Path, help="directory for mismatch dumps")
    p_orc.set_defaults(fn=cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        for msg in e.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_BAD_SPEC
    except TraceCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_SPEC
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_SPEC


if __name__ == "__main__":
    raise SystemExit(main())
