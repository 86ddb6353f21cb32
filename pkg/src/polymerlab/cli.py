"""Command-line front end: configuration, seeds, parallelism, artifacts.

Usage::

    polymerlab <gen|fpp|polymer|ensemble|report> [--config cfg.json] [--key=value ...]

Subcommands
    gen       write one environment slab (binary + JSON sidecar)
    fpp       one passage-time instance: result JSON plus optimal-path CSV
    polymer   one partition-function instance: result JSON, optional beta CSV
    ensemble  full replica run: raw table, optional continuity / trend scans
    report    aggregate raw tables into fluctuation / slope / max-jump CSVs

Configuration is a JSON object; ``--key=value`` flags override file entries.
Flag values are parsed as JSON when possible and fall back to plain strings,
so ``--p=0.7`` is a float, ``--n_list=[64,128]`` a list, and ``--beta=-inf``
selects the hard-obstacle mode.  Unknown keys are hard errors.

Every artifact lands inside ``out_dir`` and embeds the effective
configuration plus its sha256 hash in its preamble; wall-clock timestamps
live only in ``*.meta.json`` sidecars, so scientific outputs are byte-stable
across reruns.  Exit codes: 0 success, 2 configuration error, 3 capacity
error, 4 infeasible instance, 5 internal failure.  Failures print a JSON
object {code, message, context} on stderr.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, replace as dc_replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .env import NEG_INFINITY, ModelParams, generate_slab, load_slab, save_slab
from .errors import CapacityError, InfeasibleLayerError, PolymerlabError, ValidationError
from .fpp import passage_time
from .polymer import (
    default_half_width,
    hard_obstacle_partition,
    kernel_normalizer,
    partition_function,
)
from .stats import (
    EnsembleSpec,
    RawTable,
    concentration_scan,
    continuity_scan,
    fpp_half_width,
    hd_trend_check,
    read_raw_table,
    run_ensemble,
    write_raw_table,
)
from .tables import dump_json, json_safe, read_table, write_table

SUBCOMMANDS = ("gen", "fpp", "polymer", "ensemble", "report")

_REQUIRED = object()


def _reject_bool(key, value):
    if isinstance(value, bool):
        raise ValidationError(f"config key {key!r}: expected a number, got a boolean", key=key)


def _as_int(key, value) -> int:
    _reject_bool(key, value)
    if isinstance(value, int):
        return value
    raise ValidationError(f"config key {key!r}: expected an integer, got {value!r}", key=key)


def _as_float(key, value) -> float:
    _reject_bool(key, value)
    if isinstance(value, (int, float)):
        return float(value)
    raise ValidationError(f"config key {key!r}: expected a number, got {value!r}", key=key)


def _as_beta(key, value) -> float:
    if value == "-inf":
        return NEG_INFINITY
    return _as_float(key, value)


def _as_str(key, value) -> str:
    if isinstance(value, str):
        return value
    raise ValidationError(f"config key {key!r}: expected a string, got {value!r}", key=key)


def _as_list(key, value, item) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) == 0:
        raise ValidationError(f"config key {key!r}: expected a non-empty list, got {value!r}", key=key)
    return tuple(item(key, v) for v in value)


def _as_int_list(key, value):
    return _as_list(key, value, _as_int)


def _as_float_list(key, value):
    return _as_list(key, value, _as_float)


def _as_beta_list(key, value):
    return _as_list(key, value, _as_beta)


def _as_targets(key, value):
    out = _as_list(key, value, _as_str)
    bad = [t for t in out if t not in ("FPP", "POLYMER")]
    if bad:
        raise ValidationError(f"config key {key!r}: unknown target {bad[0]!r}", key=key)
    return out


def _as_formats(key, value):
    out = _as_list(key, value, _as_str)
    bad = [f for f in out if f not in ("csv", "json")]
    if bad:
        raise ValidationError(f"config key {key!r}: unknown format {bad[0]!r}", key=key)
    return out


def _opt(conv):
    def inner(key, value):
        return None if value is None else conv(key, value)

    return inner


_SCHEMA = {
    "d": (_as_int, _REQUIRED),
    "alpha": (_as_float, _REQUIRED),
    "c2": (_as_float, _REQUIRED),
    "p": (_as_float, _REQUIRED),
    "beta": (_as_beta, 0.0),
    "theta": (_as_float, 0.4),
    "zeta": (_as_float, 0.5),
    "delta": (_as_float, 0.1),
    "chi": (_as_float, 0.6),
    "n_list": (_as_int_list, _REQUIRED),
    "replicas": (_as_int, _REQUIRED),
    "seed": (_as_int, _REQUIRED),
    "targets": (_as_targets, ("FPP",)),
    "formats": (_as_formats, ("csv", "json")),
    "out_dir": (_as_str, "out"),
    "jobs": (_as_int, 1),
    "capacity": (_as_int, 1 << 27),
    "kernel_epsilon": (_as_float, 1e-12),
    "half_width": (_opt(_as_int), None),
    "slab": (_opt(_as_str), None),
    "beta_list": (_opt(_as_beta_list), None),
    "p_grid": (_opt(_as_float_list), None),
    "beta_grid": (_opt(_as_float_list), None),
    "hd_p_list": (_opt(_as_float_list), None),
    "raw": (_opt(lambda k, v: _as_list(k, v, _as_str)), None),
}

# keys that do not alter computed rows and therefore stay out of config_hash
_HASH_EXCLUDE = frozenset({"out_dir", "formats", "jobs", "raw"})


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration after defaults and flag overrides."""

    d: int
    alpha: float
    c2: float
    p: float
    beta: float
    theta: float
    zeta: float
    delta: float
    chi: float
    n_list: tuple[int, ...]
    replicas: int
    seed: int
    targets: tuple[str, ...]
    formats: tuple[str, ...]
    out_dir: str
    jobs: int
    capacity: int
    kernel_epsilon: float
    half_width: int | None
    slab: str | None
    beta_list: tuple[float, ...] | None
    p_grid: tuple[float, ...] | None
    beta_grid: tuple[float, ...] | None
    hd_p_list: tuple[float, ...] | None
    raw: tuple[str, ...] | None

    def model_params(self) -> ModelParams:
        return ModelParams(
            d=self.d,
            alpha=self.alpha,
            c2=self.c2,
            p=self.p,
            beta=self.beta,
            theta=self.theta,
            zeta=self.zeta,
        )

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(
            params=self.model_params(),
            n_list=self.n_list,
            replicas=self.replicas,
            master_seed=self.seed,
            targets=self.targets,
        )

    def canonical_json(self) -> str:
        """Canonical JSON of the keys that determine computed values.

        Output location, formats, worker count, and report inputs do not
        change any row, so they stay out of the hash; otherwise the same
        experiment written to two directories could never be merged.
        """
        data = {k: getattr(self, k) for k in _SCHEMA if k not in _HASH_EXCLUDE}
        data = {k: (list(v) if isinstance(v, tuple) else v) for k, v in data.items()}
        return json.dumps(json_safe(data), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_config(path: str | None, overrides=()) -> RunConfig:
    """Merge a JSON config file with --key=value overrides (flags win).

    Unknown keys are hard errors, as are missing required keys and values of
    the wrong type; every message names the offending key.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}", path=str(path))
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"flag --{item} needs the form --key=value")
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    unknown = sorted(set(data) - set(_SCHEMA))
    if unknown:
        extra = f" (and {len(unknown) - 1} more)" if len(unknown) > 1 else ""
        raise ValidationError(f"unknown config key {unknown[0]!r}{extra}", key=unknown[0])
    missing = sorted(k for k, (_, d) in _SCHEMA.items() if d is _REQUIRED and k not in data)
    if missing:
        raise ValidationError(f"missing required config keys: {missing}")
    fields = {}
    for key, (conv, default) in _SCHEMA.items():
        fields[key] = conv(key, data[key]) if key in data else default
    cfg = RunConfig(**fields)
    if cfg.jobs < 1:
        raise ValidationError(f"config key 'jobs': must be >= 1, got {cfg.jobs}", key="jobs")
    if cfg.capacity < 1:
        raise ValidationError(
            f"config key 'capacity': must be >= 1, got {cfg.capacity}", key="capacity"
        )
    cfg.model_params()  # surface bad model parameters before any work
    return cfg


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------


def _config_meta(cfg: RunConfig) -> dict:
    return {"config": cfg.canonical_json(), "config_hash": cfg.config_hash()}


def _table_meta(cfg: RunConfig) -> dict:
    return {**_config_meta(cfg), "polymerlab_version": __version__}


def _sidecar(out_dir: Path, sub: str, cfg: RunConfig, extra: dict | None = None) -> None:
    payload = {
        "subcommand": sub,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config_hash": cfg.config_hash(),
        "polymerlab_version": __version__,
    }
    if extra:
        payload.update(extra)
    dump_json(out_dir / f"{sub}.meta.json", payload)


def _single_n(cfg: RunConfig, sub: str) -> int:
    if len(cfg.n_list) != 1:
        raise ValidationError(
            f"{sub} runs a single instance and needs exactly one entry in n_list, "
            f"got {list(cfg.n_list)}",
            key="n_list",
        )
    return cfg.n_list[0]


def _load_or_generate(cfg: RunConfig, params, n: int, half_width: int):
    if cfg.slab is not None:
        slab = load_slab(cfg.slab)
        if slab.n < n:
            raise ValidationError(
                f"stored slab has {slab.n} layers but n={n} was requested", key="slab"
            )
        return slab
    return generate_slab(params, n, half_width, cfg.seed, max_cells=cfg.capacity)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_gen(cfg: RunConfig, out: Path) -> list[str]:
    n = _single_n(cfg, "gen")
    params = cfg.model_params()
    L = cfg.half_width if cfg.half_width is not None else fpp_half_width(params, n)
    slab = generate_slab(params, n, L, cfg.seed, max_cells=cfg.capacity)
    save_slab(slab, out / "slab.bin")
    return ["slab.bin", "slab.bin.json"]


def _cmd_fpp(cfg: RunConfig, out: Path) -> list[str]:
    n = _single_n(cfg, "fpp")
    params = cfg.model_params()
    L = cfg.half_width if cfg.half_width is not None else fpp_half_width(params, n)
    slab = _load_or_generate(cfg, params, n, L)
    res = passage_time(slab, n, params)
    summary = res.to_dict()
    path = summary.pop("path")
    summary.update(
        n=n,
        max_jump=path["max_jump"],
        hamiltonian=path["hamiltonian"],
        **_config_meta(cfg),
        polymerlab_version=__version__,
    )
    dump_json(out / "fpp_result.json", summary)

    cols = ["layer", "x0"] + (["x1"] if params.d == 2 else []) + ["jump", "cum_energy"]
    rows = []
    cum = 0.0
    for k in range(n + 1):
        pos = res.path.positions[k]
        jump = 0 if k == 0 else int(res.path.jumps[k - 1])
        cum += float(jump) ** params.alpha if jump else 0.0
        row = {"layer": k, "x0": int(pos[0]), "jump": jump, "cum_energy": cum}
        if params.d == 2:
            row["x1"] = int(pos[1])
        rows.append(row)
    write_table(out / "path.csv", cols, rows, _table_meta(cfg))
    return ["fpp_result.json", "path.csv"]


def _cmd_polymer(cfg: RunConfig, out: Path) -> list[str]:
    n = _single_n(cfg, "polymer")
    params = cfg.model_params()
    kernel = kernel_normalizer(params, cfg.kernel_epsilon)
    L = (
        cfg.half_width
        if cfg.half_width is not None
        else default_half_width(params, n, kernel, max_cells=cfg.capacity)
    )
    slab = _load_or_generate(cfg, params, n, L)
    if params.hard_obstacle:
        res = hard_obstacle_partition(slab, n, params, kernel)
    else:
        res = partition_function(slab, n, params, kernel)
    payload = res.to_dict()
    payload.update(n=n, **_config_meta(cfg), polymerlab_version=__version__)
    dump_json(out / "polymer_result.json", payload)
    artifacts = ["polymer_result.json"]

    if cfg.beta_list is not None:
        rows = []
        for b in cfg.beta_list:
            pg = dc_replace(params, beta=b)
            if pg.hard_obstacle:
                r = hard_obstacle_partition(slab, n, pg, kernel)
            else:
                r = partition_function(slab, n, pg, kernel)
            rows.append({"beta": b, "log_z": r.log_z, "certificate": r.error_certificate})
        write_table(out / "betas.csv", ["beta", "log_z", "certificate"], rows, _table_meta(cfg))
        artifacts.append("betas.csv")
    return artifacts


def _write_continuity(path, curve, meta) -> None:
    cols = ["kind", "grid_value", "count", "estimate", "stderr", "jump_ok"]
    rows = []
    for i, g in enumerate(curve.grid):
        rows.append(
            {
                "kind": curve.kind,
                "grid_value": g,
                "count": curve.counts[i],
                "estimate": curve.estimates[i],
                "stderr": curve.stderrs[i],
                # the jump entering this grid point; blank on the first row
                "jump_ok": None if i == 0 else curve.jump_ok[i - 1],
            }
        )
    write_table(path, cols, rows, meta)


def _cmd_ensemble(cfg: RunConfig, out: Path) -> list[str]:
    spec = cfg.ensemble_spec()
    table = run_ensemble(
        spec, n_jobs=cfg.jobs, kernel_epsilon=cfg.kernel_epsilon, max_cells=cfg.capacity
    )
    artifacts = []
    if "csv" in cfg.formats:
        write_raw_table(out / "raw.csv", table, extra_meta=_config_meta(cfg))
        artifacts.append("raw.csv")
    if "json" in cfg.formats:
        dump_json(out / "raw.json", {"meta": {**table.meta(), **_config_meta(cfg)}, "rows": table.rows})
        artifacts.append("raw.json")

    params = cfg.model_params()
    n_top = cfg.n_list[-1]
    if cfg.p_grid is not None:
        curve = continuity_scan(
            params,
            cfg.p_grid,
            n=n_top,
            replicas=cfg.replicas,
            kind="p",
            master_seed=cfg.seed,
            chi=cfg.chi,
            n_jobs=cfg.jobs,
            kernel_epsilon=cfg.kernel_epsilon,
            max_cells=cfg.capacity,
        )
        _write_continuity(out / "continuity_p.csv", curve, _table_meta(cfg))
        artifacts.append("continuity_p.csv")
    if cfg.beta_grid is not None:
        curve = continuity_scan(
            params,
            cfg.beta_grid,
            n=n_top,
            replicas=cfg.replicas,
            kind="beta",
            master_seed=cfg.seed,
            chi=cfg.chi,
            n_jobs=cfg.jobs,
            kernel_epsilon=cfg.kernel_epsilon,
            max_cells=cfg.capacity,
        )
        _write_continuity(out / "continuity_beta.csv", curve, _table_meta(cfg))
        artifacts.append("continuity_beta.csv")
    if cfg.hd_p_list is not None:
        hd = hd_trend_check(
            params,
            cfg.hd_p_list,
            n=n_top,
            replicas=cfg.replicas,
            master_seed=cfg.seed,
            kernel_epsilon=cfg.kernel_epsilon,
            n_jobs=cfg.jobs,
            max_cells=cfg.capacity,
        )
        cols = ["p", "count", "infeasible", "phi", "stderr", "rescaled", "log_slope"]
        rows = []
        for i, p in enumerate(hd.p_list):
            rows.append(
                {
                    "p": p,
                    "count": hd.counts[i],
                    "infeasible": hd.infeasible[i],
                    "phi": hd.phi[i],
                    "stderr": hd.stderr[i],
                    "rescaled": hd.rescaled[i],
                    "log_slope": None if i == 0 else hd.log_slopes[i - 1],
                }
            )
        write_table(out / "hd_trend.csv", cols, rows, _table_meta(cfg))
        artifacts.append("hd_trend.csv")
    return artifacts


def _cmd_report(cfg: RunConfig, out: Path) -> list[str]:
    inputs = list(cfg.raw) if cfg.raw is not None else [str(out / "raw.csv")]
    metas = []
    tables = []
    for pth in inputs:
        try:
            meta, _, _ = read_table(pth)
        except FileNotFoundError:
            raise ValidationError(f"raw table not found: {pth}", key="raw")
        if "config_hash" not in meta:
            raise ValidationError(f"{pth}: preamble has no config_hash entry")
        metas.append(meta)
        tables.append(read_raw_table(pth))
    hashes = sorted({m["config_hash"] for m in metas})
    if len(hashes) > 1:
        raise ValidationError(
            f"refusing to mix raw tables with differing config hashes: {hashes}"
        )
    specs = {m.get("spec") for m in metas}
    if len(specs) > 1:
        raise ValidationError("refusing to mix raw tables with differing specs")
    combined = RawTable(
        spec=tables[0].spec,
        rows=[r for t in tables for r in t.rows],
        version=tables[0].version,
    )
    report = concentration_scan(combined, delta=cfg.delta, zeta=cfg.zeta)

    rows_in = len(combined.rows)
    rows_accounted = sum(r["count"] + r["excluded"] for r in report.rows)
    meta = {
        **_table_meta(cfg),
        "source_config_hash": hashes[0],
        "rows_in": rows_in,
        "rows_accounted": rows_accounted,
    }

    write_table(
        out / "fluctuation.csv",
        ["target", "n", "count", "excluded", "mean", "sd", "tail_freq"],
        list(report.rows),
        meta,
    )
    slope_rows = []
    for target, fit in sorted(report.slopes.items()):
        if fit is None:
            continue
        slope_rows.append(
            {
                "target": target,
                "slope": fit.slope,
                "slope_stderr": fit.stderr,
                "ci_low": fit.ci_low,
                "ci_high": fit.ci_high,
                "points": fit.points,
            }
        )
    write_table(
        out / "slope.csv",
        ["target", "slope", "slope_stderr", "ci_low", "ci_high", "points"],
        slope_rows,
        meta,
    )
    write_table(
        out / "max_jump.csv",
        ["n", "count", "q50", "q90", "q100", "fraction_within_band"],
        list(report.max_jump_rows),
        meta,
    )
    _sidecar(
        out,
        "report",
        cfg,
        extra={
            "inputs": inputs,
            "rows_in": rows_in,
            "rows_accounted": rows_accounted,
            "degenerate": [list(t) for t in report.degenerate],
        },
    )
    return ["fluctuation.csv", "slope.csv", "max_jump.csv"]


_DISPATCH = {
    "gen": _cmd_gen,
    "fpp": _cmd_fpp,
    "polymer": _cmd_polymer,
    "ensemble": _cmd_ensemble,
    "report": _cmd_report,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _usage() -> str:
    return (
        "usage: polymerlab <gen|fpp|polymer|ensemble|report> "
        "[--config cfg.json] [--key=value ...]\n\n"
        "  gen       write one environment slab (binary + sidecar)\n"
        "  fpp       one passage-time instance (result JSON + path CSV)\n"
        "  polymer   one partition instance (result JSON, optional beta CSV)\n"
        "  ensemble  replica run (raw CSV/JSON, optional scan CSVs)\n"
        "  report    aggregate raw tables (fluctuation/slope/max-jump CSVs)\n\n"
        "Flags override config-file entries; unknown keys are errors."
    )


def _fail(code: int, exc: BaseException) -> int:
    context = getattr(exc, "context", None) or {}
    payload = {"code": code, "message": str(exc), "context": json_safe(context)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    if not args:
        print(_usage(), file=sys.stderr)
        return 2
    if args[0] in ("-h", "--help"):
        print(_usage())
        return 0
    sub = args[0]
    if sub not in SUBCOMMANDS:
        return _fail(
            2, ValidationError(f"unknown subcommand {sub!r}; expected one of {SUBCOMMANDS}")
        )
    config_path = None
    overrides = []
    i = 1
    while i < len(args):
        a = args[i]
        if a == "--config":
            if i + 1 == len(args):
                return _fail(2, ValidationError("--config needs a file path"))
            i += 1
            config_path = args[i]
        elif a.startswith("--config="):
            config_path = a[len("--config=") :]
        elif a.startswith("--") and "=" in a:
            overrides.append(a[2:])
        else:
            return _fail(2, ValidationError(f"unrecognized argument {a!r}; use --key=value"))
        i += 1
    try:
        cfg = parse_config(config_path, overrides)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = _DISPATCH[sub](cfg, out)
        if sub != "report":  # report writes its sidecar with reconciliation extras
            _sidecar(out, sub, cfg)
        print(json.dumps({"subcommand": sub, "out_dir": str(out), "artifacts": artifacts}))
    except ValidationError as exc:
        return _fail(2, exc)
    except CapacityError as exc:
        return _fail(3, exc)
    except InfeasibleLayerError as exc:
        return _fail(4, exc)
    except PolymerlabError as exc:
        errs = exc.context.get("errors")
        if errs:
            # an aborted ensemble: classify by what the replicas reported
            return _fail(3 if all(e == "capacity" for e in errs) else 4, exc)
        return _fail(5, exc)
    except Exception as exc:  # the CLI boundary reports rather than raises
        return _fail(5, exc)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
