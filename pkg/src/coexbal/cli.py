"""Batch command-line front end.

Subcommands wire the library into reproducible experiments: synthetic mesh
generation, curve-based partitioning, the feedback balancing loop against
the device simulator (or the real assembly kernel), the co-execution
efficiency tables, and the pack-size benchmark.  All randomness flows from
``--seed``; primary outputs are byte-stable across reruns, and every run
writes a manifest sidecar echoing the resolved parameters.
"""

from __future__ import annotations

import datetime
import functools
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .assembly import assemble_packs, build_packs, sweep_csv, sweep_pack_size
from .balance import Phase, RegressionMode, TimingSample, run_balancing_loop
from .coexec import (
    EfficiencyParams,
    eff_coex1,
    eff_coex2,
    eff_core,
    eff_gpu,
    load_plan,
    make_sim_timer,
    predicted_time_reduction,
)
from .mesh import (
    ElementKind,
    MeshFormatError,
    FullMesh,
    generate_synthetic_full_mesh,
    generate_synthetic_mesh,
    load_full_mesh,
    load_mesh,
    partition_mesh_from_full,
    store_full_mesh,
    store_mesh,
)
from .sfc import SfcConfig, partition_chunked, store_partition

EXIT_FILE_NOT_FOUND = 3
EXIT_FORMAT_ERROR = 4
EXIT_PRECONDITION = 5


def _fail(code: int, message: str) -> None:
    click.echo(f"coexbal: error[E{code}]: {message}", err=True)
    sys.exit(code)


def _cli_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except FileNotFoundError as exc:
            _fail(EXIT_FILE_NOT_FOUND, f"file not found: {exc.filename or exc}")
        except (MeshFormatError, json.JSONDecodeError) as exc:
            _fail(EXIT_FORMAT_ERROR, str(exc))
        except (ValueError, KeyError) as exc:
            _fail(EXIT_PRECONDITION, str(exc))

    return wrapper


def _threads_cap() -> int | None:
    raw = os.environ.get("COEXBAL_THREADS")
    return int(raw) if raw else None


def _manifest(command: str, parameters: dict, seed: int | None = None) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "parameters": parameters,
        "threads_cap": _threads_cap(),
    }


def _write_manifest_sidecar(output: Path, manifest: dict) -> None:
    doc = dict(manifest)
    doc["created_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    Path(str(output) + ".manifest.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")


def _parse_mix(text: str) -> dict[ElementKind, float]:
    tags = {k.value: k for k in ElementKind}
    mix: dict[ElementKind, float] = {}
    for item in text.split(","):
        tag, _, value = item.partition("=")
        tag = tag.strip()
        if tag not in tags:
            raise ValueError(f"unknown element kind {tag!r} in --mix")
        mix[tags[tag]] = float(value)
    return mix


@click.group()
@click.version_option(__version__)
def main():
    """Curve-based mesh partitioning with feedback load balancing."""


@main.command("gen-mesh")
@click.option("--n", "n_elements", type=int, required=True, help="Number of elements.")
@click.option("--mix", default="tet=1.0", show_default=True,
              help="Kind proportions, e.g. tet=0.7,hex=0.3.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--profile", type=click.Choice(["uniform", "clustered"]), default="uniform",
              show_default=True)
@click.option("--full", "full_mesh", is_flag=True,
              help="Emit a nodes+connectivity mesh (JSON) for the assembly bench.")
@click.option("--hex-fraction", type=float, default=0.3, show_default=True,
              help="Hex share for --full meshes.")
@click.option("--output", type=click.Path(path_type=Path), required=True)
@_cli_errors
def cmd_gen_mesh(n_elements, mix, seed, profile, full_mesh, hex_fraction, output):
    """Generate a synthetic mesh."""
    params = {
        "n": n_elements, "mix": mix, "profile": profile,
        "full": full_mesh, "hex_fraction": hex_fraction, "output": str(output),
    }
    if full_mesh:
        fm = generate_synthetic_full_mesh(n_elements, hex_fraction=hex_fraction, seed=seed)
        store_full_mesh(fm, output)
    else:
        mesh = generate_synthetic_mesh(n_elements, _parse_mix(mix), seed=seed,
                                       spatial_profile=profile)
        store_mesh(mesh, output)
    _write_manifest_sidecar(output, _manifest("gen-mesh", params, seed))
    click.echo(f"wrote {output}")


@main.command("partition")
@click.option("--mesh", "mesh_path", type=click.Path(path_type=Path), required=True)
@click.option("--parts", type=int, required=True)
@click.option("--coeffs-file", type=click.Path(path_type=Path), default=None,
              help="JSON array of per-part correction coefficients (default: all ones).")
@click.option("--level", type=int, default=8, show_default=True, help="Grid bits per axis.")
@click.option("--chunks", type=int, default=1, show_default=True)
@click.option("--output", type=click.Path(path_type=Path), required=True)
@_cli_errors
def cmd_partition(mesh_path, parts, coeffs_file, level, chunks, output):
    """Partition a mesh along the curve."""
    mesh = load_mesh(mesh_path)
    coeffs = None
    if coeffs_file is not None:
        coeffs = np.array(json.loads(Path(coeffs_file).read_text(encoding="utf-8")))
    cfg = SfcConfig(level=level)
    part = partition_chunked(mesh, cfg, parts, coeffs, n_chunks=chunks)
    store_partition(part, output)
    params = {
        "mesh": str(mesh_path), "parts": parts, "level": level, "chunks": chunks,
        "coeffs_file": str(coeffs_file) if coeffs_file else None, "output": str(output),
    }
    _write_manifest_sidecar(output, _manifest("partition", params))
    click.echo(f"wrote {output} (+ sidecar)")


def _make_bench_timer(full: FullMesh, pack_size: int):
    def timer(partition):
        by_rank: dict[int, list[int]] = {r: [] for r in range(1, partition.n_parts + 1)}
        for eid, rank in partition.assignment.items():
            by_rank[rank].append(eid)
        times = []
        for rank in range(1, partition.n_parts + 1):
            ids = sorted(by_rank[rank])
            sub = FullMesh(nodes=full.nodes,
                           elements=tuple(full.elements[i] for i in ids))
            packset = build_packs(sub, pack_size)
            t0 = time.perf_counter()
            assemble_packs(packset)
            times.append(max(time.perf_counter() - t0, 1e-9))
        return TimingSample(iteration=0, times=np.array(times), phase=Phase.ELEMENT_ASSEMBLY)

    return timer


@main.command("balance")
@click.option("--mesh", "mesh_path", type=click.Path(path_type=Path), default=None,
              help="Partition mesh; omit with --timer bench to derive it from --full-mesh.")
@click.option("--plan", "plan_path", type=click.Path(path_type=Path), required=True)
@click.option("--regression", type=click.Choice(["slr", "wlr"]), default="wlr", show_default=True)
@click.option("--tol", type=float, default=0.02, show_default=True)
@click.option("--max-iters", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--level", type=int, default=8, show_default=True)
@click.option("--timer", "timer_kind", type=click.Choice(["sim", "bench"]), default="sim",
              show_default=True)
@click.option("--full-mesh", "full_mesh_path", type=click.Path(path_type=Path), default=None,
              help="Nodes+connectivity mesh, required for --timer bench.")
@click.option("--pack-size", type=int, default=32, show_default=True,
              help="Pack size used by the bench timer.")
@click.option("--output", type=click.Path(path_type=Path), required=True,
              help="Report JSON path; the convergence CSV and final partition sit beside it.")
@_cli_errors
def cmd_balance(mesh_path, plan_path, regression, tol, max_iters, seed, level,
                timer_kind, full_mesh_path, pack_size, output):
    """Run the feedback balancing loop and write the report."""
    plan = load_plan(plan_path)
    if timer_kind == "bench":
        if full_mesh_path is None:
            raise ValueError("--timer bench requires --full-mesh")
        full = load_full_mesh(full_mesh_path)
        mesh = partition_mesh_from_full(full)
        timer = _make_bench_timer(full, pack_size)
    else:
        if mesh_path is None:
            raise ValueError("--timer sim requires --mesh")
        mesh = load_mesh(mesh_path)
        timer = make_sim_timer(plan, seed=seed)

    cfg = SfcConfig(level=level)
    report = run_balancing_loop(
        mesh, cfg, plan.n_ranks, timer,
        mode=RegressionMode(regression), tol=tol, max_iters=max_iters,
    )

    params = {
        "mesh": str(mesh_path) if mesh_path else None,
        "plan": str(plan_path), "regression": regression, "tol": tol,
        "max_iters": max_iters, "level": level, "timer": timer_kind,
        "full_mesh": str(full_mesh_path) if full_mesh_path else None,
        "output": str(output),
    }
    manifest = _manifest("balance", params, seed)

    part_path = output.with_name(output.stem + "_final.part")
    store_partition(report.final.partition, part_path)
    doc = report.to_json_dict(manifest=manifest, final_partition_ref=part_path.name)
    output.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    output.with_suffix(".csv").write_text(report.convergence_csv(), encoding="utf-8")
    _write_manifest_sidecar(output, manifest)
    click.echo(
        f"{'converged' if report.converged else 'stopped'} after "
        f"{report.n_iterations} iterations, imbalance "
        f"{report.final.metrics.imbalance:.4f} -> wrote {output}"
    )


def _parse_sweep(spec: str) -> np.ndarray:
    # Accepts "s=1..100" or "s=1..100:0.5".
    body = spec.split("=", 1)[1] if "=" in spec else spec
    rng, _, step = body.partition(":")
    lo, _, hi = rng.partition("..")
    step_v = float(step) if step else 1.0
    values = np.arange(float(lo), float(hi) + 0.5 * step_v, step_v)
    if len(values) == 0:
        raise ValueError(f"empty sweep range {spec!r}")
    return values


@main.command("efficiency")
@click.option("--speedup", type=float, required=True, help="GPU speedup vs one core.")
@click.option("--ratio", type=float, default=None, help="GPUs per core (n_gpu/n_core).")
@click.option("--cores", type=int, default=None)
@click.option("--gpus", type=int, default=None)
@click.option("--cores-per-gpu", type=click.Choice(["1", "2"]), default="2", show_default=True)
@click.option("--sweep", default=None, help="Speedup sweep, e.g. s=1..100; emits CSV curves.")
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help="JSON report (point mode) or CSV (sweep mode).")
@_cli_errors
def cmd_efficiency(speedup, ratio, cores, gpus, cores_per_gpu, sweep, output):
    """Evaluate the co-execution efficiency model."""
    if ratio is None:
        if cores is None or gpus is None:
            raise ValueError("give either --ratio or both --cores and --gpus")
        params = EfficiencyParams.from_counts(cores, gpus, speedup)
    else:
        params = EfficiencyParams(speedup=speedup, ratio=ratio)
    cpg = int(cores_per_gpu)

    cli_params = {
        "speedup": speedup, "ratio": params.ratio, "cores": cores, "gpus": gpus,
        "cores_per_gpu": cpg, "sweep": sweep,
        "output": str(output) if output else None,
    }
    manifest = _manifest("efficiency", cli_params)

    if sweep:
        lines = ["s,eff_core,eff_gpu,eff_coex1,eff_coex2"]
        for s in _parse_sweep(sweep):
            p = EfficiencyParams(speedup=float(s), ratio=params.ratio)
            lines.append(
                f"{float(s)!r},{eff_core(p)!r},{eff_gpu(p)!r},{eff_coex1(p)!r},{eff_coex2(p)!r}"
            )
        text = "\n".join(lines) + "\n"
        if output:
            output.write_text(text, encoding="utf-8")
            _write_manifest_sidecar(output, manifest)
            click.echo(f"wrote {output}")
        else:
            click.echo(text, nl=False)
        return

    rows = [
        ("eff_core", eff_core(params)),
        ("eff_gpu", eff_gpu(params)),
        ("eff_coex1", eff_coex1(params)),
        ("eff_coex2", eff_coex2(params)),
        ("predicted_reduction", predicted_time_reduction(params, cpg)),
    ]
    for name, value in rows:
        click.echo(f"{name:20s} {value:.10f}")
    if output:
        doc = {
            "speedup": params.speedup,
            "ratio": params.ratio,
            **{name: value for name, value in rows},
            "cores_per_gpu": cpg,
            "manifest": manifest,
        }
        output.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        _write_manifest_sidecar(output, manifest)


@main.command("bench-assembly")
@click.option("--full-mesh", "full_mesh_path", type=click.Path(path_type=Path), required=True)
@click.option("--sizes", default="1,2,4,8,16,32,64", show_default=True)
@click.option("--reps", type=int, default=5, show_default=True)
@click.option("--output", type=click.Path(path_type=Path), required=True)
@_cli_errors
def cmd_bench_assembly(full_mesh_path, sizes, reps, output):
    """Time the pack kernel across pack sizes."""
    full = load_full_mesh(full_mesh_path)
    size_list = [int(s) for s in sizes.split(",")]
    rows = sweep_pack_size(full, size_list, reps=reps)
    output.write_text(sweep_csv(rows), encoding="utf-8")
    params = {"full_mesh": str(full_mesh_path), "sizes": sizes, "reps": reps,
              "output": str(output)}
    _write_manifest_sidecar(output, _manifest("bench-assembly", params))
    best = max(rows, key=lambda r: r.speedup)
    click.echo(f"wrote {output}; best pack size {best.pack_size} at {best.speedup:.2f}x")


if __name__ == "__main__":
    main()
