"""Command-line interface: mesh/dataset generation, forward simulation,
reconstruction, metrics tables, and field rendering.

Exit codes: 0 success, 1 validation error, 2 numerical failure (partial
outputs are kept).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio
from .datasets import DEFAULT_AMPLITUDE, DatasetConfig, generate_dataset, load_dataset
from .fest import fest_reference
from .forward import CemSystem, adjacent_patterns, forward_map_phi
from .fractions import fractions_to_conductivity, row_softmax
from .jacobians import build_state  # noqa: F401  (re-exported for sessions)
from .mesh import DEFAULT_CONTACT_IMPEDANCE, MeshError, build_disk_mesh
from .metrics import ErrorReport, aggregate, err_fraction, err_sigma
from .phantoms import DEFAULT_NOISE_LEVEL
from .prgn import EmdaConfig, PrgnConfig, default_initial_fractions, run_fr_prgn
from .render import field_to_csv, render_field, write_ppm

INIT_NOISE_STD = 0.1


def _fail(msg: str, code: int = 1) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _add_mesh_args(p):
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--vertices", type=int, default=432)
    p.add_argument("--electrodes", type=int, default=32)
    p.add_argument("--coverage", type=float, default=0.5)
    p.add_argument("--contact-impedance", type=float,
                   default=DEFAULT_CONTACT_IMPEDANCE)


def cmd_mesh_gen(args) -> int:
    mesh, setup = build_disk_mesh(args.radius, args.vertices, args.electrodes,
                                  args.coverage,
                                  contact_impedance=args.contact_impedance)
    fileio.save_mesh(args.out, mesh, setup)
    print(f"wrote {args.out}: {mesh.num_nodes} nodes, {mesh.num_triangles} "
          f"triangles, {setup.num_electrodes} electrodes")
    return 0


def cmd_dataset_gen(args) -> int:
    cfg = DatasetConfig(family=args.family, count=args.count, seed=args.seed,
                        noise_level=args.noise, radius=args.radius,
                        target_vertices=args.vertices,
                        num_electrodes=args.electrodes, coverage=args.coverage,
                        contact_impedance=args.contact_impedance,
                        amplitude=args.amplitude, num_tissues=args.tissues)
    out = generate_dataset(args.out, cfg, jobs=args.jobs)
    print(f"wrote {cfg.count} samples to {out}")
    return 0


def cmd_forward(args) -> int:
    mesh, electrodes = fileio.load_mesh(args.mesh)
    spectra = fileio.load_spectra(args.spectra)
    F = fileio.load_fractions(args.fractions)
    patterns = adjacent_patterns(electrodes.num_electrodes, args.amplitude)
    y = forward_map_phi(F, spectra, mesh, electrodes, patterns)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        y = y + rng.normal(0.0, args.noise * np.abs(y).mean(), y.shape)
    fileio.save_measurement(args.out, y, electrodes.num_electrodes,
                            patterns.num_patterns, spectra.num_frequencies,
                            patterns.protocol, args.amplitude)
    print(f"wrote {args.out}: {y.size} measurements")
    return 0


def _reconstruct_sample(task):
    """One sample: F-EST, optionally FR-PRGN; returns (index, paths)."""
    (ds_path, out_dir, index, method, params) = task
    ds = load_dataset(ds_path)
    sample = ds.sample(index)
    patterns = adjacent_patterns(ds.config.num_electrodes, ds.config.amplitude)
    system = CemSystem(ds.mesh, ds.electrodes)
    t0 = time.perf_counter()
    F_ref = fest_reference(sample["y"], ds.spectra, ds.mesh, ds.electrodes,
                           patterns, noser_weight=params["noser_weight"],
                           ridge_weight=params["ridge_weight"], system=system)
    out = Path(out_dir)
    names = ds.spectra.tissue_names
    if method == "fest":
        F_final = F_ref
        history = {"residual_norms": [], "max_changes": [], "iterations": 0,
                   "converged": True}
    else:
        rng = np.random.default_rng(np.random.SeedSequence((params["seed"], index)))
        F0 = default_initial_fractions(ds.mesh.num_triangles,
                                       ds.spectra.num_tissues, rng,
                                       noise_std=params["init_noise"])
        res = run_fr_prgn(sample["y"], ds.spectra, ds.mesh, ds.electrodes,
                          patterns, F_ref, F0,
                          prgn=PrgnConfig(alpha=params["alpha"],
                                          beta=params["beta"],
                                          tol=params["tol"],
                                          max_iterations=params["max_iterations"]),
                          emda=EmdaConfig(inner_iterations=params["inner_iterations"],
                                          tikhonov_weight=params["alpha_emda"],
                                          lipschitz=params["lipschitz"]),
                          system=system)
        if res.aborted:
            fileio.save_fractions(out / f"rec_{index:04d}.json", res.F, names)
            raise ArithmeticError(f"sample {index}: {res.aborted}")
        F_final = res.F
        history = {"residual_norms": res.residual_norms,
                   "max_changes": res.max_changes,
                   "iterations": res.num_iterations,
                   "converged": res.converged}
    elapsed = time.perf_counter() - t0
    fileio.save_fractions(out / f"rec_{index:04d}.json", F_final, names)
    sigmas = {f"sigma_{i}": fractions_to_conductivity(F_final, ds.spectra, i).tolist()
              for i in range(ds.spectra.num_frequencies + 1)}
    fileio.write_json(out / f"report_{index:04d}.json", {
        "index": index, "method": method, "elapsed_seconds": elapsed,
        "history": history, "conductivities": sigmas,
    })
    return index, elapsed


def cmd_reconstruct(args) -> int:
    ds = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {
        "alpha": args.alpha, "beta": args.beta, "alpha_emda": args.alpha_emda,
        "lipschitz": args.lipschitz, "inner_iterations": args.inner_iters,
        "tol": args.tol, "max_iterations": args.max_iters,
        "noser_weight": args.noser_weight, "ridge_weight": args.ridge_weight,
        "init_noise": args.init_noise, "seed": args.seed,
    }
    fileio.write_json(out / "config_echo.json", {
        "dataset": str(Path(args.dataset).resolve()),
        "dataset_config": ds.config.to_dict(),
        "method": args.method, "params": params, "jobs": args.jobs,
    })
    indices = range(ds.count) if args.sample is None else [args.sample]
    tasks = [(str(args.dataset), str(out), i, args.method, params)
             for i in indices]
    t0 = time.perf_counter()
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                for idx, dt in pool.map(_reconstruct_sample, tasks):
                    print(f"sample {idx}: {dt:.1f}s")
        else:
            for t in tasks:
                idx, dt = _reconstruct_sample(t)
                print(f"sample {idx}: {dt:.1f}s")
    except ArithmeticError as exc:
        return _fail(str(exc), code=2)
    print(f"reconstructed {len(tasks)} samples in {time.perf_counter() - t0:.1f}s")
    return 0


def cmd_fest(args) -> int:
    ds = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    patterns = adjacent_patterns(ds.config.num_electrodes, ds.config.amplitude)
    system = CemSystem(ds.mesh, ds.electrodes)
    indices = range(ds.count) if args.sample is None else [args.sample]
    for i in indices:
        sample = ds.sample(i)
        F_ref = fest_reference(sample["y"], ds.spectra, ds.mesh, ds.electrodes,
                               patterns, noser_weight=args.noser_weight,
                               ridge_weight=args.ridge_weight, system=system)
        fileio.save_fractions(out / f"fhat_{i:04d}.json", F_ref,
                              ds.spectra.tissue_names)
    fileio.write_json(out / "config_echo.json", {
        "dataset": str(Path(args.dataset).resolve()),
        "noser_weight": args.noser_weight, "ridge_weight": args.ridge_weight,
    })
    print(f"wrote reference fractions for {len(list(indices))} samples to {out}")
    return 0


def cmd_metrics(args) -> int:
    ds = load_dataset(args.dataset)
    recon = Path(args.recon)
    rows, reports = [], []
    pattern = args.pattern
    for i in range(ds.count):
        path = recon / pattern.format(i)
        if not path.exists():
            continue
        F_rec = fileio.load_fractions(path)
        sample = ds.sample(i)
        F_true = sample["fractions"]
        ef = [err_fraction(F_rec, F_true, ds.mesh, j)
              for j in range(ds.spectra.num_tissues)]
        es = []
        for fi in range(1, ds.spectra.num_frequencies + 1):
            es.append(err_sigma(fractions_to_conductivity(F_rec, ds.spectra, fi),
                                fractions_to_conductivity(F_true, ds.spectra, fi),
                                ds.mesh))
        reports.append(ErrorReport(err_sigma=np.array(es), err_f=np.array(ef),
                                   sample_id=f"{i:04d}"))
        rows.append([f"{i:04d}", args.method, *ef, *es])
    if not rows:
        return _fail(f"no reconstructions matching {pattern} under {recon}")
    t = ds.spectra.num_tissues
    m = ds.spectra.num_frequencies
    header = ["sample", "method",
              *(f"err_f{j + 1}" for j in range(t)),
              *(f"err_sigma{i + 1}" for i in range(m))]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    agg = aggregate(reports)
    print("samples:", agg["num_samples"])
    print("mean err_f:", np.round(agg["mean_err_f"], 4).tolist())
    print("mean err_sigma:", np.round(agg["mean_err_sigma"], 4).tolist())
    print("mean err_f overall:", round(agg["mean_err_f_overall"], 4))
    return 0


def cmd_render(args) -> int:
    mesh, _ = fileio.load_mesh(args.mesh)
    F = fileio.load_fractions(args.field)
    if args.column is not None:
        values = F[:, args.column]
    else:
        spectra = fileio.load_spectra(args.spectra)
        values = fractions_to_conductivity(F, spectra, args.freq)
    if args.out.endswith(".csv"):
        field_to_csv(args.out, mesh, {"value": values})
    else:
        img = render_field(mesh, values, size=args.size, vmin=args.vmin,
                           vmax=args.vmax)
        write_ppm(args.out, img)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfeit",
                                 description="multi-frequency EIT fraction "
                                             "reconstruction toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="build a disk mesh with electrodes")
    _add_mesh_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mesh_gen)

    p = sub.add_parser("dataset-gen", help="generate a synthetic dataset")
    p.add_argument("--family", choices=["overlap", "no-overlap"], required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE_LEVEL)
    p.add_argument("--tissues", type=int, default=None)
    p.add_argument("--amplitude", type=float, default=DEFAULT_AMPLITUDE)
    p.add_argument("--jobs", type=int, default=1)
    _add_mesh_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dataset_gen)

    p = sub.add_parser("forward", help="simulate measurements for a fraction field")
    p.add_argument("--mesh", required=True)
    p.add_argument("--spectra", required=True)
    p.add_argument("--fractions", required=True)
    p.add_argument("--amplitude", type=float, default=DEFAULT_AMPLITUDE)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_forward)

    p = sub.add_parser("fest", help="reference fractions for dataset samples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--noser-weight", type=float, default=1e-2)
    p.add_argument("--ridge-weight", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fest)

    p = sub.add_parser("reconstruct", help="run F-EST or FR-PRGN on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=["fest", "fr-prgn"], default="fr-prgn")
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--alpha", type=float, default=1e-9)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--alpha-emda", type=float, default=1e-4)
    p.add_argument("--lipschitz", type=float, default=1.5)
    p.add_argument("--inner-iters", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--noser-weight", type=float, default=1e-2)
    p.add_argument("--ridge-weight", type=float, default=1e-3)
    p.add_argument("--init-noise", type=float, default=INIT_NOISE_STD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("metrics", help="error table for reconstructions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--pattern", default="rec_{:04d}.json")
    p.add_argument("--method", default="fr-prgn")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("render", help="rasterize a fraction or conductivity field")
    p.add_argument("--mesh", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--column", type=int, default=None,
                   help="fraction column; omit to render conductivity")
    p.add_argument("--spectra", default=None)
    p.add_argument("--freq", type=int, default=1)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--vmin", type=float, default=None)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "render" and args.column is None \
            and not args.spectra:
        return _fail("render needs --column or --spectra")
    try:
        return args.fn(args)
    except (MeshError, fileio.FormatError, ValueError, OSError) as exc:
        return _fail(str(exc))
    except ArithmeticError as exc:
        return _fail(str(exc), code=2)


if __name__ == "__main__":
    sys.exit(main())
