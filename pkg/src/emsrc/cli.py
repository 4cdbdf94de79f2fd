"""Command-line drivers tying the pipeline together.

    emsrc forward  --scenario s.json [--out DIR] [--refine K] ...
    emsrc image    --scenario s.json --data DIR [--out DIR] ...
    emsrc invert   --scenario s.json --images DIR [--out DIR] ...
    emsrc validate --scenario s.json [--out DIR]

Exit code 0 means every requested output was written (and, for validate,
every check passed its tolerance). Geometry or configuration violations exit
nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import containers
from .checks import (delta_growth_exponent, fd_convergence_order,
                     fd_curl_curl_residual, fd_gradient_error)
from .forward import add_noise, simulate_boundary_data
from .geometry import (GeometryError, Medium, FrequencySet, VectorField,
                       VoxelGrid, make_sphere_mesh)
from .greens import dyadic_green_ee, hk_identity_residual, real_kernel_sign
from .imaging import delta_identity_residual, phase_conj_stack
from .inverse import DivergenceError, FidelityProblem, fista_backtracking
from .scenario import Scenario, ScenarioError, load_scenario

__all__ = ["main", "cmd_forward", "cmd_image", "cmd_invert", "cmd_validate"]


def _resolve_out(scenario: Scenario, out) -> Path:
    out = out or scenario.output_dir
    if out is None:
        raise ScenarioError("no output directory: pass --out or set output.dir")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_threads(threads: int) -> int:
    import os
    return os.cpu_count() or 1 if threads == 0 else threads


def cmd_forward(scenario: Scenario, out=None, fmt=None, threads: int = 1,
                refine: int = 1) -> int:
    """Simulate boundary data for the scenario and write the container."""
    out_dir = _resolve_out(scenario, out)
    fmt = fmt or scenario.file_format
    grid = scenario.grid.refined(refine) if refine > 1 else scenario.grid
    source = scenario.build_source(grid)
    mesh = scenario.build_mesh()
    data = simulate_boundary_data(source, mesh, scenario.freqs, scenario.medium,
                                  threads=_resolve_threads(threads))
    data = add_noise(data, scenario.noise_level, scenario.noise_seed)
    containers.save_boundary_data(out_dir, data, fmt)
    print(f"forward: {data.n_points} mesh points x {data.n_freqs} frequencies, "
          f"RMS |E| = {data.rms():.6e} -> {out_dir}")
    return 0


def cmd_image(scenario: Scenario, data_dir, out=None, fmt=None, threads: int = 1,
              broadband: str = "auto", slice_axis: str = "z",
              slice_index: int | None = None) -> int:
    """Back-propagate stored boundary data into per-frequency images."""
    out_dir = _resolve_out(scenario, out)
    fmt = fmt or scenario.file_format
    data = containers.load_boundary_data(data_dir)
    if not np.array_equal(data.freqs.omegas, scenario.freqs.omegas):
        raise ScenarioError("boundary data frequencies do not match the scenario")
    want_broadband = {"auto": data.n_freqs >= 16, "yes": True,
                      "no": False}[broadband]
    stack = phase_conj_stack(data, scenario.grid, scenario.medium,
                             broadband=want_broadband,
                             threads=_resolve_threads(threads))
    containers.save_image_stack(out_dir, stack, fmt)
    if stack.broadband is not None:
        mags = np.linalg.norm(stack.broadband.values, axis=1)
        label = "broadband image"
    else:
        mags = stack.magnitude_sum()
        label = "summed per-frequency images"
    peak = int(np.argmax(mags))
    triple = scenario.grid.index_triple(peak)
    coords = scenario.grid.centers()[peak]
    print(f"image: peak of {label} at voxel {triple}, "
          f"center ({coords[0]:.6g}, {coords[1]:.6g}, {coords[2]:.6g})")
    nx, ny, nz = scenario.grid.dims
    if slice_index is None:
        slice_index = {"x": nx // 2, "y": ny // 2, "z": nz // 2}[slice_axis]
    img = containers.magnitude_slice(mags, scenario.grid, slice_axis, slice_index)
    slice_path = out_dir / f"slice_{slice_axis}{slice_index:03d}.pgm"
    containers.save_pgm(slice_path, img)
    print(f"image: wrote {out_dir} (slice {slice_path.name})")
    return 0


def cmd_invert(scenario: Scenario, images_dir, out=None, fmt=None) -> int:
    """Run the regularized inversion on stored per-frequency images."""
    out_dir = _resolve_out(scenario, out)
    fmt = fmt or scenario.file_format
    stack = containers.load_image_stack(images_dir)
    if stack.grid != scenario.grid:
        raise ScenarioError("image grid does not match the scenario grid")
    if not np.array_equal(stack.freqs.omegas, scenario.freqs.omegas):
        raise ScenarioError("image frequencies do not match the scenario")
    targets = [f.real_part() for f in stack.per_freq]
    total = sum(float(np.sum(np.abs(f.values))) for f in stack.per_freq)
    imag = sum(float(np.sum(np.abs(f.values.imag))) for f in stack.per_freq)
    imag_fraction = imag / total if total > 0 else 0.0
    problem = FidelityProblem(scenario.grid, scenario.freqs, scenario.medium,
                              targets, use_fft=scenario.use_fft)
    x0 = None
    if scenario.init_mode == "mean_image":
        x0 = VectorField(scenario.grid,
                         np.mean([t.values for t in targets], axis=0))
    try:
        result, trace = fista_backtracking(problem, scenario.fista, x0)
    except DivergenceError as exc:
        containers.save_trace_csv(out_dir / "trace.csv", exc.trace)
        print(f"invert: diverged: {exc}", file=sys.stderr)
        return 1
    containers.save_trace_csv(out_dir / "trace.csv", trace)
    containers.save_field(out_dir, result, "result_field", fmt)
    last = trace.iterates[-1]
    grad0 = np.linalg.norm(problem.fidelity_and_grad(np.zeros_like(result.values))[1])
    grad_final = np.linalg.norm(problem.fidelity_and_grad(result.values)[1])
    summary = {
        "schema": "invert_result/1",
        "iterations": last.k,
        "objective": last.objective,
        "fidelity": last.fidelity,
        "penalty": last.penalty,
        "l0_count": result.nonzero_count(),
        "imag_fraction": imag_fraction,
        "grad_norm_rel": grad_final / grad0 if grad0 > 0 else 0.0,
        "lambda": scenario.fista.lam,
        "field": "result_field.json",
        "trace": "trace.csv",
    }
    containers.write_json(out_dir / "result.json", summary)
    print(f"invert: {last.k} iterations, L = {last.objective:.6e}, "
          f"l0 = {summary['l0_count']}, |grad|/|grad0| = "
          f"{summary['grad_norm_rel']:.3e}")
    return 0


def _validation_checks(scenario: Scenario) -> list[dict]:
    medium = scenario.medium
    rng = np.random.default_rng(scenario.seed + 2)
    checks = []

    def record(name, value, tolerance, passed, detail=""):
        checks.append({"name": name, "value": value, "tolerance": tolerance,
                       "pass": bool(passed), "detail": detail})

    # Kernel symmetries.
    worst_even, worst_conj = 0.0, 0.0
    for _ in range(20):
        v = rng.uniform(-2, 2, 3)
        if np.linalg.norm(v) < 0.3:
            v += 0.5
        omega = rng.uniform(0.5, 6.0) / medium.c0
        g = dyadic_green_ee(v, omega, medium)
        scale = np.linalg.norm(g)
        worst_even = max(worst_even, np.linalg.norm(
            g - dyadic_green_ee(-v, omega, medium)) / scale)
        worst_conj = max(worst_conj, np.linalg.norm(
            dyadic_green_ee(v, -omega, medium) - np.conj(g)) / scale)
    record("kernel_evenness", worst_even, "<= 1e-14", worst_even <= 1e-14)
    record("frequency_conjugation", worst_conj, "<= 1e-14", worst_conj <= 1e-14)

    # Defining equation under finite differences.
    omega = 5.0 / medium.c0
    worst_pde = 0.0
    for _ in range(20):
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        v = direction * rng.uniform(0.5, 2.0)
        worst_pde = max(worst_pde, fd_curl_curl_residual(v, omega, medium))
    record("pde_residual", worst_pde, "< 1e-3", worst_pde < 1e-3)
    order = fd_convergence_order(np.array([0.9, 0.3, -0.4]), omega, medium,
                                 h0=1.0 / 100.0)
    record("pde_fd_order", order, "2.0 +/- 0.2", 1.8 <= order <= 2.2)

    # Surface-integral identity.
    omega = 1.0 / medium.c0
    lam = 2 * np.pi * medium.c0 / omega
    pairs = [(np.zeros(3), np.zeros(3)),
             (np.array([0.8, 0.1, -0.3]), np.array([-0.6, 0.5, 0.2])),
             (np.array([1.8, 0.0, 0.5]), np.array([-1.0, -1.2, 0.0]))]
    mesh50 = make_sphere_mesh(np.zeros(3), 50 * lam, 20000)
    worst_hk = max(hk_identity_residual(x, y, omega, medium, mesh50)
                   for x, y in pairs)
    record("hk_residual_50", worst_hk, "< 0.05", worst_hk < 0.05)
    res10 = hk_identity_residual(*pairs[1], omega, medium,
                                 make_sphere_mesh(np.zeros(3), 10 * lam, 20000))
    res100 = hk_identity_residual(*pairs[1], omega, medium,
                                  make_sphere_mesh(np.zeros(3), 100 * lam, 20000))
    record("hk_radius_decrease", res100, f"< residual at 10 wavelengths ({res10:.2e})",
           res100 < res10)

    # Band-limited identity.
    exponent = delta_growth_exponent(medium)
    record("delta_growth_exponent", exponent, "3.0 +/- 0.3",
           2.7 <= exponent <= 3.3)
    unit = np.array([1.0, 0.0, 0.0]) * medium.c0     # one wave-transit unit
    raw = {}
    ratio = {}
    for w in (8.0, 64.0):
        band = w / medium.c0
        off = np.trace(delta_identity_residual(unit, np.zeros(3), medium,
                                               band, int(8 * w)))
        on = np.trace(delta_identity_residual(np.zeros(3), np.zeros(3), medium,
                                              band, int(8 * w)))
        raw[w] = abs(off)
        ratio[w] = abs(off) / abs(on)
    record("delta_concentration", ratio[64.0],
           f"off/on ratio at W=64 below ratio at W=8 ({ratio[8.0]:.3e})",
           ratio[64.0] < ratio[8.0],
           detail=f"raw off-source |trace|: W=8 {raw[8.0]:.6e}, W=64 {raw[64.0]:.6e}")

    # Orientation constant.
    s1 = real_kernel_sign(medium, recompute=True)
    s2 = real_kernel_sign(medium, recompute=True)
    record("sign_constant", s1, "stable across determinations", s1 == s2,
           detail=f"determined orientation s = {s1}")

    # Fidelity operator integrity on a small problem.
    grid = VoxelGrid((-0.2, -0.2, -0.2), 0.1, (4, 4, 4))
    freqs = FrequencySet(scenario.freqs.omegas[: min(2, len(scenario.freqs))])
    targets = [VectorField(grid, rng.standard_normal((grid.n_voxels, 3)))
               for _ in range(len(freqs))]
    problem = FidelityProblem(grid, freqs, medium, targets, use_fft=False)
    grad_err = fd_gradient_error(problem, rng.standard_normal((grid.n_voxels, 3)))
    record("gradient_fd", grad_err, "< 1e-6", grad_err < 1e-6)
    worst_adj = 0.0
    worst_fft = 0.0
    for _ in range(10):
        u = rng.standard_normal((grid.n_voxels, 3))
        v = rng.standard_normal((grid.n_voxels, 3))
        au = problem.apply_values(u, 0)
        av = problem.apply_values(v, 0)
        lhs = float(np.sum(au * v))
        rhs = float(np.sum(u * av))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        fft = problem.apply_values(u, 0, method="fft")
        worst_fft = max(worst_fft, float(np.linalg.norm(fft - au)
                                         / np.linalg.norm(au)))
    record("operator_self_adjoint", worst_adj, "< 1e-10", worst_adj < 1e-10)
    record("fft_direct_agreement", worst_fft, "< 1e-10", worst_fft < 1e-10)
    return checks


def cmd_validate(scenario: Scenario, out=None) -> int:
    """Run the numerical self-check battery and write the report."""
    out_dir = _resolve_out(scenario, out)
    checks = _validation_checks(scenario)
    all_pass = all(c["pass"] for c in checks)
    sign = next(c["value"] for c in checks if c["name"] == "sign_constant")
    report = {"schema": "validation/1", "pass": all_pass,
              "sign_constant": sign, "checks": checks}
    containers.write_json(out_dir / "validation.json", report)
    lines = []
    for c in checks:
        status = "PASS" if c["pass"] else "FAIL"
        line = f"{status} {c['name']}: value = {c['value']:.6e} ({c['tolerance']})"
        if c["detail"]:
            line += f" [{c['detail']}]"
        lines.append(line)
        print(line)
    lines.append("overall: " + ("PASS" if all_pass else "FAIL"))
    print(lines[-1])
    (out_dir / "validation.txt").write_text("\n".join(lines) + "\n")
    return 0 if all_pass else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emsrc",
        description="Simulate, image, and invert radiating current sources.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", dest="fmt", choices=("csv", "bin"),
                       default=None, help="payload format (default: scenario)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes; 0 = auto, 1 = serial (default)")

    p = sub.add_parser("forward", help="simulate boundary data")
    common(p)
    p.add_argument("--refine", type=int, default=1,
                   help="generate data on a K-times finer source grid")

    p = sub.add_parser("image", help="back-propagate boundary data")
    common(p)
    p.add_argument("--data", required=True, help="directory with boundary data")
    p.add_argument("--broadband", choices=("auto", "yes", "no"), default="auto")
    p.add_argument("--slice-axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--slice-index", type=int, default=None)

    p = sub.add_parser("invert", help="regularized inversion of images")
    common(p)
    p.add_argument("--images", required=True, help="directory with image stack")

    p = sub.add_parser("validate", help="numerical self-check battery")
    common(p)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "forward":
            return cmd_forward(scenario, args.out, args.fmt, args.threads,
                               args.refine)
        if args.command == "image":
            return cmd_image(scenario, args.data, args.out, args.fmt,
                             args.threads, args.broadband, args.slice_axis,
                             args.slice_index)
        if args.command == "invert":
            return cmd_invert(scenario, args.images, args.out, args.fmt)
        if args.command == "validate":
            return cmd_validate(scenario, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except (ScenarioError, GeometryError, ValueError, OSError) as exc:
        print(f"emsrc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
