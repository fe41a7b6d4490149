"""Command-line surface.

Commands: synth, check-pr, augment, analyze, simulate, optics, demo-paper.
Every command accepts --out and --format {text,doc}; machine-readable
output is canonical JSON so documents round-trip byte for byte.  Each run
writes a manifest next to its first output recording input digests, solver
parameters, the seed and the tool version.

Exit codes: 0 success / verification pass, 1 verification failure,
2 infeasible synthesis, 3 input or usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, demo, jumpsim, optics, realizability, serialize, synthesis
from .serialize import DocumentError

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_INFEASIBLE = 2
EXIT_INPUT_ERROR = 3


def _emit(args, doc, text):
    payload = serialize.dumps_doc(doc) if args.format == "doc" else text + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)


def _manifest(args, inputs, params, outputs, seed=None):
    if not outputs:
        return
    serialize.write_manifest(
        outputs[0], command=sys.argv[1:], inputs=inputs, params=params,
        outputs=outputs, seed=seed,
    )


def _load_system(path):
    return serialize.parse_system_doc(serialize.read_doc(path))


def _add_common(parser):
    parser.add_argument("--out", help="write the result to this file instead of stdout")
    parser.add_argument("--format", choices=("text", "doc"), default="text")


def _add_solver_flags(parser):
    parser.add_argument("--eps-strict", type=float, default=1e-6,
                        help="strictness margin required of LMI certificates")
    parser.add_argument("--tol", type=float, default=1e-9, help="solver convergence tolerance")
    parser.add_argument("--max-iter", type=int, default=400, help="Newton step budget per solve")


def _cmd_synth(args):
    plant, _, _ = _load_system(args.plant)
    if plant is None:
        raise DocumentError("synth needs a document with 'plant' and 'rates' sections")
    if args.min_g:
        g_star, result = synthesis.min_attenuation(
            plant, args.g_lo, args.g_hi, tol_g=args.tol_g,
            eps_strict=args.eps_strict, max_iter=args.max_iter,
        )
    else:
        if args.g is None:
            raise DocumentError("synth needs --g or --min-g")
        g_star = args.g
        result = synthesis.synthesize(
            plant, args.g, eps_strict=args.eps_strict, tol=args.tol, max_iter=args.max_iter
        )
    ctrl = result.controller
    if args.augment:
        ctrl = realizability.augment_jump_controller(ctrl)
    out = Path(args.out) if args.out else Path("controller.json")
    serialize.write_doc(out, serialize.system_to_doc(controller=ctrl, rates=plant.rates))
    cert = {
        "g": float(g_star),
        "lmi_status": result.solution.status,
        "lmi_margin": result.solution.margin,
        "lmi_iterations": result.solution.iterations,
        "eps_strict": args.eps_strict,
        "coupling_condition_numbers": [m.cond_coupling for m in result.modes],
        "augmented": bool(args.augment),
    }
    cert_path = out.with_suffix(".cert.json")
    serialize.write_doc(cert_path, cert)
    _manifest(args, [args.plant],
              {"g": float(g_star), "eps_strict": args.eps_strict, "tol": args.tol,
               "max_iter": args.max_iter, "augment": bool(args.augment)},
              [out, cert_path])
    print(f"synthesized controller at g = {g_star:.6g} -> {out}")
    return EXIT_OK


def _cmd_check_pr(args):
    _, ctrl, _ = _load_system(args.controller)
    if ctrl is None:
        raise DocumentError("check-pr needs a document with a 'controller' section")
    report = realizability.check_controller_realizability(ctrl, tol=args.tol)
    doc = {
        "tol": args.tol,
        "realizable": report.realizable,
        "cr_residuals": list(report.cr_residuals),
        "output_residuals": list(report.output_residuals),
    }
    lines = [f"physical realizability at tolerance {args.tol:g}",
             f"  {'mode':4s}  {'commutation defect':20s}  {'output defect':16s}"]
    for i, (cr, outr) in enumerate(zip(report.cr_residuals, report.output_residuals)):
        lines.append(f"  {i + 1:4d}  {cr:20.3e}  {outr:16.3e}")
    lines.append(f"  verdict: {'realizable' if report.realizable else 'NOT realizable'}")
    _emit(args, doc, "\n".join(lines))
    if args.out:
        _manifest(args, [args.controller], {"tol": args.tol}, [args.out])
    return EXIT_OK if report.realizable else EXIT_VERIFY_FAIL


def _cmd_augment(args):
    _, ctrl, rates = _load_system(args.controller)
    if ctrl is None:
        raise DocumentError("augment needs a document with a 'controller' section")
    stripped = ctrl
    if ctrl.n_nu:
        # re-augment from scratch: drop existing noise channels first
        from .qmodel import Controller, ControllerMode
        stripped = Controller(
            tuple(
                ControllerMode(m.a, m.b, m.c, np.zeros((ctrl.n_u, 0)), np.zeros((ctrl.n_k, 0)))
                for m in ctrl.modes
            ),
            ctrl.theta_k,
        )
    augmented = realizability.augment_jump_controller(stripped)
    out = Path(args.out) if args.out else Path("controller_augmented.json")
    serialize.write_doc(out, serialize.system_to_doc(controller=augmented, rates=rates))
    _manifest(args, [args.controller], {}, [out])
    report = realizability.check_controller_realizability(augmented)
    print(f"augmented controller ({augmented.n_nu} noise channels, "
          f"worst residual {report.worst():.2e}) -> {out}")
    return EXIT_OK


def _cmd_analyze(args):
    plant, _, _ = _load_system(args.plant)
    _, ctrl, _ = _load_system(args.controller)
    if plant is None or ctrl is None:
        raise DocumentError("analyze needs a plant document and a controller document")
    report = analysis.verify_closed_loop(plant, ctrl, args.g)
    doc = {
        "g": args.g,
        "hurwitz": list(report.hurwitz),
        "abscissas": list(report.abscissas),
        "coupled_feasible": report.coupled.feasible,
        "coupled_margin": report.coupled.solution.margin,
        "realizability_residual": report.realizability_residual,
        "passed": report.passed,
    }
    lines = [f"closed-loop verification at g = {args.g:g}"]
    for i, (h, x) in enumerate(zip(report.hurwitz, report.abscissas)):
        lines.append(f"  mode {i + 1}: spectral abscissa {x:.4f} ({'stable' if h else 'UNSTABLE'})")
    lines.append(f"  coupled certificate: {'feasible' if report.coupled.feasible else 'infeasible'}"
                 f" (margin {report.coupled.solution.margin:.3e})")
    if report.coupled.certificate is not None:
        lines.append(f"  noise offset constant: {report.coupled.certificate.noise_offset:.4g}")
    lines.append(f"  controller realizability residual: {report.realizability_residual:.3e}")
    lines.append(f"  verdict: {'PASS' if report.passed else 'FAIL'}")
    _emit(args, doc, "\n".join(lines))
    if args.out:
        _manifest(args, [args.plant, args.controller], {"g": args.g}, [args.out])
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def _parse_disturbance(spec, n_w):
    if spec == "step":
        return [jumpsim.Disturbance("step", np.ones(n_w) / np.sqrt(n_w), "step")]
    if spec.startswith("sin:"):
        omega = float(spec.split(":", 1)[1])
        direction = np.zeros(n_w)
        direction[0] = 1.0
        return [jumpsim.Disturbance(spec, direction, "sin", omega)]
    raise DocumentError(f"unknown disturbance spec {spec!r}; use sin:<omega> or step")


def _cmd_simulate(args):
    plant, ctrl, _ = _load_system(args.system)
    if plant is None or ctrl is None:
        raise DocumentError("simulate needs a document with plant, controller and rates")
    loop = analysis.assemble_closed_loop(plant, ctrl)
    disturbance = _parse_disturbance(args.disturbance, loop.n_w)[0] if args.disturbance else None
    paths_doc = []
    first_traj = None
    for p in range(args.paths):
        path_seed = int(np.random.SeedSequence([args.seed, p]).generate_state(1)[0])
        path = jumpsim.sample_markov_path(loop.rates, args.t_end, seed=path_seed)
        traj = jumpsim.propagate_moments(
            loop, path, disturbance, np.zeros(loop.n), np.eye(loop.n), args.dt
        )
        if first_traj is None:
            first_traj = traj
        paths_doc.append({
            "path_index": p,
            "jump_times": list(path.jump_times),
            "modes": list(path.modes),
            "output_energy": traj.output_energy,
            "input_energy": traj.input_energy,
        })
    stride = max(1, len(first_traj.times) // 400)
    doc = {
        "t_end": args.t_end,
        "dt": args.dt,
        "seed": args.seed,
        "disturbance": args.disturbance,
        "paths": paths_doc,
        "trajectory": {
            "time": [float(t) for t in first_traj.times[::stride]],
            "mean": serialize.encode_matrix(first_traj.mean[::stride]),
            "second_moment_diag": serialize.encode_matrix(
                np.array([np.diag(q) for q in first_traj.second_moment[::stride]])
            ),
            "z_energy": [float(x) for x in first_traj.z_energy[::stride]],
            "w_energy": [float(x) for x in first_traj.w_energy[::stride]],
        },
    }
    mean_e = float(np.mean([p["output_energy"] for p in paths_doc]))
    text = (f"simulated {args.paths} fault paths to t = {args.t_end:g} "
            f"(dt = {args.dt:g}, seed {args.seed})\n"
            f"  mean output energy {mean_e:.6g}")
    _emit(args, doc, text)
    outputs = [args.out] if args.out else []
    if args.plot_data:
        cols = [first_traj.times[::stride]]
        header = ["time"]
        n = first_traj.mean.shape[1]
        for k in range(n):
            cols.append(first_traj.mean[::stride, k])
            header.append(f"mean_{k + 1}")
        for k in range(n):
            cols.append(np.array([q[k, k] for q in first_traj.second_moment[::stride]]))
            header.append(f"q_{k + 1}{k + 1}")
        cols.append(first_traj.z_energy[::stride])
        header.append("z_energy")
        cols.append(first_traj.w_energy[::stride])
        header.append("w_energy")
        table = np.column_stack(cols)
        Path(args.plot_data).write_text(
            "# " + " ".join(header) + "\n"
            + "\n".join(" ".join(f"{v:.12g}" for v in row) for row in table) + "\n",
            encoding="utf-8",
        )
        outputs.append(args.plot_data)
    if outputs:
        _manifest(args, [args.system],
                  {"paths": args.paths, "t_end": args.t_end, "dt": args.dt,
                   "disturbance": args.disturbance},
                  outputs, seed=args.seed)
    return EXIT_OK


def _cmd_optics_realize(args):
    _, ctrl, _ = _load_system(args.controller)
    if ctrl is None:
        raise DocumentError("optics realize needs a controller document")
    modes_doc = []
    lines = [f"optical realization (static squeezer kappa' = {args.kappa_prime:g})"]
    for i, mode in enumerate(ctrl.modes):
        n_u = ctrl.n_u
        e1 = mode.e[:, :n_u]
        e2 = mode.e[:, n_u:]
        real, fit = optics.controller_fit_report(
            mode.a, mode.b, e1, e2, kappa_prime=args.kappa_prime
        )
        modes_doc.append({
            "mode": i + 1,
            "kappa": real.kappa, "kappa1": real.kappa1, "kappa2": real.kappa2,
            "kappa3": real.kappa3, "chi": real.chi,
            "kappa_prime": real.kappa_prime, "chi_prime": real.chi_prime,
            "fit": fit,
        })
        lines.append(
            f"  mode {i + 1}: kappa={real.kappa:.4f} chi={real.chi:.4f} "
            f"kappa1={real.kappa1:.4f} kappa2={real.kappa2:.4f} kappa3={real.kappa3:.4f} "
            f"chi'={real.chi_prime:.4f} (product gap {fit['product_gap']:.1e})"
        )
    _emit(args, {"modes": modes_doc}, "\n".join(lines))
    if args.out:
        _manifest(args, [args.controller], {"kappa_prime": args.kappa_prime}, [args.out])
    return EXIT_OK


def _cmd_demo(args):
    report = demo.run_paper_demo(
        out_dir=args.out_dir, tol_g=args.tol_g, n_paths=args.paths, quick=args.quick
    )
    if args.out_dir:
        outputs = sorted(Path(args.out_dir).glob("*.json"))
        _manifest(args, [], {"tol_g": args.tol_g, "paths": args.paths,
                             "quick": bool(args.quick)}, outputs, seed=2024)
    text = demo.format_demo_report(report)
    if args.format == "doc":
        payload = serialize.dumps_doc(report)
        if args.out:
            Path(args.out).write_text(payload, encoding="utf-8")
        else:
            sys.stdout.write(payload)
    else:
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    return EXIT_OK if report["ok"] else EXIT_VERIFY_FAIL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qhinf",
        description="coherent H-infinity synthesis and verification for jump quantum systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a controller from a plant document")
    p.add_argument("--plant", required=True)
    p.add_argument("--g", type=float, help="attenuation level to synthesize at")
    p.add_argument("--min-g", action="store_true", help="bisect for the minimal level")
    p.add_argument("--g-lo", type=float, default=0.01)
    p.add_argument("--g-hi", type=float, default=1.0)
    p.add_argument("--tol-g", type=float, default=1e-3)
    p.add_argument("--augment", action="store_true",
                   help="attach realizability noise channels to the result")
    _add_common(p)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("check-pr", help="check physical realizability of a controller")
    p.add_argument("--controller", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    _add_common(p)
    p.set_defaults(func=_cmd_check_pr)

    p = sub.add_parser("augment", help="add noise channels making a controller realizable")
    p.add_argument("--controller", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("analyze", help="verify a closed loop at a given attenuation level")
    p.add_argument("--plant", required=True)
    p.add_argument("--controller", required=True)
    p.add_argument("--g", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="propagate closed-loop moments along fault paths")
    p.add_argument("--system", required=True,
                   help="document with plant, controller and rates sections")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--t-end", type=float, default=100.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--disturbance", help="sin:<omega> or step (default: none)")
    p.add_argument("--plot-data", help="write plain-text trajectory columns to this file")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("optics", help="optical component realization tools")
    optics_sub = p.add_subparsers(dest="optics_command", required=True)
    pr = optics_sub.add_parser("realize", help="invert a controller into component parameters")
    pr.add_argument("--controller", required=True)
    pr.add_argument("--kappa-prime", type=float, default=10.0)
    _add_common(pr)
    pr.set_defaults(func=_cmd_optics_realize)
    pd = optics_sub.add_parser("demo-paper", help="run the bundled design example end to end")
    _configure_demo_parser(pd)

    pd = sub.add_parser("demo-paper", help="run the bundled design example end to end")
    _configure_demo_parser(pd)

    return parser


def _configure_demo_parser(p):
    p.add_argument("--out-dir", help="directory for plant/controller/report documents")
    p.add_argument("--tol-g", type=float, default=5e-3)
    p.add_argument("--paths", type=int, default=20)
    p.add_argument("--quick", action="store_true", help="skip the simulation probe")
    _add_common(p)
    p.set_defaults(func=_cmd_demo)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except synthesis.LmiInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DocumentError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except synthesis.SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    raise SystemExit(main())
