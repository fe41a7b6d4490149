"""Bundled three-mode OPO design example and its end-to-end reproduction.

The reference design is a dynamical squeezer whose pump amplitude jumps
between three levels.  Alongside the plant data this module carries an
independently tabulated controller for the same plant (matrices rounded to
four decimals) together with its optical component parameters; the demo
pipeline re-derives everything from scratch and compares against the
tabulated values with PASS / FLAG / FAIL marks.

One known discrepancy is reported as a FLAG rather than a failure: the
tabulated static-squeezer pump values are inconsistent with the gain ratio
implied by the tabulated measurement matrices (0.5155 / 1.0133 / 1.5624
versus 0.6237 / 1.1953 / 1.7650 at kappa' = 10); both numbers appear in
the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, jumpsim, optics, realizability, serialize, synthesis
from .qmodel import Controller, ControllerMode, TransitionRateMatrix, make_commutation_matrix

__all__ = [
    "OPO_KAPPA1",
    "OPO_KAPPA2",
    "OPO_CHI_MODES",
    "OPO_RATES",
    "reference_plant",
    "reference_controller",
    "REFERENCE_MODE_PARAMS",
    "REFERENCE_EXTRA_NOISE",
    "run_paper_demo",
]

# Plant: mirror decay rates from the measured transmissivities, pump
# coefficients chosen so the tabulated drift matrices are reproduced exactly.
OPO_KAPPA1 = 0.8264
OPO_KAPPA2 = 0.0011
OPO_CHI_MODES = (0.04135, 0.08275, 0.12415)
OPO_RATES = (
    (-0.02, 0.01, 0.01),
    (0.01, -0.01, 0.0),
    (0.01, 0.0, -0.01),
)

# Tabulated controller for the reference plant, one mode per pump level.
_REF_A = (
    np.diag([-1.7535, -2.1226]),
    np.diag([-1.5796, -2.2738]),
    np.diag([-1.3992, -2.4340]),
)
_REF_B = (
    np.diag([1.2524, 1.8944]),
    np.diag([0.9713, 2.2099]),
    np.diag([0.7024, 2.5600]),
)
_REF_C = tuple(np.diag([-0.0331, -0.0331]) for _ in range(3))

# Tabulated realizability noise blocks: first block carries the output,
# the second repairs the commutation defect.
REFERENCE_EXTRA_NOISE = (
    (np.diag([0.0331, 0.0331]), np.diag([1.2258, 1.2258])),
    (np.diag([0.0331, 0.0331]), np.diag([1.3057, 1.3057])),
    (np.diag([0.0331, 0.0331]), np.diag([1.4262, 1.4262])),
)

# Tabulated optical parameters per controller mode.
REFERENCE_MODE_PARAMS = (
    {"kappa": 3.8761, "chi": -0.1846, "kappa1": 2.3724, "kappa2": 0.0011,
     "kappa3": 1.5026, "kappa_prime": 10.0, "chi_prime": 0.6237},
    {"kappa": 3.8534, "chi": -0.3471, "kappa1": 2.1475, "kappa2": 0.0011,
     "kappa3": 1.7046, "kappa_prime": 10.0, "chi_prime": 1.1953},
    {"kappa": 3.8332, "chi": -0.5174, "kappa1": 1.7981, "kappa2": 0.0011,
     "kappa3": 2.0340, "kappa_prime": 10.0, "chi_prime": 1.7650},
)


def reference_plant():
    return optics.opo_plant(
        OPO_KAPPA1, OPO_KAPPA2, OPO_CHI_MODES, TransitionRateMatrix(np.array(OPO_RATES))
    )


def reference_controller(with_noise: bool = True) -> Controller:
    """Tabulated controller; with_noise attaches the tabulated noise blocks."""
    modes = []
    for a, b, c, (e1, e2) in zip(_REF_A, _REF_B, _REF_C, REFERENCE_EXTRA_NOISE):
        if with_noise:
            e = np.hstack([e1, e2])
            d = np.hstack([np.eye(2), np.zeros((2, 2))])
        else:
            e = np.zeros((2, 0))
            d = np.zeros((2, 0))
        modes.append(ControllerMode(a, b, c, d, e))
    return Controller(tuple(modes), make_commutation_matrix(2))


@dataclass
class _Check:
    name: str
    computed: object
    expected: object
    tol: float | None
    status: str
    detail: str = ""

    def as_doc(self):
        def clean(x):
            if isinstance(x, (np.floating, float)):
                return float(x)
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x

        return {
            "name": self.name,
            "computed": clean(self.computed),
            "expected": clean(self.expected),
            "tol": self.tol,
            "status": self.status,
            "detail": self.detail,
        }


def _value_check(name, computed, expected, tol, detail=""):
    ok = abs(computed - expected) <= tol
    return _Check(name, computed, expected, tol, "PASS" if ok else "FAIL", detail)


def _bool_check(name, ok, detail=""):
    return _Check(name, bool(ok), True, None, "PASS" if ok else "FAIL", detail)


def run_paper_demo(out_dir=None, tol_g: float = 5e-3, n_paths: int = 20,
                   quick: bool = False):
    """Reproduce the full design pipeline on the bundled example.

    Stages: build the plant, bisect the attenuation level, synthesize and
    augment a controller, certify the loop, cross-check the tabulated
    controller (realizability, stability, noise augmentation, optical
    inversion) and write report + documents to ``out_dir`` when given.

    Returns the report dict; the overall verdict is in report["ok"].
    """
    checks: list[_Check] = []
    plant = reference_plant()

    # drift matrices against the tabulated four-decimal values
    expected_a = (
        np.diag([-0.4551, -0.3724]),
        np.diag([-0.4965, -0.3310]),
        np.diag([-0.5379, -0.2896]),
    )
    for i, (a, exp) in enumerate(zip(plant.a_modes, expected_a)):
        checks.append(
            _value_check(
                f"plant drift mode {i + 1} max deviation",
                float(np.max(np.abs(a - exp))), 0.0, 5e-4,
            )
        )

    # synthesis: minimal attenuation level with certificate
    g_star, syn = synthesis.min_attenuation(
        plant, g_lo=0.01, g_hi=1.0, tol_g=tol_g
    )
    checks.append(_bool_check("attenuation bisection converged", True,
                              f"g = {g_star:.6g}, LMI margin {syn.solution.margin:.3e}"))

    aug = realizability.augment_jump_controller(syn.controller)
    pr = realizability.check_controller_realizability(aug, tol=1e-9)
    checks.append(_bool_check("synthesized controller realizable after augmentation",
                              pr.realizable, f"worst residual {pr.worst():.3e}"))

    report_cl = analysis.verify_closed_loop(plant, aug, g_star)
    checks.append(_bool_check("closed loop certified at bisected level",
                              report_cl.passed,
                              f"abscissas {[f'{x:.4f}' for x in report_cl.abscissas]}"))

    # simulation probe of the certified loop
    if not quick:
        loop = analysis.assemble_closed_loop(plant, aug)
        probe = jumpsim.estimate_attenuation(
            loop, g_star, t_end=120.0, n_paths=n_paths, seed=2024
        )
        checks.append(_bool_check(
            "simulated energy ratios stay below the certified level",
            probe.passed, f"max ratio {probe.max_ratio:.4g} vs g^2 = {g_star**2:.4g}"
        ))

    # tabulated controller cross-checks
    ref = reference_controller()
    pr_ref = realizability.check_controller_realizability(ref, tol=5e-3)
    checks.append(_bool_check("tabulated controller realizable at table precision",
                              pr_ref.realizable, f"worst residual {pr_ref.worst():.2e}"))
    ref_cl = analysis.verify_closed_loop(plant, ref, max(g_star, 0.5))
    checks.append(_bool_check("tabulated controller stabilises every mode",
                              all(ref_cl.hurwitz),
                              f"abscissas {[f'{x:.4f}' for x in ref_cl.abscissas]}"))

    # noise augmentation reproduces the tabulated repair channels
    expected_extra = (1.2258, 1.3057, 1.4262)
    for i, mode in enumerate(ref.modes):
        aug_i = realizability.augment_controller(mode.a, mode.b, mode.c, ref.theta_k)
        coeff = float(aug_i.e_extra[0, 0])
        off = float(np.max(np.abs(aug_i.e_extra - coeff * np.eye(2))))
        checks.append(_value_check(
            f"repair channel gain mode {i + 1}", coeff, expected_extra[i], 2e-3,
            detail=f"off-identity deviation {off:.1e}",
        ))

    # optical inversion of the tabulated controller
    kappa_list, chi_prime_computed = [], []
    for i, mode in enumerate(ref.modes):
        e1, e2 = REFERENCE_EXTRA_NOISE[i]
        real, fit = optics.controller_fit_report(mode.a, mode.b, e1, e2, kappa_prime=10.0)
        ref_params = REFERENCE_MODE_PARAMS[i]
        kappa_list.append(real.kappa)
        chi_prime_computed.append(real.chi_prime)
        checks.append(_value_check(f"total decay mode {i + 1}", real.kappa,
                                   ref_params["kappa"], 2e-3))
        checks.append(_value_check(f"pump coefficient mode {i + 1}", real.chi,
                                   ref_params["chi"], 2e-3))
        checks.append(_value_check(f"first mirror decay mode {i + 1}", real.kappa1,
                                   ref_params["kappa1"], 2e-3))
        checks.append(_value_check(f"second mirror decay mode {i + 1}", real.kappa2,
                                   ref_params["kappa2"], 1e-3))
        checks.append(_value_check(f"third mirror decay mode {i + 1}", real.kappa3,
                                   ref_params["kappa3"], 1e-3))
        checks.append(_bool_check(
            f"measurement gain product consistent mode {i + 1}", fit["consistent"],
            f"gap {fit['product_gap']:.2e}",
        ))
        # known discrepancy: tabulated pump of the static squeezer
        gap = abs(real.chi_prime - ref_params["chi_prime"])
        checks.append(_Check(
            f"static squeezer pump mode {i + 1}", real.chi_prime,
            ref_params["chi_prime"], None, "FLAG",
            detail=(
                f"gain-ratio fit gives {real.chi_prime:.4f}, table lists "
                f"{ref_params['chi_prime']:.4f} (gap {gap:.4f}); known inconsistency, reported not failed"
            ),
        ))

    ok = all(c.status != "FAIL" for c in checks)
    report = {
        "ok": ok,
        "g_star": float(g_star),
        "kappa_list": [float(k) for k in kappa_list],
        "chi_prime_computed": [float(x) for x in chi_prime_computed],
        "checks": [c.as_doc() for c in checks],
    }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        serialize.write_doc(out_dir / "plant.json", serialize.system_to_doc(plant=plant))
        serialize.write_doc(
            out_dir / "controller_synthesized.json",
            serialize.system_to_doc(controller=aug, rates=plant.rates),
        )
        serialize.write_doc(
            out_dir / "controller_reference.json",
            serialize.system_to_doc(controller=ref, rates=plant.rates),
        )
        serialize.write_doc(out_dir / "report.json", report)
    return report


def format_demo_report(report) -> str:
    lines = [
        "design example reproduction",
        f"  bisected attenuation level g = {report['g_star']:.6g}",
        "",
        f"  {'status':6s}  check",
        "  " + "-" * 72,
    ]
    for c in report["checks"]:
        line = f"  {c['status']:6s}  {c['name']}"
        if c["tol"] is not None:
            line += f"  ({c['computed']:.6g} vs {c['expected']:.6g}, tol {c['tol']:g})"
        if c["detail"]:
            line += f"  [{c['detail']}]"
        lines.append(line)
    lines.append("")
    lines.append(f"overall: {'PASS' if report['ok'] else 'FAIL'}")
    return "\n".join(lines)
