"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Tolerances and runtime budgets are pinned here; nothing is deferred to later
calibration.  Calibrated constants (where only existence is guaranteed) were
measured once on the fixed seeds below and frozen with ample margin.
"""

import math
import time

import numpy as np
import pytest

from nelab import experiments as ex
from nelab import integrands as ig
from nelab import iterate as it
from nelab import potentials as pt
from nelab import solve as sv
from nelab.lattice import Ball, Grid, GridFunction, node_integral


def report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance {num:02d}] {name}: {status} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def scenario_failures(records):
    return [(r.case_id, n) for r in records for n, ok in r.assertions.items() if not ok]


def test_criterion_01_potential_identities():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        count = int(rng.integers(1, 7))
        atoms = tuple((float(x), float(y), float(w)) for x, y, w in
                      zip(rng.uniform(-1, 1, count), rng.uniform(-1, 1, count),
                          rng.uniform(0.05, 2.0, count)))
        mu = pt.Measure(atoms=atoms)
        x0 = tuple(rng.uniform(-0.5, 0.5, 2))
        r = float(rng.uniform(0.2, 1.5))
        pairs = ((pt.wolff(mu, x0, r, 1.0, 2.0), pt.riesz(mu, x0, r, 2.0)),
                 (pt.wolff(mu, x0, r, 0.5, 2.0), pt.riesz(mu, x0, r, 1.0)))
        for a, b in pairs:
            if math.isinf(a) or math.isinf(b):
                worst = max(worst, 0.0 if a == b else math.inf)
            elif b != 0:
                worst = max(worst, abs(a - b) / b)
    elapsed = time.monotonic() - start
    report(1, "wolff-riesz identities", worst <= 1e-8 and elapsed < 5.0,
           f"(worst rel {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_02_point_mass_closed_forms():
    mu2 = pt.Measure(atoms=((0.0, 0.0, 1.0),))
    riesz_err = abs(pt.riesz(mu2, (0.25, 0.0), 1.0, 1.0, 2) - 3.0)
    mu3 = pt.Measure(atoms=((0.0, 0.0, 1.0),), n=3)
    d = 0.25
    wolff_err = abs(pt.wolff(mu3, (d, 0.0), 1.0, 1.0, 2.0, 3) - (1 / d - 1.0))
    report(2, "point-mass closed forms", riesz_err <= 1e-10 and wolff_err <= 1e-10,
           f"(riesz err {riesz_err:.1e}, wolff err {wolff_err:.1e})")


def test_criterion_03_lorentz_norms():
    rng = np.random.default_rng(103)
    g = Grid((0, 0), (8, 8), (65, 65))
    worst = 0.0
    for k in range(20):
        x1 = float(rng.uniform(1, 7))
        y1 = float(rng.uniform(1, 7))
        f = GridFunction.from_callable(
            g, lambda x, y, a=x1, b=y1: ((x < a) & (y < b)).astype(float))
        m = node_integral(g, f.values)
        t = float(rng.uniform(1.2, 4.0))
        got = pt.lorentz_norm(f, pt.LorentzIndex(t, t))
        worst = max(worst, abs(got - m ** (1 / t)) / m ** (1 / t))
    # embedding inequalities with fixed constants on a 20-function set
    gg = Grid((-1, -1), (2, 2), (33, 33))
    fns = []
    for _ in range(20):
        c = rng.normal(size=4)
        fns.append(GridFunction.from_callable(
            gg, lambda x, y, c=c: np.abs(c[0] * x + c[1] * np.sin(3 * y)
                                         + c[2] * x * y) + 0.01 * abs(c[3])))
    emb_ok = True
    for f in fns:
        for t in (1.5, 2.0):
            for g1, g2 in ((1.0, 2.0), (2.0, 4.0)):
                emb_ok &= (pt.lorentz_norm(f, pt.LorentzIndex(t, g2))
                           <= 1.0 * pt.lorentz_norm(f, pt.LorentzIndex(t, g1)) + 1e-12)
        emb_ok &= (pt.lorentz_norm(f, pt.LorentzIndex(2.0, 2.0))
                   <= 2.0 * pt.lorentz_norm(f, pt.LorentzIndex(3.0, 2.0)))
    report(3, "lorentz closed forms and embeddings", worst <= 1e-8 and emb_ok,
           f"(worst indicator rel {worst:.1e})")


def test_criterion_04_sup_potential_calibration():
    start = time.monotonic()
    rng = np.random.default_rng(104)
    g = Grid((-1, -1), (2, 2), (33, 33))
    tuples = ((2.0, 1.0, 2.0, 1.0), (2.0, 1.0, 2.0, 2.0),
              (1.0, 1.0, 1.0, 1.0), (2.0, 0.5, 1.0, 1.0))
    calibrated = {(2.0, 1.0, 2.0, 2.0): 0.5, (1.0, 1.0, 1.0, 1.0): 0.5,
                  (2.0, 0.5, 1.0, 1.0): 0.8}
    admissible = [tp for tp in tuples if 2 * tp[3] / (tp[0] * tp[1]) > 1]
    assert (2.0, 1.0, 2.0, 1.0) not in admissible  # scaling hypothesis filter
    ok = True
    details = []
    for tp in admissible:
        t, delta, m, theta = tp
        worst = 0.0
        for _ in range(100):
            dens = GridFunction(g, rng.uniform(0, 2, g.n_nodes))
            rep = pt.potential_sup_bound_check(pt.Measure(density=dens),
                                               (0.0, 0.0), 0.4, 0.5,
                                               t, delta, m, theta)
            worst = max(worst, rep.ratio)
        ok &= worst <= calibrated[tp]
        details.append(f"{tp}:{worst:.3f}<={calibrated[tp]}")
    elapsed = time.monotonic() - start
    report(4, "sup-potential vs lorentz calibration", ok and elapsed < 60.0,
           f"({'; '.join(details)}, {elapsed:.0f}s)")


def test_criterion_05_iteration_lemma_validity():
    sc = ex.Scenario("lemma_suite", seed=105, parameters={"grid_n": 49})
    records, plotrows = ex.run_scenario(sc)
    failed = scenario_failures(records)
    counts = {}
    for row in plotrows:
        counts[row["lemma"]] = counts.get(row["lemma"], 0) + 1
    enough = all(counts.get(k, 0) >= 50 for k in
                 ("de_giorgi", "moser", "hole_filling", "nikolski_embedding"))
    report(5, "iteration lemma validity", failed == [] and enough,
           f"(cases {counts}, failures {failed})")


def test_criterion_06_hessian_sandwich_and_derivatives():
    rng = np.random.default_rng(106)
    families = [
        ig.p_power(1.7, s=0.3),
        ig.double_phase(2.0, 3.5, 0.7, ig.Field("abs_x1_pow", (0.7, 1.0))),
        ig.multi_phase(2.0, [(ig.Field("abs_x1_pow", (0.5, 1.0)), 2.5, 0.5),
                             (ig.const_field(0.2), 3.0, 1.0)]),
        ig.variable_exponent(ig.Field("affine", (2.0, 0.5, 0.3)),
                             ig.Omega("holder", (1.0, 0.5)), 1.6, 2.8),
        ig.nearly_linear(),
        ig.nested_exponential(1),
    ]
    n = 10_000
    ok = True
    details = []
    for spec in families:
        x = rng.uniform(0.05, 0.95, n)
        y = rng.uniform(0.05, 0.95, n)
        zmax = 1.1 if spec.family == "NestedExponential" else 2.5
        z = rng.uniform(-zmax, zmax, (n, 2))
        tnorm = np.linalg.norm(z, axis=1)
        z[tnorm < 0.05] += 0.1
        tnorm = np.linalg.norm(z, axis=1)
        H = ig.hess_z(spec, x, y, z)
        env = ig.envelope(spec)
        g1 = env.g1(x, y, tnorm)
        g2 = env.g2(x, y, tnorm)
        xi = rng.normal(size=(n, 2))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        quad = np.einsum("ni,nij,nj->n", xi, H, xi)
        violations = int(np.sum(quad < g1 * (1 - 1e-9)) + np.sum(quad > g2 * (1 + 1e-9)))
        h = 1e-6
        e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
        g_fd = np.stack([
            (ig.value(spec, x, y, z + e1) - ig.value(spec, x, y, z - e1)) / (2 * h),
            (ig.value(spec, x, y, z + e2) - ig.value(spec, x, y, z - e2)) / (2 * h),
        ], axis=-1)
        grad = ig.grad_z(spec, x, y, z)
        rel_g = float(np.max(np.abs(grad - g_fd).max(axis=1)
                             / (np.linalg.norm(grad, axis=1) + 1e-12)))
        H_fd = np.stack([
            (ig.grad_z(spec, x, y, z + e1) - ig.grad_z(spec, x, y, z - e1)) / (2 * h),
            (ig.grad_z(spec, x, y, z + e2) - ig.grad_z(spec, x, y, z - e2)) / (2 * h),
        ], axis=-1)
        rel_h = float(np.max(np.abs(H - H_fd).max(axis=(1, 2))
                             / (np.abs(H).max(axis=(1, 2)) + 1e-12)))
        ok &= violations == 0 and rel_g < 1e-6 and rel_h < 1e-6
        details.append(f"{spec.family}: viol={violations} dg={rel_g:.1e} dh={rel_h:.1e}")
    report(6, "hessian sandwich and derivative consistency", ok,
           "(" + "; ".join(details) + ")")


def test_criterion_07_affine_exactness():
    grid = Grid((-1, -1), (2, 2), (33, 33))
    families = [
        ig.p_power(2.0),
        ig.p_power(3.0, s=0.5),
        ig.double_phase(2.0, 4.0, 1.0, ig.const_field(0.5)),
        ig.multi_phase(2.0, [(ig.const_field(0.3), 2.5, 0.5)]),
        ig.variable_exponent(ig.const_field(2.5), ig.Omega("holder", (1.0, 0.0)),
                             2.5, 2.5),
        ig.nearly_linear(),
        ig.nested_exponential(1),
        ig.generic_pq(1.5, 2.5, 0.5),
    ]
    gvec = np.array([0.4, -0.25])
    ok = True
    worst_e = worst_r = 0.0
    for spec in families:
        bd = sv.boundary_field(grid, f"affine 0.1 {gvec[0]} {gvec[1]}")
        res = sv.minimize(sv.Problem(spec, grid, bd))
        exact = float(ig.value(spec, 0.0, 0.0, gvec)) * grid.area
        err = abs(res.energy - exact) / (1 + abs(exact))
        worst_e = max(worst_e, err)
        worst_r = max(worst_r, res.residual_norm)
        ok &= err <= 1e-9 and res.residual_norm <= 1e-9
    report(7, "affine data exactness", ok,
           f"(worst energy err {worst_e:.1e}, worst residual {worst_r:.1e})")


def test_criterion_08_green_function_anchor():
    start = time.monotonic()
    res, mu = sv.solve_measure_data(ig.p_power(2.0),
                                    Grid((-1, -1), (2, 2), (129, 129)),
                                    (0.0, 0.0, 1.0))
    pts, cg = sv.cell_center_gradients(res.u)
    d = np.hypot(pts[:, 0], pts[:, 1])
    sel = (d > 0.1) & (d < 0.3)
    rel = np.abs(np.hypot(cg[sel, 0], cg[sel, 1]) * (2 * np.pi * d[sel]) - 1.0)
    rng = np.random.default_rng(108)
    samples = [(r * math.cos(a), r * math.sin(a)) for r, a in
               zip(rng.uniform(0.1, 0.3, 16), rng.uniform(0, 2 * np.pi, 16))]
    est = sv.potential_estimate_check(res, mu, samples, 0.5, ig.p_power(2.0))
    elapsed = time.monotonic() - start
    ok = rel.max() < 0.10 and est.max_ratio <= 1.0 and elapsed < 120.0
    report(8, "green function anchor", ok,
           f"(worst rel {rel.max():.3f}, riesz ratio {est.max_ratio:.3f}, {elapsed:.0f}s)")


def test_criterion_09_double_phase_dichotomy():
    start = time.monotonic()
    records, _ = ex.run_scenario(ex.Scenario("double_phase_dichotomy", seed=109))
    failed = scenario_failures(records)
    n_reg = sum(1 for r in records if r.case_id.startswith("regular"))
    n_ctr = sum(1 for r in records if r.case_id.startswith("counterexample"))
    elapsed = time.monotonic() - start
    ok = failed == [] and n_reg >= 8 and n_ctr >= 8 and elapsed < 600.0
    report(9, "double-phase dichotomy", ok,
           f"({n_reg}+{n_ctr} points, misclassified {failed}, {elapsed:.0f}s)")


def test_criterion_10_lavrentiev_detection():
    records, _ = ex.run_scenario(ex.Scenario("lavrentiev_detect", seed=110))
    failed = scenario_failures(records)
    by_case = {r.case_id: r for r in records}
    zk = by_case["zhikov_checkerboard"]
    levels_pos = [zk.assertions[k] for k in zk.assertions if k.startswith("gap_positive")]
    ok = failed == [] and len(levels_pos) == 3 and all(levels_pos)
    report(10, "lavrentiev detection", ok, f"(failures {failed})")


def test_criterion_11_caccioppoli_suites():
    records, _ = ex.run_scenario(ex.Scenario("caccioppoli_suite", seed=111))
    failed = scenario_failures(records)
    variants = {r.params["variant"] for r in records}
    # exact monotonicity of the fractional gap condition on a beta grid
    fp = it.fractional_parameter_solver(2, 2.0, 2.1, 0.8)
    betas = np.linspace(1e-4, 0.8 / 1.8 * (1 - 1e-9), 257)
    mono = bool(np.all(np.diff(fp.rhs_of_beta(betas)) >= -1e-14))
    ok = (failed == [] and variants ==
          {"classical", "p_growth", "renormalized", "fractional"} and mono)
    report(11, "caccioppoli suites", ok,
           f"(variants {sorted(variants)}, monotone beta {mono}, failures {failed})")


def test_criterion_12_determinism(tmp_path):
    params = {"grid_n": 25, "de_giorgi": 6, "moser": 6, "hole_filling": 6,
              "embedding": 4, "sup_potential": 4}
    outputs = []
    for d in ("a", "b"):
        sc = ex.Scenario("lemma_suite", seed=112, parameters=dict(params))
        records, plotrows = ex.run_scenario(sc)
        ex.emit_report(records, plotrows, sc.id, tmp_path / d, figures=False)
        outputs.append(((tmp_path / d / "records.csv").read_bytes(),
                        (tmp_path / d / "plotdata_lemma_suite.csv").read_bytes()))
    ok = outputs[0] == outputs[1]
    report(12, "seeded determinism", ok, "(byte-identical records and plotdata)")
