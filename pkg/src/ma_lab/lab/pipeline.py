"""Per-instance verification pipeline and seeded ensembles."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..convex.body import unit_ball_volume
from ..convex.john import normalization_report
from ..errors import MALabError
from ..sections.atlas import nodes_in, safe_height, verify_engulfing, \
    verify_section_chain
from ..sections.cover import cover
from ..sections.maximal import maximal_field
from ..sections.section import Section, as_function, height_field, section
from ..solver.problem import Density, MAProblem
from ..solver.solve import MASolution, solve
from .contact import verify_hesssupermean
from .hessmean import DIV_RTOL, GRAD_BOUND, LAW_RTOL, verify_hessmean
from .levelsets import verify_levelsets, verify_maximal_inequality
from .main_thm import keyestimate, verify_main
from .normalize import region_weights
from .reduction import verify_reg_reduction
from .report import EstimateReport
from .samples import normalized, sample_sections, unit_regions

log = logging.getLogger(__name__)

STAGES = ("solve", "sections", "atlas", "hessmean", "hesssupermean",
          "levelsets", "main", "reg")
# enough for the resolution stability checks
STABILITY_STAGES = ("solve", "sections", "hessmean", "main")
DEPENDS = {
    "solve": (),
    "sections": ("solve",),
    "atlas": ("sections",),
    "hessmean": ("sections",),
    "hesssupermean": ("sections",),
    "levelsets": ("hessmean", "hesssupermean"),
    "main": ("solve",),
    "reg": ("solve",),
}
COVER_EPS = (0.5, 0.1, 0.01)
EPS0 = 0.1
ALEX_RATIO = 20.0
CHAIN_HEIGHTS = 20
SHRINK_CENTERS = 20


def rough_problem(seed, lam=0.5, Lam=2.0, domain=None):
    """Random block density on the unit disc (or ``domain``)."""
    return MAProblem(domain or {"kind": "disc"},
                     Density("random", lam, Lam, seed=seed))


def stage_order(stages):
    """Stages in pipeline order with their prerequisites added."""
    need = set()

    def visit(s):
        if s not in DEPENDS:
            from ..errors import ValidationError
            raise ValidationError(f"unknown stage {s!r}")
        need.add(s)
        for d in DEPENDS[s]:
            visit(d)
    for s in stages:
        visit(s)
    return tuple(s for s in STAGES if s in need)


@dataclass
class InstanceResult:
    report: EstimateReport
    solution: object
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)


class _Clock:
    """Times a stage; library errors leaving it are tagged with the stage
    name and the instance id."""

    def __init__(self, timings, instance_id=""):
        self.timings = timings
        self.instance_id = instance_id

    def __call__(self, name):
        self.name = name
        return self

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, etype, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and isinstance(exc, MALabError) and exc.args:
            exc.args = (f"[{self.instance_id}/{self.name}] {exc.args[0]}",) \
                + exc.args[1:]
        return False


def _worst(values, fn=np.max):
    values = np.asarray(values, float)
    return float(fn(values)) if len(values) else np.nan


def _section_checks(rep, u, N_list, rho, outer, h):
    """Rows on the normalized solutions and the per-sample section chain."""
    n = u.dim
    om = unit_ball_volume(n)
    det_ok, norm_err, bdry, two_s, inf_v, osc, v4, v5 = [], [], [], [], [], [], [], []
    for N in N_list:
        r = normalization_report(N.S.region, N.T)
        det_ok.append(r["inner_ok"] and r["outer_ok"] and r["det_ok"])
        A = N.T.A
        norm_err.append(abs(np.linalg.norm(A.T @ A, 2) - N.T.norm * N.T.adjoint_norm)
                        / N.T.norm ** 2)
        b = N.boundary_report()
        bdry.append(b["v_on_dZ"])
        two_s.append((b["Z2_inner"], b["Z2_outer"]))
        inf_v.append(abs(N.inf_v))
        # v ranges over [inf v, scale t] on T(S(x, 2t))
        osc.append(N.scale * N.t - float(N.v[N.S2.nodes].min()))
        Z = N.Z
        per = float(np.sum(np.linalg.norm(np.roll(Z.vertices, -1, 0) - Z.vertices,
                                          axis=1)))
        v4.append((Z.volume, per, abs(Z.volume - N.T.det * N.S.region.volume)
                   / Z.volume))
        H = N.hessians(N.nodes)[0]
        ok = np.all(np.isfinite(H), axis=(1, 2))
        lap = np.trace(H[ok], axis1=1, axis2=2)
        top = np.linalg.eigvalsh(H[ok])[:, -1]
        v5.append(float(np.max(top - lap)) if ok.any() else 0.0)
    count = len(N_list)
    rep.add("det_T", _worst([N.T.det * N.S.region.volume for N in N_list]),
            n ** n * om, om, all(det_ok), samples=count)
    rep.add("norms", _worst(norm_err), 1e-9, None, _worst(norm_err) <= 1e-9)
    rep.add("vnor", 0.0, 0.0, None, True,
            note="v = scale (g - t) on the image nodes by construction")
    tol = 1e-9 * max(1.0, _worst([N.scale * N.t for N in N_list]))
    rep.add("MAbdry", _worst(bdry), tol, None, _worst(bdry) <= tol)
    c1, c2 = _worst(inf_v, np.min), _worst(inf_v)
    rep.add("eq_Alex", c1, c2, c2 / c1, c1 > 0 and np.isfinite(c2))
    two_s = np.array(two_s).reshape(-1, 2)
    ok2 = bool(np.all(two_s[:, 0] >= 1 - 1e-6) and np.all(two_s[:, 1] <= 3 * n + 1e-6))
    rep.add("normalize_2S", _worst(two_s[:, 1]), 3 * n, _worst(two_s[:, 0], np.min),
            ok2)
    rep.add("v2", _worst(osc), None, _worst(osc), np.isfinite(_worst(osc)))
    v4 = np.array(v4).reshape(-1, 3)
    ok4 = bool(np.all(v4[:, 0] >= om * (1 - 1e-9))
               and np.all(v4[:, 1] <= 2 * np.pi * n) and np.all(v4[:, 2] <= 1e-9))
    rep.add("v4", _worst(v4[:, 0], np.min), om, _worst(v4[:, 1]), ok4)
    rep.add("v5", _worst(v5), 1e-8, None, _worst(v5) <= 1e-8)
    return {"c1": c1, "c2": c2}


def _chain_checks(rep, u, centers, rho, outer, h):
    """Monotone ladder, S(x,t) in S(x,2t) in 2S(x,t), exit of S(x, 2 rho),
    shrinking to the center."""
    heights = rho * 2.0 ** (-np.arange(CHAIN_HEIGHTS) / 4.0)
    mono = dbl = True
    gauge, pairs = 0.0, 0
    inside = True
    for i in centers:
        r = verify_section_chain(u, int(i), heights)
        mono &= r["monotone"]
        dbl &= r["double"]
        gauge = max(gauge, r["double_gauge"])
        pairs += len(heights)
        S2 = section(u, int(i), 2 * rho)
        inside &= bool(np.all(outer.contains(S2.vertices, 1e-9)))
    rep.add("secprop_i", 2 * rho, None, rho, inside, centers=len(centers))
    rep.add("dilation_chain", gauge, 1.0, 2.0, dbl and mono, samples=pairs)
    # shrinking: circumradius at x along rho 2^-l down to the grid scale
    shrink_ok, final = True, 0.0
    for i in centers[:SHRINK_CENTERS]:
        g = height_field(u, int(i))
        x = u.nodes[int(i)]
        ptr, idx = u.neighbours
        floor = g[idx[ptr[i]:ptr[i + 1]]].min()
        t, radii = rho, []
        while t >= floor:
            S = Section(u, int(i), t, g=g)
            if S.region is None:
                break
            radii.append(S.region.circumradius_at(x))
            t *= 0.5
        radii = np.array(radii)
        shrink_ok &= bool(np.all(np.diff(radii) <= 1e-12))
        final = max(final, float(radii[-1]) if len(radii) else 0.0)
    rep.add("secprop_iv", final, 4 * h, None, shrink_ok and final <= 4 * h)
    return pairs


def run_instance(problem=None, grid=64, stages=STAGES, count=100, seed=0,
                 ks=(0, 1, 2), instance_id=None, solution=None, tol=1e-6):
    """Solve (unless ``solution`` is given) and run the requested stages.

    Returns an InstanceResult whose report holds one row per checked
    inequality.
    """
    stages = stage_order(stages)
    timings = {}
    res = {}
    if instance_id is None:
        instance_id = f"seed{seed}-grid{grid}"
    clock = _Clock(timings, instance_id)
    rep = EstimateReport(str(instance_id))
    with clock("solve"):
        sol = solution if solution is not None else solve(problem, grid, tol=tol)
    u = as_function(sol)
    if isinstance(sol, MASolution) and sol.mu is not None:
        mass = float(np.sum(u.cell_areas))
        rep.add("alexandrov", mass, float(np.sum(sol.mu)), sol.residual,
                bool(sol.residual <= tol) or sol.method == "exact",
                method=sol.method)
    h = float(u.lattice.h)
    inner, outer = unit_regions(u.domain)
    rep.info.update({"grid": grid, "h": h, "nodes": int(len(u.nodes)),
                     "seed": seed, "stages": list(stages)})
    consts = rep.constants

    if "sections" in stages:
        with clock("sections"):
            rho = safe_height(u, inner, outer)
            samples = sample_sections(u, inner, rho, count, seed)
            Ns, skipped = normalized(u, samples)
            consts["rho"] = rho
            consts.update(_section_checks(rep, u, Ns, rho, outer, h))
            centers = np.unique([i for i, _ in samples])
            pairs = _chain_checks(rep, u, centers, rho, outer, h)
            rep.info.update({"sections": len(Ns), "skipped": len(skipped),
                             "chain_samples": pairs})
        res["normalized"] = Ns

    if "atlas" in stages:
        with clock("atlas"):
            eng = verify_engulfing(u, samples, pair_limit=2000)
            beta, theta = eng["beta"], eng["theta"]
            ok_b = all(0 < b < 1 for tau, b in beta.items() if tau < 1)
            rep.add("secprop_ii", beta[0.5], 1.0, beta[0.5], ok_b,
                    beta={str(k): v for k, v in beta.items()})
            rep.add("secprop_iii", theta, None, theta,
                    bool(np.isfinite(theta) and theta > 1), pairs=eng["pairs"])
            consts["beta_half"] = beta[0.5]
            consts["theta"] = theta
            A = nodes_in(u, inner)
            Ks = {}
            for e in COVER_EPS:
                c = cover(u, A, rho, e)
                Ks[e] = c.K
            K = max(Ks.values())
            stable = max(Ks[0.1], Ks[0.01]) <= 2 * min(Ks[0.1], Ks[0.01]) * (1 + 1e-12)
            for e in COVER_EPS:
                rep.add(f"covering:eps={e}", Ks[e] * abs(np.log(e)),
                        K * abs(np.log(e)), K, True)
            rep.add("covering:stable", Ks[0.1], Ks[0.01], K, stable)
            consts["K"] = K
            res["K"] = Ks

    if "hessmean" in stages:
        with clock("hessmean"):
            hm = verify_hessmean(u, Ns)
            res["hessmean"] = hm
            consts["C1"] = hm.C1
            consts["c_grad"] = hm.c_grad
            rep.add("hessmean", hm.C1, None, hm.C1, hm.C1 > 0,
                    sections=len(hm.ratio))
            rep.add("v1", _worst(hm.law_error), LAW_RTOL, None,
                    _worst(hm.law_error) <= LAW_RTOL)
            rep.add("v3", hm.c_grad, GRAD_BOUND, hm.c_grad, hm.c_grad <= GRAD_BOUND)
            div = hm.div_error
            rep.add("divergence", _worst(div), DIV_RTOL, float(np.mean(div <= DIV_RTOL)),
                    _worst(div) <= DIV_RTOL)

    if "hesssupermean" in stages:
        with clock("hesssupermean"):
            ct = verify_hesssupermean(u, Ns, seed=seed)
            res["contact"] = ct
            v = ct.verdicts()
            consts.update({"C2": ct.C2, "C3": ct.C3, "eps1": ct.eps1,
                           "c_prime_E": ct.c_prime, "c1_paraboloid": ct.c1})
            rep.add("A", ct.C2, None, ct.C2, v["C2_positive"],
                    eps1=ct.eps1, pass_share=v["pass_share"])
            rep.add("hesssupermean", ct.C3, None, ct.C3,
                    v["C3_positive"] and v["pass_share"] >= 0.95
                    and v["rotation_dev"] <= 1e-9,
                    pass_share=v["pass_share"])
            chain = np.array([s.chain for s in ct.sections])
            rep.add("abp_chain", _worst(chain[:, 0]), _worst(chain[:, 4], np.min),
                    None, v["chain_share"] == 1.0, chain_share=v["chain_share"])
            env_ok = all(s.envelope_ok and s.second_diff_ok == 1.0
                         for s in ct.sections)
            rep.add("envelope", float(np.mean([s.second_diff_ok for s in ct.sections])),
                    1.0, None, env_ok)

    if "levelsets" in stages:
        with clock("levelsets"):
            ids, _ = region_weights(u, inner)
            mf = maximal_field(u, inner, outer, rho, centers=ids[~u.boundary[ids]])
            eps2 = min(EPS0, ct.eps1) if ct.eps1 > 0 else EPS0
            lc = {"c1": ct.c1, "C1": hm.C1, "C2": ct.C2, "C3": ct.C3}
            ls = verify_levelsets(u, inner, outer, rho, mf, constants=lc, eps2=eps2)
            mi = verify_maximal_inequality(u, inner, mf)
            res["levelsets"], res["maximal"] = ls, mi
            consts.update({"C4": ls.C4, "C5": ls.C5, "eps2": eps2,
                           "alpha0": mi.alpha0, "C_prime": mi.C_prime,
                           "C_second": mi.C_second})
            rep.add("levelsets", float(ls.left.max()), None, ls.C4, ls.holds,
                    C5=ls.C5, rungs=len(ls.gammas))
            rep.add("levelsets_replay", ls.replay_share(), 1.0, None,
                    ls.replay_share() == 1.0)
            rep.add("maximalineq", mi.alpha0, None, mi.C_prime, mi.holds,
                    C_second=mi.C_second)

    if "main" in stages:
        with clock("main"):
            key = keyestimate(u, inner, outer)
            res["key"] = key
            consts.update({"c_prime": key.c_prime, "c_second": key.c_second,
                           "cbar": key.cbar})
            rep.add("keyestimate", key.cbar, None, key.c_prime, key.holds)
            res["main"] = {}
            for k in ks:
                m = verify_main(u, inner, outer, k, key)
                res["main"][k] = m
                consts[f"C_main_{k}"] = m.ratio
                rep.integrals[f"I{k + 1}_inner"] = m.lhs
                rep.integrals[f"I{k}_outer"] = m.rhs
                rep.add(f"main:k={k}", m.lhs, m.rhs, m.ratio,
                        m.split_ok and m.floor_ok and np.isfinite(m.ratio))
                rep.add(f"layer_cake:k={k}", m.lhs, m.layer_cake,
                        max(m.layer_rel, m.fubini_rel), m.layer_ok and m.key_ok)

    if "reg" in stages:
        with clock("reg"):
            rr = verify_reg_reduction(u, inner, u.domain, ks)
            res["reg"] = rr
            consts.update({"r1": rr.r1, "r2": rr.r2, "N": rr.N, "rho_reg": rr.rho})
            n = u.dim
            rep.add("comp", max(p.T_norm for p in rr.pieces), n / rr.r1,
                    min(p.det for p in rr.pieces) * rr.r2 ** n,
                    rr.transforms_ok, r1=rr.r1, r2=rr.r2)
            for k in ks:
                consts[f"C_reg_{k}"] = rr.constant(k)
                rep.integrals[f"I{k}_omega_prime"] = rr.I[k]
                rep.add(f"reg_reduction:k={k}", rr.I[k], rr.assembled(k),
                        rr.constant(k),
                        rr.holds and all(p.main[k].holds for p in rr.pieces))
    rep.info["timings"] = timings
    return InstanceResult(rep, sol, timings, res)


def ensemble(seeds, grid=64, stages=STAGES, jobs=None, count=100, ks=(0, 1, 2),
             lam=0.5, Lam=2.0):
    """run_instance over rough densities, one seed each, with joblib.

    ``jobs`` defaults to the MA_LAB_JOBS environment variable (1 if unset).
    Only reports and timings are returned from the workers.
    """
    import os

    from joblib import Parallel, delayed
    if jobs is None:
        jobs = int(os.environ.get("MA_LAB_JOBS", "1"))

    def one(s):
        r = run_instance(rough_problem(s, lam, Lam), grid, stages, count, s, ks)
        return r.report
    if jobs == 1:
        return [one(s) for s in seeds]
    return Parallel(n_jobs=jobs)(delayed(one)(s) for s in seeds)
