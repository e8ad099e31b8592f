"""End-to-end orchestration: model, perturbation, frequencies, reduction, checks, artifacts."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import evolution as ev
from . import kam
from .config import PipelineConfig
from .container import save_fbo
from .fbo import FBO, exp_map, fbo_mul
from .frequencies import OmegaSet, diophantine_filter, diophantine_margin, sample_box
from .norms import beta_decay
from .perturbation import PerturbationSpec, generate_perturbation
from .regularizer import estimate_order, regularize
from .spectral import build_circle, build_sphere, build_synthetic, verify_gaps


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    return v


class Reporter:
    """JSON-lines report plus a separate metadata file for timestamps and timings."""

    def __init__(self, out_dir: str | None):
        self.out_dir = out_dir
        self.records: list[dict] = []
        self.meta: dict = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "timings": {}}
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            open(self.path("report.jsonl"), "w").close()

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def emit(self, kind: str, **payload):
        rec = _clean({"kind": kind, **payload})
        self.records.append(rec)
        if self.out_dir:
            with open(self.path("report.jsonl"), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def check(self, name: str, ok: bool, informational: bool = False, **payload):
        return self.emit("check", check=name, ok=bool(ok), informational=informational, **payload)

    def timing(self, stage: str, seconds: float):
        self.meta["timings"][stage] = self.meta["timings"].get(stage, 0.0) + seconds

    def close(self):
        self.meta["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        if self.out_dir:
            with open(self.path("run_meta.json"), "w", encoding="utf-8") as fh:
                json.dump(self.meta, fh, indent=1, sort_keys=True)

    def failed_checks(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "check"
                and not r["ok"] and not r["informational"]]


# stages ----------------------------------------------------------------------

def build_model(cfg: PipelineConfig):
    m = cfg.model
    if m.kind == "circle":
        return build_circle(m.k_max)
    if m.kind == "sphere":
        return build_sphere(m.k_max)
    n = m.n
    return build_synthetic(n, m.lambda_shift, m.k_max,
                           lambda k: 1 if k == 0 else max(1, k ** (n - 1)), m.eta_bar, m.seed)


def build_perturbation(model, cfg: PipelineConfig) -> FBO:
    p = cfg.perturbation
    spec = PerturbationSpec(delta=p.delta, sigma_l=p.sigma_l, sigma_k=p.sigma_k, seed=p.seed,
                            sub_amp=p.sub_amp, off_amp=p.off_amp, magnitude=p.magnitude)
    return generate_perturbation(model, cfg.frequency.d, cfg.frequency.n_max, spec)


def sample_frequencies(cfg: PipelineConfig) -> OmegaSet:
    f = cfg.frequency
    oset = sample_box(f.d, f.count, f.scheme, f.seed)
    return diophantine_filter(oset, cfg.gamma, cfg.tau, f.l_max)


def kam_config(cfg: PipelineConfig, model) -> kam.KamConfig:
    k = cfg.kam
    gamma = cfg.gamma if cfg.gamma > 0 else 1e-12  # eps = 0: every divisor test passes
    opt = {name: getattr(k, name) or None for name in ("b", "a", "rho", "s0", "s")}
    kappa = k.kappa if k.kappa >= 0 else kam.KamConfig.kappa_default(cfg.perturbation.delta)
    return kam.KamConfig(d=cfg.frequency.d, n=model.n, gamma=gamma, tau=cfg.tau, kappa=kappa,
                         N0=k.N0, chi=k.chi, nu_max=k.nu_max, tol_R=k.tol_R,
                         decay_gate=k.decay_gate, n_psi=k.n_psi, **opt)


def total_transform(transform_log, model, d: int, n_psi: int) -> FBO:
    """Product of exp(i G) over the generator log, later factors on the left."""
    psi = FBO.identity(model, d, n_psi)
    for _role, _step, gen in transform_log:
        psi = fbo_mul(exp_map(gen, n_out=n_psi), psi, n_out=n_psi)
    return psi


def edge_omega(gamma: float, tau: float, l_max: int, first: float = 0.9,
               offset: float = 4.2) -> np.ndarray:
    """omega = (first, first - offset * gamma): close to the resonance omega.(1, -1) = 0
    but still diophantine for the filter with the given gamma."""
    om = np.array([first, first - offset * gamma])
    if diophantine_margin(om[None], gamma, tau, l_max)[0] < 1.0:
        raise ValueError("edge frequency is not diophantine for these parameters")
    return om


@dataclass
class Reduction:
    omega: np.ndarray
    regularization: object
    result: kam.KamResult
    psi: FBO | None = None
    timings: dict = field(default_factory=dict)


def reduce_frequency(model, W: FBO, omega, cfg: PipelineConfig, kcfg: kam.KamConfig | None = None
                     ) -> Reduction:
    """Regularize eps W at omega, then run the KAM iteration with the composed transform."""
    eps = cfg.frequency.epsilon
    kcfg = kcfg or kam_config(cfg, model)
    t0 = time.perf_counter()
    res = regularize(W.scale(eps), omega, cfg.regularize.target_order, cfg.regularize.max_steps,
                     gamma=kcfg.gamma, tau=kcfg.tau)
    t1 = time.perf_counter()
    psi0 = total_transform(res.transform_log, model, W.d, kcfg.n_psi)
    st = kam.initial_state(res.Z, res.R, omega, composed=psi0)
    result = kam.iterate(st, kcfg, raise_on_stagnation=False)
    t2 = time.perf_counter()
    return Reduction(np.asarray(omega, float), res, result, result.state.composed,
                     {"regularize": t1 - t0, "kam": t2 - t1})


def _ratios_ok(ratios, gate) -> bool:
    r = [x for x in ratios if x > 0]
    return all(x <= gate for x in r) and all(b <= a for a, b in zip(r, r[1:]))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


@dataclass
class PipelineReport:
    exit_code: int
    records: list
    reductions: dict
    omega_set: OmegaSet | None
    failed: list


def run_pipeline(cfg: PipelineConfig, out_dir: str | None = None) -> PipelineReport:
    """Run every stage and write artifacts to ``out_dir`` (default cfg.output.dir).

    Exit code 0 when every non-informational check passes, 1 when a check
    fails, 2 when a stage raises (the error record names the stage).
    """
    out_dir = cfg.output.dir if out_dir is None else out_dir
    rep = Reporter(out_dir)
    reductions: dict[int, Reduction] = {}
    oset = None
    stage = "config"
    try:
        rep.emit("config", config=cfg.to_dict(), gamma=cfg.gamma, tau=cfg.tau)

        stage = "model"
        model = build_model(cfg)
        gaps = verify_gaps(model)
        rep.emit("model", model_kind=model.kind, n=model.n, k_max=model.k_max,
                 dims=model.dims, c0=gaps.c0)

        stage = "perturb"
        W = build_perturbation(model, cfg)
        if out_dir:
            save_fbo(rep.path("W.zkam"), W)
        order = estimate_order(W)
        rep.emit("perturbation", fitted_order=order, norm=beta_decay(W, -cfg.perturbation.delta, 0.0))
        rep.check("perturbation_order", abs(order - cfg.perturbation.delta) <= 0.1,
                  value=order, target=cfg.perturbation.delta, tol=0.1)

        stage = "excise"
        oset = sample_frequencies(cfg)
        if out_dir:
            oset.to_csv(rep.path("omega.csv"))
        surv = np.nonzero(oset.alive)[0]
        rep.emit("frequencies", count=len(oset), survivors=len(surv),
                 fraction=oset.fraction_alive(), gamma=cfg.gamma)

        stage = "reduce"
        kcfg = kam_config(cfg, model)
        norm_rows = []
        eps_W = W.scale(cfg.frequency.epsilon)
        M_full = FBO.laplacian(model, W.d, W.n_max) + eps_W
        for i in surv:
            omega = oset.samples[i]
            red = reduce_frequency(model, W, omega, cfg, kcfg)
            reductions[int(i)] = red
            for k_, v in red.timings.items():
                rep.timing(k_, v)
            r, res = red.result, red.regularization
            rec = r.record()
            rec.update(index=int(i), regularization_orders=res.orders,
                       regularization_converged=res.converged)
            rep.emit("kam", **rec)
            audit = beta_decay(res.R, -cfg.regularize.target_order, kcfg.s0)
            rep.check("remainder_smoothing_norm_finite", np.isfinite(audit), index=int(i),
                      value=audit)
            zc = res.Z.mean()
            c = model.cluster_of
            rep.check("normal_form_block_diagonal",
                      float(np.max(np.abs(zc[c[:, None] != c[None, :]]), initial=0.0)) <= 1e-12,
                      index=int(i))
            if not r.excised:
                rep.check("kam_decay_gate", _ratios_ok(r.ratios, kcfg.decay_gate), index=int(i),
                          ratios=r.ratios, gate=kcfg.decay_gate)
            for h in r.state.history:
                norm_rows.append([int(i), h["nu"], float(h["N_nu"]), float(h["norm_R_low"]),
                                  float(h["norm_R_high"]), float(h.get("ratio", 0.0))])
            if out_dir:
                save_fbo(rep.path(f"Z_{i}.zkam"), r.state.Z)
                if cfg.output.save_transforms:
                    save_fbo(rep.path(f"psi_{i}.zkam"), red.psi)
            if cfg.oracle.enabled and not r.excised:
                t0 = time.perf_counter()
                E = kam.floquet_oracle(M_full, omega, cfg.oracle.n_lattice, cfg.oracle.cap)
                mt = kam.match_quasienergies(kam.flat_mu(r.state), E, omega)
                rep.timing("oracle", time.perf_counter() - t0)
                rep.check("oracle_match", mt["max_dist"] <= cfg.oracle.tol and mt["all_mutual"],
                          index=int(i), max_dist=mt["max_dist"], tol=cfg.oracle.tol)
        if out_dir:
            _write_csv(rep.path("kam_norms.csv"),
                       ["index", "nu", "N_nu", "norm_R_low", "norm_R_high", "ratio"], norm_rows)
        n_conv = sum(1 for red in reductions.values() if red.result.converged)
        frac = n_conv / len(surv) if len(surv) else 0.0
        rep.check("kam_converged_fraction", frac >= 0.9, value=frac, converged=n_conv,
                  survivors=len(surv), bound=0.9)
        lip = kam.eigen_lipschitz_check(
            [(red.omega, red.result.state.mu) for red in reductions.values()
             if red.result.converged], kcfg.kappa)
        rep.check("eigenvalue_lipschitz", lip["ok"], informational=True, value=lip["max"])

        stage = "evolve"
        if cfg.evolution.enabled:
            e = cfg.evolution
            s_list = tuple(float(x) for x in e.s_list.split(","))
            u0 = ev.random_initial(model, e.n_initial, 2.0, e.seed)
            chosen = [i for i, red in sorted(reductions.items()) if red.result.converged][:e.n_omega]
            for i in chosen:
                red = reductions[i]
                t0 = time.perf_counter()
                run = ev.EvolutionRun(model, red.omega, cfg.frequency.epsilon, W, u0, e.t_max,
                                      h=e.h, record_every=e.record_every, integrator=e.integrator,
                                      s_list=s_list)
                ev.integrate(run)
                drift = ev.l2_drift(run)
                sb = ev.sobolev_bound_check(run, e.c_gate, 2.0)
                cj = ev.conjugacy_check(run, red.psi, red.result.state.Z, red.omega)
                rep.timing("evolve", time.perf_counter() - t0)
                rep.check("sobolev_ratio_bound", sb["ok"], index=i, min=sb["min"], max=sb["max"],
                          gate=sb["gate"])
                rep.check("l2_drift", drift <= e.l2_tol, index=i, value=drift, bound=e.l2_tol)
                rep.check("conjugacy_defect", cj["max"] <= e.conj_tol, index=i, value=cj["max"],
                          bound=e.conj_tol)
                rep.check("integrator_step_accuracy", not run.accuracy_alert, index=i,
                          informational=True)
                if out_dir:
                    rows = []
                    for t_i, t in enumerate(run.times):
                        row = [float(t)] + list(run.records["L2"][t_i])
                        for s in s_list:
                            row += list(run.records[f"H{s:g}"][t_i])
                        rows.append(row + list(cj["defect"][t_i]))
                    cols = e.n_initial
                    header = ["t"] + [f"L2_{j}" for j in range(cols)]
                    for s in s_list:
                        header += [f"H{s:g}_{j}" for j in range(cols)]
                    header += [f"defect_{j}" for j in range(cols)]
                    _write_csv(rep.path(f"evolution_{i}.csv"), header, rows)
        stage = "done"
    except Exception as exc:  # noqa: BLE001 - structured stage report
        rep.emit("error", stage=stage, error=type(exc).__name__, message=str(exc))
        rep.close()
        return PipelineReport(2, rep.records, reductions, oset, [{"stage": stage}])
    failed = rep.failed_checks()
    rep.emit("summary", ok=not failed, failed=[f["check"] for f in failed])
    rep.close()
    return PipelineReport(0 if not failed else 1, rep.records, reductions, oset, failed)
