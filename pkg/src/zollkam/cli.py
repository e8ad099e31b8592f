"""Command line entry point. Heavy modules are imported after thread limits are set."""
from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _set_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get("ZKAM_THREADS")
        n = int(env) if env else None
    if n is not None and n > 0:
        for v in _THREAD_VARS:
            os.environ[v] = str(n)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="seed for perturbation, sampling and initial data")
    common.add_argument("--threads", type=int, help="BLAS/FFT thread count (else ZKAM_THREADS)")
    p = argparse.ArgumentParser(prog="zollkam", description="KAM reducibility engine")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("model", parents=[common], help="build the spectral model and check gaps")
    sub.add_parser("perturb", parents=[common], help="generate and save the perturbation")
    for name, hlp in (("reduce", "regularize at one frequency"),
                      ("kam", "regularize and run the KAM iteration at one frequency"),
                      ("evolve", "integrate and check conjugacy at one frequency")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("--omega", type=float, nargs="+",
                        help="frequency vector (default: first diophantine survivor)")
    ex = sub.add_parser("excise", parents=[common], help="sample frequencies and excise")
    ex.add_argument("--N", type=float, nargs="*", default=[],
                    help="also excise by the unperturbed second Melnikov conditions at these N")
    sub.add_parser("verify", parents=[common], help="run the frozen-constant norm checks")
    sub.add_parser("pipeline", parents=[common], help="end-to-end run")
    dp = sub.add_parser("dump", parents=[common], help="print an FBO container as text")
    dp.add_argument("path")
    return p


def _load(args):
    from .config import PipelineConfig, load_config
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.perturbation.seed = args.seed
        cfg.frequency.seed = args.seed
        cfg.evolution.seed = args.seed
    if args.out:
        cfg.output.dir = args.out
    return cfg


def _emit(out_dir, name, rec):
    from .pipeline import _clean
    line = json.dumps(_clean(rec), sort_keys=True)
    print(line)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _omega(args, cfg):
    import numpy as np
    from .pipeline import sample_frequencies
    if args.omega:
        om = np.asarray(args.omega, float)
        if om.size != cfg.frequency.d:
            raise SystemExit(f"--omega needs {cfg.frequency.d} components")
        return om
    oset = sample_frequencies(cfg)
    surv = oset.survivors()
    if len(surv) == 0:
        raise SystemExit("no diophantine survivor in the sample")
    return surv[0]


def _run(args) -> int:
    from . import pipeline as pl
    from .container import debug_dump, load_fbo, save_fbo
    from .errors import ZkamError

    cmd = args.command
    try:
        cfg = _load(args)
        out = cfg.output.dir
        if cmd == "pipeline":
            rep = pl.run_pipeline(cfg, out)
            print(json.dumps(rep.records[-1], sort_keys=True))
            return rep.exit_code
        if cmd == "dump":
            sys.stdout.write(debug_dump(load_fbo(args.path)))
            return 0
        if cmd == "verify":
            from .calibration import verify
            res = verify()
            _emit(out, "verify.jsonl", res)
            return 0 if all(v["violations"] == 0 for v in res.values()) else 1
        model = pl.build_model(cfg)
        if cmd == "model":
            from .spectral import verify_gaps
            g = verify_gaps(model)
            _emit(out, "model.jsonl", {"model_kind": model.kind, "n": model.n,
                                       "k_max": model.k_max, "dims": model.dims.tolist(),
                                       "c0": g.c0, "gaps_ok": g.ok})
            return 0
        if cmd == "excise":
            from .frequencies import measure_estimate, melnikov_filter
            oset0 = pl.sample_frequencies(cfg)
            rec = {"count": len(oset0), "diophantine_survivors": int(oset0.alive.sum())}
            mu = [model.clusters[k].Lambda for k in range(model.n_clusters)]
            for N in args.N:
                after = melnikov_filter(oset0, mu, cfg.gamma, N, model.n, cfg.tau)
                rec[f"N={N:g}"] = measure_estimate(oset0, after).as_dict()
            if out:
                os.makedirs(out, exist_ok=True)
                oset0.to_csv(os.path.join(out, "omega.csv"))
            _emit(out, "excise.jsonl", rec)
            return 0
        W = pl.build_perturbation(model, cfg)
        if cmd == "perturb":
            from .regularizer import estimate_order
            if out:
                os.makedirs(out, exist_ok=True)
                save_fbo(os.path.join(out, "W.zkam"), W)
            _emit(out, "perturb.jsonl", {"fitted_order": estimate_order(W),
                                         "delta": cfg.perturbation.delta})
            return 0
        omega = _omega(args, cfg)
        if cmd == "reduce":
            from .regularizer import regularize
            kc = pl.kam_config(cfg, model)
            res = regularize(W.scale(cfg.frequency.epsilon), omega, cfg.regularize.target_order,
                             cfg.regularize.max_steps, gamma=kc.gamma, tau=kc.tau)
            if out:
                os.makedirs(out, exist_ok=True)
                save_fbo(os.path.join(out, "Z.zkam"), res.Z)
                save_fbo(os.path.join(out, "R.zkam"), res.R)
                for role, step, gen in res.transform_log:
                    save_fbo(os.path.join(out, f"{role}_{step}.zkam"), gen)
            _emit(out, "reduce.jsonl", {"omega": omega, "orders": res.orders,
                                        "converged": res.converged,
                                        "log": [[r, s] for r, s, _ in res.transform_log]})
            return 0
        red = pl.reduce_frequency(model, W, omega, cfg)
        if cmd == "kam":
            if out:
                os.makedirs(out, exist_ok=True)
                save_fbo(os.path.join(out, "Z.zkam"), red.result.state.Z)
                save_fbo(os.path.join(out, "psi.zkam"), red.psi)
            _emit(out, "kam.jsonl", red.result.record())
            return 0 if red.result.converged else 1
        if cmd == "evolve":
            from . import evolution as ev
            e = cfg.evolution
            u0 = ev.random_initial(model, e.n_initial, 2.0, e.seed)
            run = ev.EvolutionRun(model, omega, cfg.frequency.epsilon, W, u0, e.t_max, h=e.h,
                                  record_every=e.record_every, integrator=e.integrator)
            ev.integrate(run)
            sb = ev.sobolev_bound_check(run, e.c_gate)
            cj = ev.conjugacy_check(run, red.psi, red.result.state.Z, omega)
            rec = {"omega": omega, "l2_drift": ev.l2_drift(run), "sobolev": sb,
                   "conjugacy_max": cj["max"], "accuracy_alert": run.accuracy_alert}
            _emit(out, "evolve.jsonl", rec)
            return 0 if sb["ok"] and cj["max"] <= e.conj_tol else 1
    except ZkamError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _set_threads(args.threads)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
