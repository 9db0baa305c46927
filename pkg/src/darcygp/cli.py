"""Command-line workflow driver.

Each subcommand runs one pipeline stage against an artifact directory; the
run configuration comes from --config JSON with any field overridable by a
flag of the same name.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import confidence as conf
from . import fastgp, pipeline
from .calibration import load_report

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(pipeline.RunConfig)}
_LOCATION_FIELDS = {"injection_location", "extraction_location", "critical_location"}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON file with RunConfig fields")
    for name, f in _CONFIG_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        if name in _LOCATION_FIELDS:
            parser.add_argument(flag, type=float, nargs=2, metavar=("X", "Y"), default=None)
        elif f.type in ("bool", bool):
            parser.add_argument(flag, type=lambda v: v.lower() in ("1", "true", "yes"), default=None, metavar="BOOL")
        elif f.type in ("int", int) or name == "workers":
            parser.add_argument(flag, type=int, default=None)
        elif f.type in ("float", float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _build_config(args: argparse.Namespace) -> pipeline.RunConfig:
    raw = {}
    if args.config is not None:
        raw.update(json.loads(Path(args.config).read_text()))
    for name in _CONFIG_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            raw[name] = tuple(val) if name in _LOCATION_FIELDS else val
    for key in _LOCATION_FIELDS:
        if key in raw:
            raw[key] = tuple(raw[key])
    return pipeline.RunConfig(**raw)


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> int:
    config = _build_config(args)
    out = _outdir(args)
    locations = pipeline.run_sampling(config)
    np.savetxt(out / "locations.csv", locations, delimiter=",")
    pipeline.save_config(config, out / "config.json")
    print(f"wrote {len(locations)} sampling locations to {out / 'locations.csv'}")
    return 0


def cmd_solve(args) -> int:
    config = _build_config(args)
    out = _outdir(args)
    locations = pipeline.run_sampling(config)
    training = pipeline.run_ensemble(config, locations)
    pipeline.write_training_csv(out / "training.csv", training)
    pipeline.save_config(config, out / "config.json")
    print(f"solved {training.n} problems; max residual {np.nanmax(training.residuals):.3e}")
    return 0


def cmd_calibrate(args) -> int:
    config = _build_config(args)
    out = _outdir(args)
    report = pipeline.run_calibration(config, report_path=out / "calibration.json")
    print(
        "calibration: a_s=%.4f a_d=%.4f bound=%.6g"
        % (report["fit"]["a_s"], report["fit"]["a_d"], report["rmse_bound"])
    )
    return 0


def cmd_fit(args) -> int:
    config = _build_config(args)
    out = _outdir(args)
    training = pipeline.read_training_csv(out / "training.csv", config)
    report = load_report(out / "calibration.json")
    model = pipeline.run_fit(config, training, report)
    fastgp.save_model(
        model,
        out / "model.json",
        generator_info={"type": "lattice", "vector_source": config.lattice_vector_path or "packaged-default"},
        config_hash=pipeline.config_hash(config),
    )
    d = model.diagnostics
    print(f"fitted model: zeta {d.get('zeta_init'):.3e} -> {model.zeta:.3e}, loglik {d.get('log_likelihood'):.4f}")
    return 0


def _load_model_and_map(args):
    out = Path(args.outdir)
    config = pipeline.load_config(out / "config.json")
    model = fastgp.load_model(out / "model.json")
    return config, model, pipeline.domain_map_for(config)


def cmd_confidence(args) -> int:
    config, model, dmap = _load_model_and_map(args)
    res = conf.expected_confidence(
        model, dmap, args.rate, args.threshold,
        n_nodes=config.qmc_nodes, replicates=config.qmc_replicates, seed=config.seed + 1,
    )
    print(json.dumps({"r": res.rate, "h": res.threshold, "estimate": res.estimate, "stderr": res.std_error}))
    return 0


def cmd_curve(args) -> int:
    config, model, dmap = _load_model_and_map(args)
    grid = pipeline.default_rate_grid(config)
    curve = conf.confidence_curve(
        model, dmap, grid, args.threshold,
        n_nodes=config.qmc_nodes, replicates=config.qmc_replicates, seed=config.seed + 1,
    )
    path = Path(args.outdir) / "curve.csv"
    conf.write_curve_csv(path, curve)
    print(f"wrote {len(curve)} curve points to {path}")
    return 0


def cmd_heatmap(args) -> int:
    config, model, dmap = _load_model_and_map(args)
    r_grid = pipeline.default_rate_grid(config)
    h_grid = pipeline.default_threshold_grid(config, model)
    matrix = conf.confidence_heatmap(
        model, dmap, r_grid, h_grid,
        n_nodes=config.qmc_nodes, replicates=config.qmc_replicates, seed=config.seed + 1,
    )
    path = Path(args.outdir) / "heatmap.csv"
    conf.write_heatmap_csv(path, r_grid, h_grid, matrix)
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} heatmap to {path}")
    return 0


def cmd_min_rate(args) -> int:
    config, model, dmap = _load_model_and_map(args)
    rate = conf.min_rate_for_confidence(
        model, dmap, args.threshold, args.target, pipeline.default_rate_grid(config),
        n_nodes=config.qmc_nodes, replicates=config.qmc_replicates, seed=config.seed + 1,
    )
    print(json.dumps({"rate": rate}))
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(args.outdir)
    made = []

    cal_path = out / "calibration.json"
    if cal_path.exists():
        rep = json.loads(cal_path.read_text())
        fig, ax = plt.subplots()
        ax.loglog(rep["s_levels"], rep["s_norms"], "o-", label="truncation differences", base=2)
        ax.loglog(rep["d_levels"], rep["d_norms"], "s-", label="mesh differences", base=2)
        ax.loglog(rep["d_levels"], rep["bound_per_level"], "*--", label="tail bound", base=2)
        ax.set_xlabel("level dimension")
        ax.set_ylabel("rms difference")
        ax.legend()
        fig.savefig(out / "calibration.png", dpi=120, bbox_inches="tight")
        made.append("calibration.png")

    curve_path = out / "curve.csv"
    if curve_path.exists():
        data = np.genfromtxt(curve_path, delimiter=",", names=True)
        fig, ax = plt.subplots()
        ax.plot(data["r"], data["estimate"], "-o", ms=3)
        ax.set_xlabel("extraction rate [m^3/s]")
        ax.set_ylabel("confidence")
        ax.set_ylim(0, 1.02)
        fig.savefig(out / "curve.png", dpi=120, bbox_inches="tight")
        made.append("curve.png")

    hm_path = out / "heatmap.csv"
    if hm_path.exists():
        data = np.genfromtxt(hm_path, delimiter=",", names=True)
        rs = np.unique(data["r"])
        hs = np.unique(data["h"])
        grid = data["estimate"].reshape(len(rs), len(hs))
        fig, ax = plt.subplots()
        im = ax.pcolormesh(rs, hs, grid.T, vmin=0, vmax=1, shading="nearest")
        fig.colorbar(im, label="confidence")
        ax.set_xlabel("extraction rate [m^3/s]")
        ax.set_ylabel("pressure threshold [head]")
        fig.savefig(out / "heatmap.png", dpi=120, bbox_inches="tight")
        made.append("heatmap.png")

    if not made:
        print("nothing to plot: no calibration.json, curve.csv, or heatmap.csv in outdir", file=sys.stderr)
        return 1
    print("wrote " + ", ".join(made))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    out = Path(args.outdir)
    serve(out / "model.json", bind_address=args.bind, config_path=out / "config.json")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="darcygp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **extra):
        p = sub.add_parser(name)
        p.add_argument("--outdir", type=Path, default=Path("artifacts"))
        for argname, kwargs in extra.items():
            p.add_argument("--" + argname.replace("_", "-"), **kwargs)
        p.set_defaults(fn=fn)
        return p

    for name, fn in (("sample", cmd_sample), ("solve", cmd_solve), ("calibrate", cmd_calibrate), ("fit", cmd_fit)):
        _add_config_flags(add(name, fn))

    add("confidence", cmd_confidence, rate={"type": float, "required": True}, threshold={"type": float, "required": True})
    add("curve", cmd_curve, threshold={"type": float, "required": True})
    add("heatmap", cmd_heatmap)
    add("min-rate", cmd_min_rate, threshold={"type": float, "required": True}, target={"type": float, "default": 0.9})
    add("plot", cmd_plot)
    add("serve", cmd_serve, bind={"type": str, "default": "127.0.0.1:8000"})

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
