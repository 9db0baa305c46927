"""Read-only HTTP API over a fitted surrogate model.

All endpoints are GET and operate on one immutable loaded model, so the
service is safe under concurrent requests. Malformed parameters yield 400,
structurally valid but out-of-domain values yield 422.
"""

from __future__ import annotations

import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import confidence as conf
from . import fastgp, pipeline

__all__ = ["ModelBundle", "load_bundle", "create_app", "serve"]

CONFIDENCE_NODES = 4096
CONFIDENCE_REPLICATES = 8
SWEEP_NODES = 1024
SWEEP_REPLICATES = 4
MAX_GRID = 257


class OutOfDomain(ValueError):
    pass


class ModelBundle:
    """A loaded model plus the domain metadata the endpoints need."""

    def __init__(self, model: fastgp.FastGpModel, config: pipeline.RunConfig, config_hash: str):
        self.model = model
        self.config = config
        self.config_hash = config_hash
        self.domain_map = pipeline.domain_map_for(config)
        self.w = config.injection_rate
        lo, hi = model.diagnostics.get(
            "head_range", [float(np.min(model.y)), float(np.max(model.y))]
        )
        self.head_range = (float(lo), float(hi))
        self.seed = config.seed + 1


def load_bundle(model_path: str | Path, config_path: str | Path | None = None) -> ModelBundle:
    model_path = Path(model_path)
    import json

    doc = json.loads(model_path.read_text())
    model = fastgp.load_model(model_path)
    if config_path is None:
        config_path = model_path.with_name("config.json")
    config = pipeline.load_config(config_path)
    stored = doc.get("config_hash") or pipeline.config_hash(config)
    current = pipeline.config_hash(config)
    if stored != current:
        import warnings

        warnings.warn(f"model was fitted under config {stored}, loaded config hashes to {current}", RuntimeWarning)
    return ModelBundle(model, config, stored)


def _check_rate(bundle: ModelBundle, r: float) -> float:
    if not math.isfinite(r) or not 0.0 <= r <= bundle.w:
        raise OutOfDomain(f"extraction rate r={r} outside [0, {bundle.w}]")
    return float(r)


def _check_threshold(h: float) -> float:
    if not math.isfinite(h):
        raise OutOfDomain("threshold h must be finite")
    return float(h)


def _check_grid_size(points: int) -> int:
    if not 1 <= points <= MAX_GRID:
        raise OutOfDomain(f"grid size {points} outside [1, {MAX_GRID}]")
    return int(points)


def create_app(bundle: ModelBundle, cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="pressure-surrogate", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request: " + str(exc.errors()[:2])})

    @app.exception_handler(OutOfDomain)
    async def out_of_domain(request: Request, exc: OutOfDomain):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @lru_cache(maxsize=16)
    def cached_curve(h: float, points: int, nodes: int, replicates: int):
        grid = np.linspace(0.0, bundle.w, points)
        curve = conf.confidence_curve(
            bundle.model, bundle.domain_map, grid, h,
            n_nodes=nodes, replicates=replicates, seed=bundle.seed,
        )
        return [
            {"r": c.rate, "h": c.threshold, "estimate": c.estimate, "stderr": c.std_error}
            for c in curve
        ]

    @lru_cache(maxsize=4)
    def cached_heatmap(rs: int, hs: int, nodes: int, replicates: int):
        r_grid = np.linspace(0.0, bundle.w, rs)
        lo, hi = bundle.head_range
        h_grid = np.linspace(lo, hi, hs)
        matrix = conf.confidence_heatmap(
            bundle.model, bundle.domain_map, r_grid, h_grid,
            n_nodes=nodes, replicates=replicates, seed=bundle.seed,
        )
        return {"r_grid": r_grid.tolist(), "h_grid": h_grid.tolist(), "values": matrix.tolist()}

    @app.get("/health")
    async def health():
        return {"status": "ok", "config_hash": bundle.config_hash}

    @app.get("/confidence")
    async def confidence(r: float, h: float, nodes: int = CONFIDENCE_NODES, replicates: int = CONFIDENCE_REPLICATES):
        r = _check_rate(bundle, r)
        h = _check_threshold(h)
        if nodes < 1 or (nodes & (nodes - 1)) != 0:
            raise OutOfDomain(f"nodes={nodes} must be a power of two")
        res = conf.expected_confidence(
            bundle.model, bundle.domain_map, r, h,
            n_nodes=nodes, replicates=replicates, seed=bundle.seed,
        )
        return {"r": res.rate, "h": res.threshold, "estimate": res.estimate, "stderr": res.std_error}

    @app.get("/curve")
    async def curve(h: float, points: int = 65, nodes: int = SWEEP_NODES, replicates: int = SWEEP_REPLICATES):
        h = _check_threshold(h)
        points = _check_grid_size(points)
        return cached_curve(h, points, nodes, replicates)

    @app.get("/heatmap")
    async def heatmap(rs: int = 33, hs: int = 33, nodes: int = SWEEP_NODES, replicates: int = SWEEP_REPLICATES):
        return cached_heatmap(_check_grid_size(rs), _check_grid_size(hs), nodes, replicates)

    @app.get("/min-rate")
    async def min_rate(h: float, target: float = 0.9, points: int = 65, nodes: int = SWEEP_NODES, replicates: int = SWEEP_REPLICATES):
        h = _check_threshold(h)
        if not 0.0 < target < 1.0:
            raise OutOfDomain(f"target={target} must lie strictly inside (0, 1)")
        for row in cached_curve(h, _check_grid_size(points), nodes, replicates):
            if row["estimate"] >= target:
                return {"rate": row["r"]}
        return {"rate": None}

    @app.get("/model-info")
    async def model_info():
        m = bundle.model
        return {
            "config_hash": bundle.config_hash,
            "n": m.n,
            "s": bundle.config.s,
            "d": bundle.config.d,
            "zeta": m.zeta,
            "w": bundle.w,
            "head_range": list(bundle.head_range),
            "fit": {k: v for k, v in m.diagnostics.items() if k != "head_range"},
        }

    return app


def serve(model_path: str | Path, bind_address: str = "127.0.0.1:8000", config_path: str | Path | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    bundle = load_bundle(model_path, config_path)
    host, _, port = bind_address.partition(":")
    uvicorn.run(create_app(bundle), host=host or "127.0.0.1", port=int(port or 8000), log_level="info")
