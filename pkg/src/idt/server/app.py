"""Local HTTP service for the tree explorer.

Wraps a Session: serves the latest illuminated tree, feature visualizations
and example images, flow and accuracy metrics, and accepts exclusion/rebuild
requests. Rebuilds are synchronous and mutually exclusive; readers always
see the last completed history entry. The UI bundle, when built, is served
from the same process at /.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles

from .. import model as model_mod
from ..errors import BadFeatureName, OutOfRange
from ..features import FeatureTable, feature_index, parse_feature_name
from ..featviz import VizCache, VizParams
from ..illuminate import IlluminatedTree, Session
from ..pipeline import load_config, tree_params_from_config, viz_params_from_config
from .schemas import (
    HistoryEntryModel,
    MetricsModel,
    NodeExamplesResponse,
    RebuildRequest,
    TreeResponse,
)


class ApiSession:
    """A Session plus the serving state: asset root and the rebuild lock."""

    def __init__(self, session: Session | None, asset_root: Path | None = None):
        self.session = session
        self.asset_root = asset_root
        self.rebuild_lock = threading.Lock()
        self.on_demand_viz = True
        self.fit_hook = None  # test seam: called inside a rebuild while the lock is held

    @property
    def ready(self) -> bool:
        return self.session is not None


def load_api_session(session_dir) -> ApiSession:
    """Build an ApiSession from a pipeline output directory."""
    session_dir = Path(session_dir)
    config = load_config(session_dir / "config.resolved.json")
    model = model_mod.load_checkpoint(session_dir / "checkpoint")
    table = FeatureTable.load(session_dir / "features.npz")
    manifest_path = session_dir / "cells" / "manifest.json"
    manifest = None
    if manifest_path.exists():
        from ..cellcrop import DatasetManifest

        manifest = DatasetManifest.load(manifest_path)
    cache = VizCache(session_dir / "assets" / "features")
    baseline = None
    itree_path = session_dir / "itree.json"
    if itree_path.exists():
        baseline = IlluminatedTree.load(itree_path)
    session = Session(
        model,
        table,
        tree_params_from_config(config["tree"], table),
        viz_params_from_config({**config["viz"], "seed": config["seed"]}),
        manifest=manifest,
        viz_cache=cache,
        baseline=baseline,
    )
    return ApiSession(session, asset_root=session_dir)


def create_app(api: ApiSession, ui_dir=None) -> FastAPI:
    app = FastAPI(title="illuminated-tree explorer", version="0.1.0")

    def session() -> Session:
        if not api.ready:
            raise HTTPException(status_code=503, detail="session still initializing")
        return api.session

    def tree_response() -> TreeResponse:
        s = session()
        return TreeResponse(
            history_index=len(s.history) - 1, tree=s.latest.to_dict()
        )

    @app.get("/api/tree", response_model=TreeResponse)
    def get_tree():
        return tree_response()

    @app.get("/api/metrics", response_model=MetricsModel)
    def get_metrics():
        return MetricsModel(**session().latest.metrics)

    @app.get("/api/history", response_model=list[HistoryEntryModel])
    def get_history():
        return [
            HistoryEntryModel(index=i, excluded=entry.excluded_names, metrics=entry.itree.metrics)
            for i, entry in enumerate(session().history)
        ]

    @app.post("/api/rebuild", response_model=TreeResponse, responses={409: {"description": "rebuild in flight"}})
    def rebuild(req: RebuildRequest):
        s = session()
        try:
            for name in req.excluded:
                feature_index(parse_feature_name(name), s.table.layer_shape)
        except (BadFeatureName, OutOfRange) as e:
            raise HTTPException(status_code=400, detail=str(e))
        if not api.rebuild_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a rebuild is already in flight")
        try:
            if api.fit_hook is not None:
                api.fit_hook()
            s.rebuild_with_exclusions(req.excluded, max_depth=req.max_depth)
        finally:
            api.rebuild_lock.release()
        return tree_response()

    @app.get("/api/feature/{name}/viz.png")
    def feature_viz(name: str):
        s = session()
        try:
            fid = parse_feature_name(name)
            feature_index(fid, s.table.layer_shape)
        except BadFeatureName as e:
            raise HTTPException(status_code=400, detail=str(e))
        except OutOfRange as e:
            raise HTTPException(status_code=404, detail=str(e))
        layer = s.table.layer_name
        cache: VizCache = s.viz_cache
        try:
            fi = cache.get(layer, fid.channel)
        except KeyError:
            if not api.on_demand_viz:
                raise HTTPException(status_code=404, detail=f"channel {fid.channel} not visualized")
            fi = cache.get_or_create(s.model, layer, fid.channel, s.viz_params)
        if cache.directory is not None:
            png = cache.directory / f"{layer}_{fid.channel}.png"
            if not png.exists():
                cache.save_png(fi)
            return FileResponse(png, media_type="image/png")
        import io

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(fi.to_uint8()).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/api/node/{node_id}/examples", response_model=NodeExamplesResponse)
    def node_examples(node_id: int, k: int = 9):
        s = session()
        tree = s.latest.tree
        if not (0 <= node_id < len(tree.nodes)):
            raise HTTPException(status_code=404, detail=f"no node {node_id}")
        from ..illuminate import routed_rows

        test = s.table.subset("test")
        example_table = test if len(test) else s.table
        visits = routed_rows(tree, example_table.X)
        rows = visits[node_id][:k]
        urls = [f"/api/image/{example_table.paths[i]}" for i in rows]
        return NodeExamplesResponse(node_id=node_id, examples=urls)

    @app.get("/api/image/{rel_path:path}")
    def image(rel_path: str):
        s = session()
        if s.manifest is None:
            raise HTTPException(status_code=404, detail="no image root configured")
        root = Path(s.manifest.root).resolve()
        target = (root / rel_path).resolve()
        if root not in target.parents and target != root:
            raise HTTPException(status_code=404, detail="image outside dataset root")
        if not target.is_file():
            raise HTTPException(status_code=404, detail=f"no image {rel_path}")
        return FileResponse(target)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def default_ui_dir() -> Path | None:
    """frontend/dist relative to the repository root, when built."""
    candidate = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None
