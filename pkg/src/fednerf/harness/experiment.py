"""End-to-end experiment runs in simulation, server and client modes."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import seeding
from ..channel import smooth_ratio_series
from ..errors import ContractError
from ..fl import (FederatedClient, GlobalModel, Registry, ServerState, SimTransport, TcpTransport,
                  TrainSettings, client_session, run_round)
from ..fl.server import RoundRecord
from ..nerf import (ModelParams, OptimizerState, PosedImage, chain_dims, init_params, load_params,
                    local_train, psnr, ray_pool, render_image, save_params)
from ..selector import SelectionConfig
from .config import ExperimentConfig
from .dataset import load_dataset, partition_views, write_ppm
from .scene import SceneSpec, generate_scene

log = logging.getLogger(__name__)

CSV_HEADER = ["round", "selected_ids", "mean_psnr", "rate_ratio", "rate_ratio_smoothed",
              "broadcast_s", "train_s", "collect_s"]


@dataclass
class RunResult:
    records: list
    final_params: ModelParams
    baseline_psnr: float
    out_dir: Path | None = None
    history: list = field(default_factory=list)

    @property
    def final_psnr(self) -> float:
        return self.records[-1].mean_psnr if self.records else self.baseline_psnr


def initial_params(cfg: ExperimentConfig) -> ModelParams:
    return init_params(chain_dims(cfg.layer_widths), seeding.stream(cfg.seed, seeding.INIT))


def load_or_generate_dataset(cfg: ExperimentConfig) -> list[PosedImage]:
    path = cfg.resolve(cfg.dataset)
    if path is None:
        path = cfg.resolve(cfg.output_dir) / "dataset"
        if not (path / "transforms.json").exists():
            spec = SceneSpec(n_train_views_total=cfg.n_clients * cfg.views_per_client,
                             n_test_views=cfg.n_test_views, width=cfg.image_size, height=cfg.image_size)
            generate_scene(spec, path, cfg.seed)
            log.info("generated procedural scene in %s", path)
    return load_dataset(path)


def split(cfg: ExperimentConfig, images: Sequence[PosedImage]):
    client_views, test_ids = partition_views(len(images), cfg.n_clients, cfg.views_per_client)
    clients = {i + 1: [images[v] for v in views] for i, views in enumerate(client_views)}
    return clients, [images[v] for v in test_ids], test_ids


def train_settings(cfg: ExperimentConfig) -> TrainSettings:
    return TrainSettings(
        layer_dims=chain_dims(cfg.layer_widths),
        local_iters=cfg.local_iters,
        rays_per_batch=cfg.optimizer.rays_per_batch,
        render=cfg.render,
        encoding=cfg.encoding,
        optimizer=cfg.optimizer.adam_kwargs(),
        seed=cfg.seed,
    )


def build_client(cfg: ExperimentConfig, device_id: int, images) -> FederatedClient:
    link = next(p for p in cfg.links if p.device_id == device_id)
    return FederatedClient(device_id, images, link, train_settings(cfg))


def build_server(cfg: ExperimentConfig, test_views) -> ServerState:
    return ServerState(
        links=sorted(cfg.links, key=lambda p: p.device_id),
        selection=SelectionConfig(cfg.select_k, cfg.q, cfg.rate_mode),
        seed=cfg.seed,
        global_model=GlobalModel(0, initial_params(cfg)),
        test_views=test_views,
        render=cfg.render,
        encoding=cfg.encoding,
        keep_history=cfg.save_round_params,
    )


def metrics_csv(records: Sequence[RoundRecord], window: int) -> str:
    smoothed = smooth_ratio_series([r.rate_ratio for r in records], window)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r, s in zip(records, smoothed):
        w.writerow([r.round, ";".join(map(str, r.selected)), repr(r.mean_psnr), repr(r.rate_ratio), repr(s),
                    repr(r.broadcast_seconds), repr(r.train_seconds), repr(r.collect_seconds)])
    return buf.getvalue()


def _drive(cfg: ExperimentConfig, state: ServerState, transport, out: Path | None, test_ids) -> RunResult:
    baseline = state.evaluate(state.global_model.params)
    log.info("baseline test PSNR %.3f dB", baseline)
    renders = out / "renders" if out else None
    try:
        for _ in range(cfg.rounds):
            rec = run_round(state, transport)
            log.info("round %d selected %s psnr %.3f ratio %.4f", rec.round, rec.selected,
                     rec.mean_psnr, rec.rate_ratio)
            if renders is not None and (rec.round % cfg.render_every == 0 or rec.round == cfg.rounds):
                renders.mkdir(parents=True, exist_ok=True)
                for vid, view in zip(test_ids, state.test_views):
                    img = render_image(state.global_model.params, view.pose, state.render, state.encoding)
                    write_ppm(renders / f"round_{rec.round:04d}_view_{vid:03d}.ppm", img.pixels)
    finally:
        transport.finish()
    result = RunResult(state.records, state.global_model.params, baseline, out, state.history)
    if out is not None:
        write_outputs(cfg, result, out)
    return result


def write_outputs(cfg: ExperimentConfig, result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(result.records, cfg.smoothing_window))
    save_params(result.final_params, out / "model.bin")
    summary = {"baseline_psnr": result.baseline_psnr, "final_psnr": result.final_psnr,
               "rounds": len(result.records)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    cfg.save(out / "config.json")
    if result.history:
        hist = out / "round_params"
        hist.mkdir(exist_ok=True)
        for rnd, params in enumerate(result.history, start=1):
            save_params(params, hist / f"round_{rnd:04d}.bin")


def run_sim(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    images = load_or_generate_dataset(cfg)
    clients, test_views, test_ids = split(cfg, images)
    transport = SimTransport([build_client(cfg, d, imgs) for d, imgs in clients.items()], cfg.sim_iter_seconds)
    state = build_server(cfg, test_views)
    out = cfg.resolve(cfg.output_dir) if write else None
    return _drive(cfg, state, transport, out, test_ids)


def run_server(cfg: ExperimentConfig, registry: Registry | None = None) -> RunResult:
    registry = registry or Registry.load(cfg.resolve(cfg.registry))
    images = load_or_generate_dataset(cfg)
    _, test_views, test_ids = split(cfg, images)
    state = build_server(cfg, test_views)
    ids = [p.device_id for p in cfg.links]
    transport = TcpTransport(registry, ids, phase_timeout=cfg.phase_timeout_s)
    try:
        transport.wait_for_clients()
    except BaseException:
        transport.close()
        raise
    return _drive(cfg, state, transport, cfg.resolve(cfg.output_dir), test_ids)


def run_client(cfg: ExperimentConfig, device_id: int, registry: Registry | None = None) -> int:
    registry = registry or Registry.load(cfg.resolve(cfg.registry))
    if device_id not in range(1, cfg.n_clients + 1):
        raise ContractError(f"device id {device_id} is not configured (1..{cfg.n_clients})", "device_id")
    images = load_or_generate_dataset(cfg)
    clients, _, _ = split(cfg, images)
    return client_session(build_client(cfg, device_id, clients[device_id]), registry)


def train_centralized(cfg: ExperimentConfig, iters: int, images: Sequence[PosedImage] | None = None):
    """Train one model on every client's views pooled together.

    Returns ``(params, test_psnr)``; the reference point for federated runs.
    """
    images = images if images is not None else load_or_generate_dataset(cfg)
    clients, test_views, _ = split(cfg, images)
    pool = ray_pool([img for d in sorted(clients) for img in clients[d]])
    params = initial_params(cfg)
    opt = OptimizerState.fresh(params.size, **cfg.optimizer.adam_kwargs())
    rng = seeding.stream(cfg.seed, seeding.TRAIN, 0, 0)
    params, _, _ = local_train(params, pool, iters, opt, cfg.render, cfg.encoding, rng,
                               rays_per_batch=cfg.optimizer.rays_per_batch)
    server = build_server(cfg, test_views)
    return params, server.evaluate(params)


def evaluate(model_path, dataset_dir, view_ids: Sequence[int], cfg: ExperimentConfig | None = None) -> float:
    """Mean PSNR of a saved model over the listed dataset views."""
    params = load_params(model_path)
    cfg = cfg or ExperimentConfig()
    expected = chain_dims(cfg.layer_widths)
    if params.layer_dims != expected:
        raise ContractError(f"model dims {params.layer_dims} do not match config {expected}", "model")
    images = load_dataset(dataset_dir)
    if not view_ids:
        raise ContractError("no views requested", "views")
    bad = [v for v in view_ids if not 0 <= v < len(images)]
    if bad:
        raise ContractError(f"views {bad} not in dataset of {len(images)} views", "views")
    scores = [psnr(render_image(params, images[v].pose, cfg.render, cfg.encoding), images[v]) for v in view_ids]
    return float(np.mean(scores))


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def ratio_series_csv(rows: Sequence[dict], window: int) -> str:
    raw = [float(r["rate_ratio"]) for r in rows]
    smoothed = smooth_ratio_series(raw, window)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "rate_ratio", "rate_ratio_smoothed"])
    for r, v, s in zip(rows, raw, smoothed):
        w.writerow([r["round"], repr(v), repr(s)])
    return buf.getvalue()
