"""Command-line entry point: generate | train | simulate | certify.

Every command reads one YAML configuration, writes its artifacts under the
output directory together with a manifest listing paths and the config
hash, and exits 0 on success or nonzero with a one-line machine-parsable
``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .controllers import ControlConfig, NeuralDeepcController, make_linear_mode
from .errors import (ConfigError, DimensionError, NdeepcError, NumericalError,
                     RankDeficiencyError, TrainingError)
from .hankel import TrajectoryData, build_hankel
from .harness import compare_formulations, compute_metrics, run_closed_loop
from .mlp import (fit_cost, load_network, make_network, neural_data_matrix,
                  refit_output_layer, save_network, train_nls)
from .plant import PendulumSimulator
from .predictors import equivalence_certificate, prepare_context, residual_matrix
from .signals import multisine, reference

_ERROR_CATEGORIES = [
    (ConfigError, 2, "config"),
    (DimensionError, 3, "dimension"),
    (TrainingError, 4, "training"),
    (NumericalError, 5, "numerical"),
    (RankDeficiencyError, 6, "rank"),
]


def _write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig, artifacts: dict):
    doc = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "tool_version": __version__,
        "ts": cfg.plant.ts,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path


def _data_csv_write(path: Path, data: TrajectoryData):
    # trajectory alignment: row k holds u(k) and the output measured before it
    lines = ["k,u,y"]
    for k in range(data.samples):
        lines.append(f"{k},{float(data.u[0, k])!r},{float(data.y[0, k])!r}")
    path.write_text("\n".join(lines) + "\n")


def _data_csv_read(path: Path) -> TrajectoryData:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0] != "k,u,y":
        raise ConfigError(f"data file {path} must start with header 'k,u,y'")
    u, y = [], []
    for line in text[1:]:
        _, us, ys = line.split(",")
        u.append(float(us))
        y.append(float(ys))
    return TrajectoryData(u=np.asarray(u), y=np.asarray(y))


def generate_data(cfg: ExperimentConfig) -> TrajectoryData:
    """Excite the plant and return the trajectory-aligned record."""
    u_exc = multisine(cfg.excitation)
    total = cfg.data_samples
    u_data = np.resize(u_exc, total)  # periodic continuation past one record
    sim = PendulumSimulator(cfg.plant.params(), x0=cfg.plant.x0,
                            noise_std=cfg.plant.noise_std, seed=cfg.seed)
    y = np.empty(total)
    y[0] = sim.output()
    for k in range(total - 1):
        y[k + 1] = sim.step(u_data[k])
    return TrajectoryData(u=u_data, y=y)


def cmd_generate(cfg: ExperimentConfig, out_dir: Path) -> dict:
    data = generate_data(cfg)
    path = out_dir / "data.csv"
    _data_csv_write(path, data)
    print(f"wrote {data.samples} samples to {path}")
    print(f"input range [{data.u.min():.6g}, {data.u.max():.6g}], "
          f"output range [{data.y.min():.6g}, {data.y.max():.6g}]")
    return {"data": path}


def _train_pipeline(cfg: ExperimentConfig, data: TrajectoryData):
    hankel = build_hankel(data, cfg.structure.t_ini, cfg.structure.horizon)
    net = make_network(hankel.regressor_dim, cfg.network.hidden,
                       hankel.p * hankel.horizon, activation=cfg.network.activation,
                       seed=cfg.training.seed)
    h = hankel.regressor
    net, history = train_nls(net, h, hankel.y_future, cfg.training)
    cost_training = fit_cost(net, h, hankel.y_future)
    ndm = neural_data_matrix(net, h)
    net, w_out, b_out = refit_output_layer(net, ndm.phi, hankel.y_future)
    cost_refit = fit_cost(net, h, hankel.y_future)
    ctx = prepare_context(net, hankel)
    return hankel, net, history, cost_training, cost_refit, ctx, w_out, b_out


def _certificate_doc(ctx, w_out, b_out):
    resid = residual_matrix(ctx, w_out, b_out)
    try:
        report = equivalence_certificate(ctx, resid)
        doc = report.to_dict()
    except RankDeficiencyError as exc:
        doc = {
            "certificate": None,
            "equivalent": None,
            "rank_deficient": True,
            "detail": str(exc),
            "residual_frobenius": resid.frobenius,
            "min_singular_value": ctx.min_singular_value,
        }
    return doc


def cmd_train(cfg: ExperimentConfig, out_dir: Path, data_path: Path) -> dict:
    data = _data_csv_read(data_path)
    hankel, net, history, cost_training, cost_refit, ctx, w_out, b_out = \
        _train_pipeline(cfg, data)

    weights_path = out_dir / "weights.json"
    save_network(net, weights_path, meta={
        "m": hankel.m, "p": hankel.p, "t_ini": hankel.t_ini,
        "horizon": hankel.horizon, "config_hash": cfg.config_hash(),
    })
    loss_path = out_dir / "training_loss.csv"
    loss_path.write_text("epoch,loss\n" + "\n".join(
        f"{epoch},{loss!r}" for epoch, loss in history) + "\n")

    cert_doc = _certificate_doc(ctx, w_out, b_out)
    cert_doc["config_hash"] = cfg.config_hash()
    cert_path = out_dir / "certificate.json"
    cert_path.write_text(json.dumps(cert_doc, indent=1) + "\n")

    print(f"feature data matrix: {ctx.feature_dim}x{ctx.columns} "
          f"(min singular value of one-padded form {ctx.min_singular_value:.6g})")
    print(f"fit cost after training {cost_training:.6g}, after refit {cost_refit:.6g}")
    print(f"certificate: {cert_doc.get('certificate')}")
    return {"weights": weights_path, "training_loss": loss_path, "certificate": cert_path}


def cmd_certify(cfg: ExperimentConfig, out_dir: Path, data_path: Path,
                weights_path: Path) -> dict:
    data = _data_csv_read(data_path)
    hankel = build_hankel(data, cfg.structure.t_ini, cfg.structure.horizon)
    net, meta = load_network(weights_path)
    ctx = prepare_context(net, hankel)
    doc = _certificate_doc(ctx, net.output.weight, net.output.bias)
    doc["config_hash"] = cfg.config_hash()
    doc["weights_config_hash"] = meta.get("config_hash")
    cert_path = out_dir / "certificate.json"
    cert_path.write_text(json.dumps(doc, indent=1) + "\n")
    print(json.dumps(doc, indent=1))
    return {"certificate": cert_path}


def _experiment_setup(cfg: ExperimentConfig, data_path: Path, weights_path: Path | None):
    data = _data_csv_read(data_path)
    hankel = build_hankel(data, cfg.structure.t_ini, cfg.structure.horizon)
    if cfg.control.formulation == "linear":
        ctx = make_linear_mode(hankel)
    else:
        if weights_path is None:
            raise ConfigError("simulate requires --weights unless formulation is 'linear'")
        net, meta = load_network(weights_path)
        for key, expect in (("t_ini", cfg.structure.t_ini), ("horizon", cfg.structure.horizon)):
            if meta.get(key) not in (None, expect):
                raise ConfigError(f"weights were trained with {key}={meta.get(key)}, "
                                  f"config says {expect}")
        ctx = prepare_context(net, hankel)

    t_sim, n = cfg.simulation.t_sim, cfg.structure.horizon
    ref_spec = dataclasses.replace(cfg.reference, horizon=t_sim + n, ts=cfg.plant.ts)
    r = reference(ref_spec)
    params = cfg.plant.params()
    u_ref = np.array([params.equilibrium_torque(v) for v in r])
    return ctx, r, u_ref


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, data_path: Path,
                 weights_path: Path | None) -> dict:
    ctx, ref_seq, u_ref = _experiment_setup(cfg, data_path, weights_path)
    plant_cfg = cfg.plant

    def plant_factory():
        return PendulumSimulator(plant_cfg.params(), x0=plant_cfg.x0,
                                 noise_std=plant_cfg.noise_std, seed=cfg.seed + 1)

    meta = {"config_hash": cfg.config_hash(), "ts": plant_cfg.ts}
    artifacts = {}
    if cfg.control.formulation == "compare":
        report = compare_formulations(ctx, cfg.control, plant_factory, ref_seq,
                                      cfg.simulation.t_sim, x0=plant_cfg.x0,
                                      u_ref=u_ref, metadata=meta)
        for name, log in report.logs.items():
            log_path = out_dir / f"closed_loop_{name}.csv"
            log.to_csv(log_path)
            metrics_path = out_dir / f"metrics_{name}.json"
            report.metrics[name].to_json(metrics_path, extra={
                "formulation": name, "config_hash": cfg.config_hash()})
            artifacts[f"log_{name}"] = log_path
            artifacts[f"metrics_{name}"] = metrics_path
        table_path = out_dir / "compare.csv"
        report.to_csv(table_path)
        artifacts["compare"] = table_path
        print(report.table())
    else:
        controller = NeuralDeepcController(ctx, cfg.control)
        log = run_closed_loop(plant_factory(), controller, ref_seq,
                              cfg.simulation.t_sim, x0=plant_cfg.x0,
                              u_ref=u_ref, metadata=meta)
        name = cfg.control.formulation
        log_path = out_dir / f"closed_loop_{name}.csv"
        log.to_csv(log_path)
        metrics = compute_metrics(log)
        metrics_path = out_dir / f"metrics_{name}.json"
        metrics.to_json(metrics_path, extra={"formulation": name,
                                             "config_hash": cfg.config_hash()})
        artifacts[f"log_{name}"] = log_path
        artifacts[f"metrics_{name}"] = metrics_path
        print(f"J_ISE={metrics.j_ise:.6g} J_IAE={metrics.j_iae:.6g} "
              f"J_u={metrics.j_u:.6g} J_track={metrics.j_track:.6g} "
              f"mean_solve={metrics.mean_solve_s:.4g}s")
    return artifacts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ndeepc",
                                     description="neural data-enabled predictive control")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "simulate", "certify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--out", default="out", help="output directory")
        if name in ("train", "simulate", "certify"):
            p.add_argument("--data", help="trajectory CSV (defaults to <out>/data.csv)")
        if name in ("simulate", "certify"):
            p.add_argument("--weights", help="weight file (defaults to <out>/weights.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        data_path = Path(args.data) if getattr(args, "data", None) else out_dir / "data.csv"
        weights_arg = getattr(args, "weights", None)
        weights_path = Path(weights_arg) if weights_arg else out_dir / "weights.json"

        if args.command == "generate":
            artifacts = cmd_generate(cfg, out_dir)
        elif args.command == "train":
            _require_file(data_path, "data")
            artifacts = cmd_train(cfg, out_dir, data_path)
        elif args.command == "certify":
            _require_file(data_path, "data")
            _require_file(weights_path, "weights")
            artifacts = cmd_certify(cfg, out_dir, data_path, weights_path)
        else:
            _require_file(data_path, "data")
            if cfg.control.formulation != "linear":
                _require_file(weights_path, "weights")
                artifacts = cmd_simulate(cfg, out_dir, data_path, weights_path)
            else:
                artifacts = cmd_simulate(cfg, out_dir, data_path, None)
        _write_manifest(out_dir, args.command, cfg, artifacts)
        return 0
    except NdeepcError as exc:
        for klass, code, category in _ERROR_CATEGORIES:
            if isinstance(exc, klass):
                print(f"error: {category}: {exc}", file=sys.stderr)
                return code
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 7


def _require_file(path: Path, kind: str):
    if not path.is_file():
        raise ConfigError(f"{kind} file not found: {path}")


if __name__ == "__main__":
    sys.exit(main())
