"""Training loop and run reports."""

import csv
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from . import model as M
from .data import batches
from .optimizer import Nadam
from .tensor import RNG_ALGORITHM, Rng

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
SHUFFLE_STREAM = 7
METRIC_FIELDS = ("epoch", "train_loss", "train_error", "test_error")


@dataclass
class RunReport:
    config: dict
    per_epoch: list = field(default_factory=list)
    final_test_error: float | None = None
    mean_k: float | None = None
    k_profile: list | None = None
    wall_time: float = 0.0
    seed: int = 0
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self):
        return {
            "format": "gresnet-run-report",
            "format_version": self.format_version,
            "seed": self.seed,
            "config": self.config,
            "per_epoch": self.per_epoch,
            "final_test_error": self.final_test_error,
            "mean_k": self.mean_k,
            "k_profile": self.k_profile,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "gresnet-run-report":
            raise ValueError("not a gresnet run report")
        if d.get("format_version") != REPORT_FORMAT_VERSION:
            raise ValueError(f"unsupported report version {d.get('format_version')}")
        return cls(
            config=d["config"],
            per_epoch=d["per_epoch"],
            final_test_error=d["final_test_error"],
            mean_k=d["mean_k"],
            k_profile=d["k_profile"],
            wall_time=d["wall_time"],
            seed=d["seed"],
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def resolved_config(net_config, optimizer, epochs, batch_size):
    """Everything that determines a run, with no default left implicit."""
    return {
        "network": net_config.to_dict(),
        "optimizer": optimizer.hyperparameters(),
        "epochs": epochs,
        "batch_size": batch_size,
        "init_scheme": M.INIT_SCHEME,
        "first_layer": M.FIRST_LAYER,
        "gate": "relu",
        "rng": RNG_ALGORITHM,
        "shuffle_stream": SHUFFLE_STREAM,
        "train_error": "running, train-mode BN, over the epoch",
    }


def error_rate(net, ds):
    return 100.0 - M.accuracy(net, ds.images, ds.labels)


def train_epoch(net, opt, ds, batch_size, rng, gates=None):
    """One pass over ``ds``. Returns ``(mean loss, running train error %)``."""
    params = M.parameters(net)
    gates = M.gate_names(net) if gates is None else gates
    total_loss = 0.0
    wrong = 0
    seen = 0
    for xb, yb in batches(ds, batch_size, rng, shuffle=True):
        if len(yb) < 2:
            # train-mode BN is undefined for a single sample
            log.warning("skipping trailing batch of size %d", len(yb))
            continue
        loss, logits, grads = M.loss_and_grads(net, xb, yb, L.TRAIN)
        opt.step(params, grads, gates)
        total_loss += loss * len(yb)
        wrong += int(np.sum(np.argmax(logits, axis=1) != yb))
        seen += len(yb)
    return total_loss / seen, 100.0 * wrong / seen


def train(net_config, train_ds, test_ds, *, epochs=100, batch_size=128, optimizer=None,
          metrics_path=None, on_epoch=None):
    """Build a network from ``net_config`` and train it. Returns ``(net, report, optimizer)``.

    If ``metrics_path`` is given, one CSV row is appended after every epoch.
    """
    optimizer = optimizer if optimizer is not None else Nadam()
    if optimizer.k_decay > 0 and net_config.family != "gresnet":
        raise ValueError(f"k decay needs gate parameters, which {net_config.family} lacks")
    start = time.perf_counter()
    net = M.build(net_config)
    rng = Rng(net_config.seed, SHUFFLE_STREAM)
    report = RunReport(
        config=resolved_config(net_config, optimizer, epochs, batch_size), seed=net_config.seed
    )

    if metrics_path is not None:
        with open(metrics_path, "w", newline="") as f:
            csv.writer(f).writerow(METRIC_FIELDS)

    for epoch in range(1, epochs + 1):
        loss, train_err = train_epoch(net, optimizer, train_ds, batch_size, rng)
        test_err = error_rate(net, test_ds)
        row = {"epoch": epoch, "train_loss": loss, "train_error": train_err, "test_error": test_err}
        report.per_epoch.append(row)
        if metrics_path is not None:
            with open(metrics_path, "a", newline="") as f:
                csv.writer(f).writerow([row[k] for k in METRIC_FIELDS])
        log.info("epoch %d loss %.4f train %.2f%% test %.2f%%", epoch, loss, train_err, test_err)
        if on_epoch is not None:
            on_epoch(row, net)

    if report.per_epoch:
        report.final_test_error = report.per_epoch[-1]["test_error"]
    if net_config.family == "gresnet" and net.num_blocks:
        report.mean_k = M.mean_k(net)
        report.k_profile = [list(p) for p in M.k_profile(net)]
    report.wall_time = time.perf_counter() - start
    return net, report, optimizer
