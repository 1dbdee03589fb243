"""Persistence of posterior draws, run manifests and summaries."""

import csv
import hashlib
import json
import re

import numpy as np

from .errors import ParseError
from .market_data import N_BINS
from .mcmc import PosteriorDraws, Variant

_BRACKET = re.compile(r"^(beta|alpha|pi)\[(.*)\]$")


def write_draws(draws, path):
    cols = draws.columns()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(name for name, _ in cols) + "\n")
        data = np.column_stack([np.asarray(v, float) for _, v in cols])
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_draws(path, variant):
    variant = Variant(variant)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    scal = {}
    beta_cols, alpha_cols, pi_cols, labels = [], [], [], []
    for i, name in enumerate(header):
        m = _BRACKET.match(name)
        if not m:
            scal[name] = data[:, i]
        elif m.group(1) == "beta":
            beta_cols.append(i)
        elif m.group(1) == "alpha":
            alpha_cols.append(i)
            labels.append(m.group(2))
        else:
            pi_cols.append(i)
    n = data.shape[0]
    for need in ("iteration", "mu_h", "phi", "sigma_x2"):
        if need not in scal:
            raise ParseError(f"draws file lacks column {need!r}", line=1)
    beta = data[:, beta_cols] if beta_cols else np.zeros((n, N_BINS))
    return PosteriorDraws(
        variant=variant,
        iteration=scal["iteration"],
        loglik=scal.get("loglik", np.full(n, np.nan)),
        mu_h=scal["mu_h"],
        phi=scal["phi"],
        sigma_x2=scal["sigma_x2"],
        beta=beta,
        alpha=data[:, alpha_cols],
        pi=data[:, pi_cols].astype(np.int8),
        gamma=scal.get("gamma", np.full(n, np.nan)),
        sigma_alpha2=scal.get("sigma_alpha2", np.full(n, np.nan)),
        column_labels=tuple(labels),
    )


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, config, inputs):
    """Record the run configuration, its hash and the hashes of input files."""
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "inputs": {name: {"path": str(p), "sha256": file_sha256(p)} for name, p in inputs.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    return manifest


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
