"""On-disk formats: CSV matrices, dataset manifests, trace dumps, record streams.

Matrices are header-less CSV with floats printed at 17 significant digits
(lossless float64 round-trip).  A dataset manifest is a JSON object with the
dimensions and relative paths of the block files.  Traces and report streams
are JSON lines, one record per line, so long sweeps can append and resume.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict

import numpy as np

from .asura import AsuraTrace, SampleSet
from .core import Dataset
from .errors import InvalidInputError
from .verify import LemmaReport

__all__ = [
    "save_matrix",
    "load_matrix",
    "save_vector",
    "load_vector",
    "save_dataset",
    "load_dataset",
    "dump_trace",
    "load_trace",
    "solution_record",
    "save_sample_set",
    "load_sample_set",
    "lemma_report_to_dict",
    "write_jsonl",
    "read_jsonl",
    "save_packing",
]

FLOAT_FMT = "%.17g"


def save_matrix(path, arr) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError("save_matrix expects a 2-D array")
    np.savetxt(path, arr, fmt=FLOAT_FMT, delimiter=",")


def load_matrix(path, cols: int | None = None) -> np.ndarray:
    if os.path.getsize(path) == 0:
        if cols is None:
            raise InvalidInputError(f"{path} is empty and no column count was given")
        return np.zeros((0, cols))
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if cols is not None and arr.shape[1] != cols:
        raise InvalidInputError(f"{path}: expected {cols} columns, found {arr.shape[1]}")
    return arr


def save_vector(path, vec) -> None:
    vec = np.asarray(vec, dtype=float).reshape(-1)
    np.savetxt(path, vec, fmt=FLOAT_FMT)


def load_vector(path) -> np.ndarray:
    if os.path.getsize(path) == 0:
        return np.zeros(0)
    return np.loadtxt(path, ndmin=1)


def save_dataset(out_dir, ds: Dataset, full_labels=None, stem: str = "instance") -> str:
    """Write block CSVs plus a JSON manifest; returns the manifest path.

    When ``full_labels`` is given, the hidden labels of the unlabeled block are
    stored alongside (test mode); without it the manifest describes a
    deploy-mode instance whose unlabeled rows cannot be evaluated offline.
    """
    os.makedirs(out_dir, exist_ok=True)
    names = {
        "path_x1": f"{stem}_x1.csv",
        "path_x2": f"{stem}_x2.csv",
        "path_y2": f"{stem}_y2.csv",
    }
    save_matrix(os.path.join(out_dir, names["path_x1"]), ds.x_unlabeled)
    save_matrix(os.path.join(out_dir, names["path_x2"]), ds.x_labeled)
    save_vector(os.path.join(out_dir, names["path_y2"]), ds.y_labeled)
    manifest = {"d": ds.d, "n1": ds.n1, "n2": ds.n2, **names, "path_y1_hidden": None}
    if full_labels is not None:
        y = np.asarray(full_labels, dtype=float).reshape(-1)
        if y.size != ds.n:
            raise InvalidInputError(f"full_labels must have length {ds.n}")
        manifest["path_y1_hidden"] = f"{stem}_y1_hidden.csv"
        save_vector(os.path.join(out_dir, manifest["path_y1_hidden"]), y[: ds.n1])
    manifest_path = os.path.join(out_dir, f"{stem}_manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def load_dataset(manifest_path) -> tuple[Dataset, np.ndarray | None]:
    """Read a manifest; returns the dataset and, in test mode, the full labels."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    d = int(manifest["d"])
    x1 = load_matrix(os.path.join(base, manifest["path_x1"]), cols=d)
    x2 = load_matrix(os.path.join(base, manifest["path_x2"]), cols=d)
    y2 = load_vector(os.path.join(base, manifest["path_y2"]))
    if x1.shape[0] != int(manifest["n1"]) or x2.shape[0] != int(manifest["n2"]):
        raise InvalidInputError("manifest row counts do not match the block files")
    ds = Dataset(x_unlabeled=x1, x_labeled=x2, y_labeled=y2)
    full = None
    if manifest.get("path_y1_hidden"):
        y1 = load_vector(os.path.join(base, manifest["path_y1_hidden"]))
        if y1.size != ds.n1:
            raise InvalidInputError("hidden label file does not match n1")
        full = np.concatenate([y1, y2])
    return ds, full


def dump_trace(path, trace: AsuraTrace) -> None:
    """Write one run's scalar trace as JSON lines.

    A header record carries the run constants, one record per iteration holds
    the per-iteration scalars, and a trailer record holds the final barrier
    values.  Captured matrices are not serialized.
    """
    with open(path, "w") as fh:
        header = (
            '{"kind": "header", "gamma": %s, "rank": %d, "n_rows": %d, '
            '"n_unlabeled": %s, "m": %d}'
            % (
                FLOAT_FMT % trace.gamma,
                trace.rank,
                trace.n_rows,
                "null" if trace.n_unlabeled is None else str(int(trace.n_unlabeled)),
                trace.m,
            )
        )
        fh.write(header + "\n")
        for j in range(trace.m):
            fh.write(
                '{"j": %d, "phi_id": %s, "sampled_index": %d, "p_j": %s, '
                '"u_j": %s, "l_j": %s}\n'
                % (
                    j,
                    FLOAT_FMT % trace.phi_id[j],
                    int(trace.sampled_index[j]),
                    FLOAT_FMT % trace.p_j[j],
                    FLOAT_FMT % trace.u[j],
                    FLOAT_FMT % trace.l[j],
                )
            )
        fh.write(
            '{"j": %d, "u_j": %s, "l_j": %s}\n'
            % (trace.m, FLOAT_FMT % trace.u[-1], FLOAT_FMT % trace.l[-1])
        )


def load_trace(path) -> AsuraTrace:
    """Read a scalar trace dump back; matrices and optional series are absent."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise InvalidInputError(f"{path} is not a trace dump")
    head = lines[0]
    m = int(head["m"])
    body = lines[1:]
    if len(body) != m + 1:
        raise InvalidInputError(f"{path}: expected {m + 1} records, found {len(body)}")
    iters = body[:m]
    trailer = body[m]
    n_unl = head.get("n_unlabeled")
    return AsuraTrace(
        gamma=float(head["gamma"]),
        rank=int(head["rank"]),
        n_rows=int(head["n_rows"]),
        n_unlabeled=None if n_unl is None else int(n_unl),
        phi_id=np.array([rec["phi_id"] for rec in iters], dtype=float),
        u=np.array([rec["u_j"] for rec in iters] + [trailer["u_j"]], dtype=float),
        l=np.array([rec["l_j"] for rec in iters] + [trailer["l_j"]], dtype=float),
        sampled_index=np.array([rec["sampled_index"] for rec in iters], dtype=np.int64),
        p_j=np.array([rec["p_j"] for rec in iters], dtype=float),
        w_prime=np.zeros(m),
    )


def solution_record(sol, seed: int) -> dict:
    """Solve result as a serializable record with 17-digit coefficient floats."""
    return {
        "beta_hat": [float(FLOAT_FMT % v) for v in np.asarray(sol.beta_hat)],
        "loss": sol.loss,
        "opt": sol.opt,
        "ratio": sol.ratio,
        "queries": sol.queries,
        "iterations": sol.iterations,
        "seed": int(seed),
    }


def save_sample_set(path, sample) -> None:
    """One JSON record holding indices, weights and optional run metadata."""
    rec = {
        "indices": [int(i) for i in sample.indices],
        "weights": [float(FLOAT_FMT % w) for w in sample.weights],
        "coefficients": None
        if sample.coefficients is None
        else [float(FLOAT_FMT % a) for a in sample.coefficients],
        "gamma": sample.gamma,
        "u_final": sample.u_final,
        "l_final": sample.l_final,
    }
    with open(path, "w") as fh:
        json.dump(rec, fh)
        fh.write("\n")


def load_sample_set(path) -> SampleSet:
    with open(path) as fh:
        rec = json.load(fh)
    return SampleSet(
        indices=np.asarray(rec["indices"], dtype=np.int64),
        weights=np.asarray(rec["weights"], dtype=float),
        coefficients=None
        if rec.get("coefficients") is None
        else np.asarray(rec["coefficients"], dtype=float),
        gamma=rec.get("gamma"),
        u_final=rec.get("u_final"),
        l_final=rec.get("l_final"),
    )


def lemma_report_to_dict(rep: LemmaReport) -> dict:
    rec = asdict(rep)
    rec["verdict"] = "pass" if rep.verdict else "fail"
    rec["runs"] = rec.pop("runs_checked")
    return rec


def write_jsonl(path, records, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_packing(path, packing) -> None:
    """One member per line as a +-1 string, e.g. ``+-++-``."""
    with open(path, "w") as fh:
        for row in packing.members:
            fh.write("".join("+" if v > 0 else "-" for v in row) + "\n")
