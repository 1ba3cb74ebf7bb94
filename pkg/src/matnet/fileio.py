"""File formats: checkpoints, datasets, material files, load paths, CSV.

All formats are line-oriented text. Datasets are JSON-lines with a
header record; checkpoints, material files and load paths are single
JSON documents. Every format carries `format` and `version` fields and
unknown versions are rejected. Floating-point values are serialized with
`repr`, which round-trips doubles bit-exactly, so save/load cycles and
reruns under a fixed seed produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .crystal import (CrystalPlasticityLaw, ElasticLaw, PlasticityParams,
                      cubic_stiffness_mpa)
from .equilibrium import LoadStep, ramp_path
from .network import ParameterSet
from .training import Dataset, Sample, cubic_stiffness

__all__ = [
    "FormatError",
    "save_checkpoint", "load_checkpoint",
    "save_dataset", "load_dataset",
    "load_material_laws", "save_material",
    "load_path_steps", "save_load_path",
    "write_history_csv", "write_orientations_csv",
    "write_curves_csv", "write_pole_figure_csv",
    "read_orientations_csv",
    "file_sha256",
]

CHECKPOINT_FORMAT = "matnet-checkpoint"
DATASET_FORMAT = "matnet-dataset"
MATERIAL_FORMAT = "matnet-material"
LOADPATH_FORMAT = "matnet-loadpath"
_VERSION = 1


class FormatError(ValueError):
    pass


def _fmt(v):
    # repr of a Python float round-trips the double bit-exactly
    return repr(float(v))


def _check_header(doc, expected, path):
    if doc.get("format") != expected:
        raise FormatError(f"{path}: expected format {expected!r}, "
                          f"got {doc.get('format')!r}")
    if doc.get("version") != _VERSION:
        raise FormatError(f"{path}: unsupported {expected} version "
                          f"{doc.get('version')!r}")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, params, provenance=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": _VERSION,
        "depth": params.depth,
        "provenance": provenance or {},
    }
    for name in ParameterSet.FIELDS:
        doc[name] = [_fmt(v) for v in getattr(params, name)]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc, CHECKPOINT_FORMAT, path)
    depth = doc["depth"]
    arrays = {}
    for name in ParameterSet.FIELDS:
        arrays[name] = np.array([float(v) for v in doc[name]])
    expected_nodes = 1 << depth
    if arrays["z"].size != expected_nodes:
        raise FormatError(f"{path}: array sizes inconsistent with depth")
    params = ParameterSet(**arrays)
    return params, doc.get("provenance", {})


# -- datasets ----------------------------------------------------------------

def _phase_record(C):
    C = np.asarray(C, dtype=float)
    c11, c12, c44 = C[0, 0], C[0, 1], C[3, 3]
    if np.allclose(C, cubic_stiffness(c11, c12, c44), atol=1e-12, rtol=0):
        return {"C11": _fmt(c11), "C12": _fmt(c12), "C44": _fmt(c44)}
    return {"matrix": [_fmt(v) for v in C.reshape(-1)]}


def _phase_from_record(rec, path, lineno):
    try:
        if "matrix" in rec:
            vals = np.array([float(v) for v in rec["matrix"]])
            if vals.size != 36:
                raise FormatError(f"{path}:{lineno}: phase matrix needs "
                                  "36 values")
            return vals.reshape(6, 6)
        return cubic_stiffness(float(rec["C11"]), float(rec["C12"]),
                               float(rec["C44"]))
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}:{lineno}: bad phase record") from exc


def save_dataset(path, dataset, meta=None):
    header = {
        "format": DATASET_FORMAT,
        "version": _VERSION,
        "units": "GPa",
        "records": len(dataset.samples),
    }
    header.update(meta or {})
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in dataset.samples:
            rec = {"phase1": _phase_record(s.phase1)}
            if s.phase2 is not None:
                rec["phase2"] = _phase_record(s.phase2)
            if s.target is not None:
                rec["target"] = [_fmt(v) for v in
                                 np.asarray(s.target).reshape(-1)]
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path):
    samples = []
    with open(path) as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:1: invalid header") from exc
        _check_header(header, DATASET_FORMAT, path)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid record") from exc
            if "phase1" not in rec:
                raise FormatError(f"{path}:{lineno}: record lacks phase1")
            phase1 = _phase_from_record(rec["phase1"], path, lineno)
            phase2 = (_phase_from_record(rec["phase2"], path, lineno)
                      if "phase2" in rec else None)
            target = None
            if "target" in rec:
                try:
                    vals = np.array([float(v) for v in rec["target"]])
                except (TypeError, ValueError) as exc:
                    raise FormatError(f"{path}:{lineno}: bad target "
                                      "value") from exc
                if vals.size != 36:
                    raise FormatError(f"{path}:{lineno}: target needs "
                                      "36 values")
                target = vals.reshape(6, 6)
                scale = max(np.abs(target).max(), 1.0)
                if np.abs(target - target.T).max() > 1e-9 * scale:
                    raise FormatError(f"{path}:{lineno}: target not "
                                      "symmetric")
            samples.append(Sample(phase1, phase2, target))
    return Dataset(samples, provenance=dict(header))


# -- material files ----------------------------------------------------------

def _law_from_doc(doc, path):
    model = doc.get("model")
    if model == "elastic":
        if "C_GPa" in doc:
            C = np.array([float(v) for v in doc["C_GPa"]]).reshape(6, 6)
        else:
            C = cubic_stiffness(float(doc["C11_GPa"]), float(doc["C12_GPa"]),
                                float(doc["C44_GPa"]))
        return ElasticLaw(C * 1e3)
    if model == "phenopowerlaw":
        params = PlasticityParams(
            h0=float(doc["h0_sl_sl_GPa"]) * 1e3,
            xi_inf=float(doc["xi_inf_MPa"]),
            xi0=float(doc["xi0_MPa"]),
            n_exp=float(doc["n"]),
            a_exp=float(doc["a"]),
            gamma0=float(doc["gamma0_dot_per_s"]),
            h_int=float(doc.get("h_int", 0.0)),
            h_coeffs=[float(v) for v in doc["h_sl_sl"]],
            c11=float(doc["C11_GPa"]) * 1e3,
            c12=float(doc["C12_GPa"]) * 1e3,
            c44=float(doc["C44_GPa"]) * 1e3,
        )
        return CrystalPlasticityLaw(params)
    raise FormatError(f"{path}: unknown material model {model!r}")


def load_material_laws(path, topology):
    """Per-node law list; a `phase2` sub-document alternates even/odd."""
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc, MATERIAL_FORMAT, path)
    law1 = _law_from_doc(doc, path)
    laws = [law1] * topology.n_nodes
    if "phase2" in doc:
        law2 = _law_from_doc(doc["phase2"], path)
        laws = [law1 if i % 2 == 0 else law2
                for i in range(topology.n_nodes)]
    return laws


def save_material(path, doc):
    full = {"format": MATERIAL_FORMAT, "version": _VERSION}
    full.update(doc)
    with open(path, "w") as fh:
        json.dump(full, fh, indent=1)
        fh.write("\n")


# -- load paths ----------------------------------------------------------------

_COMPONENTS = {f"{r + 1}{c + 1}": (r, c) for r in range(3) for c in range(3)}


def load_path_steps(path):
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc, LOADPATH_FORMAT, path)
    if "ramp" in doc:
        ramp = doc["ramp"]
        comp = _COMPONENTS.get(str(ramp.get("component")))
        if comp is None:
            raise FormatError(f"{path}: ramp component must be '11'..'33'")
        return ramp_path(comp, float(ramp["final"]), float(ramp["rate"]),
                         int(ramp["steps"]))
    steps = []
    for k, rec in enumerate(doc.get("steps", [])):
        F = np.array([[float(v) for v in row] for row in rec["F"]])
        try:
            steps.append(LoadStep(F, float(rec["dt"])))
        except ValueError as exc:
            raise FormatError(f"{path}: step {k}: {exc}") from exc
    if not steps:
        raise FormatError(f"{path}: no load steps")
    return steps


def save_load_path(path, steps=None, ramp=None):
    doc = {"format": LOADPATH_FORMAT, "version": _VERSION}
    if ramp is not None:
        doc["ramp"] = ramp
    else:
        doc["steps"] = [{"F": [[_fmt(v) for v in row] for row in s.F],
                         "dt": _fmt(s.dt)} for s in steps]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# -- CSV outputs ---------------------------------------------------------------

_MAT_COLS = [f"{r + 1}{c + 1}" for r in range(3) for c in range(3)]


def write_history_csv(path, history):
    cols = (["step", "time"] + [f"F{c}" for c in _MAT_COLS]
            + [f"P{c}" for c in _MAT_COLS] + ["residual", "iterations"])
    with open(path, "w") as fh:
        fh.write("# matnet-history v1 (stress MPa)\n")
        fh.write(",".join(cols) + "\n")
        for k, resp in enumerate(history):
            row = [str(k + 1), _fmt(resp.time)]
            row += [_fmt(v) for v in resp.F.reshape(-1)]
            row += [_fmt(v) for v in resp.P.reshape(-1)]
            row += [_fmt(resp.residual_norm), str(resp.iterations)]
            fh.write(",".join(row) + "\n")


def write_orientations_csv(path, history):
    from .texture import quat_from_matrix
    with open(path, "w") as fh:
        fh.write("# matnet-orientations v1\n")
        fh.write("step,node,q0,q1,q2,q3,weight\n")
        for k, resp in enumerate(history):
            for i, R in enumerate(resp.node_orientation):
                q = quat_from_matrix(R)
                fh.write(",".join([str(k + 1), str(i)]
                                  + [_fmt(v) for v in q]
                                  + [_fmt(resp.weights[i])]) + "\n")


def read_orientations_csv(path, step=None):
    """Orientation cloud of one step (default: the last present)."""
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# matnet-orientations v1"):
            raise FormatError(f"{path}: not an orientation dump")
        fh.readline()
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) == 7:
                rows.append([float(v) for v in parts])
    if not rows:
        raise FormatError(f"{path}: empty orientation dump")
    arr = np.array(rows)
    pick = arr[:, 0].max() if step is None else step
    sel = arr[arr[:, 0] == pick]
    if sel.size == 0:
        raise FormatError(f"{path}: step {step} not present")
    return sel[:, 2:6], sel[:, 6]


def write_curves_csv(path, curves):
    with open(path, "w") as fh:
        fh.write("# matnet-curves v1\n")
        fh.write("epoch,train_error,val_error\n")
        for epoch, (tr, va) in enumerate(curves):
            fh.write(f"{epoch},{_fmt(tr)},{_fmt(va)}\n")


def write_pole_figure_csv(path, pf):
    with open(path, "w") as fh:
        h, k, l = pf.miller
        fh.write(f"# matnet-polefigure v1 miller={h}{k}{l}\n")
        fh.write("x,y,intensity\n")
        for x, y, w in pf.points:
            fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(w)}\n")
