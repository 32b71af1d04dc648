"""JSON persistence for fitted models.

Documents are self-describing: a `kind` tag selects the loader, and the
run configuration that produced an artifact can be embedded alongside it.
Floats survive the round trip exactly (shortest-repr encoding), so a
reloaded model reproduces in-memory predictions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .domain import BoxDomain
from .gp import Dataset, GPRegressor, TrainConfig
from .kernels import KernelFactor, KernelSpec, PRODUCT
from .mogp import CoregionalizationMatrix, MOGPRegressor
from .solution import SolutionModel

FORMAT_VERSION = 1


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def kernel_to_dict(spec: KernelSpec) -> dict:
    if spec.family == PRODUCT:
        return {
            "family": spec.family,
            "signal_variance": spec.signal_variance,
            "factors": [{"spec": kernel_to_dict(f.spec), "dims": list(f.dims)}
                        for f in spec.factors],
        }
    return {
        "family": spec.family,
        "lengthscales": _arr(spec.lengthscales),
        "signal_variance": spec.signal_variance,
    }


def kernel_from_dict(d: dict) -> KernelSpec:
    if d["family"] == PRODUCT:
        factors = tuple(KernelFactor(kernel_from_dict(f["spec"]), tuple(f["dims"]))
                        for f in d["factors"])
        return KernelSpec(PRODUCT, signal_variance=d["signal_variance"],
                          factors=factors)
    return KernelSpec(d["family"], lengthscales=np.asarray(d["lengthscales"]),
                      signal_variance=d["signal_variance"])


def _domain_to_dict(dom: BoxDomain | None):
    if dom is None:
        return None
    return {"lower": _arr(dom.lower), "upper": _arr(dom.upper)}


def _domain_from_dict(d) -> BoxDomain | None:
    if d is None:
        return None
    return BoxDomain(np.asarray(d["lower"]), np.asarray(d["upper"]))


def gp_to_dict(model: GPRegressor) -> dict:
    return {
        "kind": "gp",
        "version": FORMAT_VERSION,
        "kernel": kernel_to_dict(model.kernel),
        "noise_variance": model.noise_variance,
        "inputs": _arr(model.data.inputs),
        "outputs": _arr(model.data.outputs),
        "input_domain": _domain_to_dict(model.input_domain),
        "y_mean": model.y_mean,
        "y_std": model.y_std,
    }


def gp_from_dict(d: dict) -> GPRegressor:
    return GPRegressor(kernel_from_dict(d["kernel"]), d["noise_variance"],
                       Dataset(np.asarray(d["inputs"]), np.asarray(d["outputs"])),
                       input_domain=_domain_from_dict(d["input_domain"]),
                       y_mean=d["y_mean"], y_std=d["y_std"])


def mogp_to_dict(model: MOGPRegressor) -> dict:
    return {
        "kind": "mogp",
        "version": FORMAT_VERSION,
        "base_kernel": kernel_to_dict(model.base_kernel),
        "coregionalization": {"A": _arr(model.coregionalization.A),
                              "d": _arr(model.coregionalization.d)},
        "noise_variance": model.noise_variance,
        "inputs": _arr(model.data.inputs),
        "outputs": _arr(model.data.outputs),
        "input_domain": _domain_to_dict(model.input_domain),
        "y_mean": _arr(model.y_mean),
        "y_std": _arr(model.y_std),
    }


def mogp_from_dict(d: dict) -> MOGPRegressor:
    coreg = CoregionalizationMatrix(A=np.asarray(d["coregionalization"]["A"]),
                                    d=np.asarray(d["coregionalization"]["d"]))
    return MOGPRegressor(kernel_from_dict(d["base_kernel"]), coreg,
                         d["noise_variance"],
                         Dataset(np.asarray(d["inputs"]), np.asarray(d["outputs"])),
                         input_domain=_domain_from_dict(d["input_domain"]),
                         y_mean=np.asarray(d["y_mean"]),
                         y_std=np.asarray(d["y_std"]))


def solution_to_dict(model: SolutionModel, run_config: dict | None = None) -> dict:
    inner = None
    if model.model is not None:
        inner = (mogp_to_dict(model.model) if isinstance(model.model, MOGPRegressor)
                 else gp_to_dict(model.model))
    return {
        "kind": "solution_model",
        "version": FORMAT_VERSION,
        "theta_domain": _domain_to_dict(model.theta_domain),
        "z_domain": _domain_to_dict(model.z_domain),
        "thetas": [_arr(t) for t in model.thetas],
        "z_stars": [_arr(z) for z in model.z_stars],
        "model": inner,
        "run_config": run_config,
    }


def solution_from_dict(d: dict) -> SolutionModel:
    out = SolutionModel(_domain_from_dict(d["theta_domain"]),
                        _domain_from_dict(d["z_domain"]))
    out.thetas = [np.asarray(t, dtype=float) for t in d["thetas"]]
    out.z_stars = [np.asarray(z, dtype=float) for z in d["z_stars"]]
    if d["model"] is not None:
        out.model = (mogp_from_dict(d["model"]) if d["model"]["kind"] == "mogp"
                     else gp_from_dict(d["model"]))
    return out


_LOADERS = {
    "gp": gp_from_dict,
    "mogp": mogp_from_dict,
    "solution_model": solution_from_dict,
}


def to_dict(model) -> dict:
    if isinstance(model, SolutionModel):
        return solution_to_dict(model)
    if isinstance(model, MOGPRegressor):
        return mogp_to_dict(model)
    if isinstance(model, GPRegressor):
        return gp_to_dict(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(path, model, run_config: dict | None = None) -> None:
    if isinstance(model, SolutionModel):
        doc = solution_to_dict(model, run_config=run_config)
    else:
        doc = to_dict(model)
        if run_config is not None:
            doc["run_config"] = run_config
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind not in _LOADERS:
        raise ValueError(f"unrecognized model document kind {kind!r}")
    return _LOADERS[kind](doc)


def load_document(path) -> dict:
    return json.loads(Path(path).read_text())
