"""JSON (de)serialization for every spec plus the discovery configuration.

Specs are tagged dicts (``{"type": ..., ...}``); the CLI additionally accepts
compact strings for the common flags::

    diff        fd:<order> | sg:<window>,<poly> | spectral[:<filter>]
    optimizer   stlsq:<threshold>,<ridge> | sr3:<threshold>,<nu>,<l0|l1>
                | ssr | frols
    ensemble    n=20,rows=0.6,drop=0,agg=median,seed=0

All schemas carry ``"schema": 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diff as diffmod
from . import library as libmod
from . import optimize as optmod
from .ensemble import EnsembleSpec
from .errors import SpecError
from .systems import KS, BenchmarkSpec, Lorenz

SCHEMA_VERSION = 1


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SpecError(f"{context}: missing required field {key!r}")
    return mapping[key]


def check_schema(obj: dict, what: str) -> None:
    """Reject documents declaring a schema version we do not understand."""
    version = obj.get("schema", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SpecError(
            f"{what} declares schema {version}; this build reads schema "
            f"{SCHEMA_VERSION}"
        )


# ---------------------------------------------------------------------------
# DiffMethod
# ---------------------------------------------------------------------------


def diff_to_json(method: diffmod.DiffMethod) -> dict:
    if isinstance(method, diffmod.FiniteDifference):
        return {"method": "fd", "order": method.order, "d": method.d}
    if isinstance(method, diffmod.SavitzkyGolay):
        return {
            "method": "sg",
            "window": method.window,
            "poly_order": method.poly_order,
            "d": method.d,
        }
    if isinstance(method, diffmod.Spectral):
        return {
            "method": "spectral",
            "filter_strength": method.filter_strength,
            "d": method.d,
        }
    raise SpecError(f"unknown diff method {method!r}")


def diff_from_json(obj) -> diffmod.DiffMethod:
    if isinstance(obj, str):
        return parse_diff_flag(obj)
    if not isinstance(obj, dict):
        raise SpecError(f"diff spec must be an object or string, got {type(obj).__name__}")
    kind = _require(obj, "method", "diff spec")
    d = int(obj.get("d", 1))
    if kind == "fd":
        return diffmod.FiniteDifference(order=int(obj.get("order", 2)), d=d)
    if kind == "sg":
        return diffmod.SavitzkyGolay(
            window=int(obj.get("window", 11)),
            poly_order=int(obj.get("poly_order", 3)),
            d=d,
        )
    if kind == "spectral":
        return diffmod.Spectral(
            filter_strength=float(obj.get("filter_strength", 0.0)), d=d
        )
    raise SpecError(f"unknown diff method {kind!r}")


def parse_diff_flag(text: str) -> diffmod.DiffMethod:
    """Parse ``fd:<order> | sg:<window>,<poly> | spectral[:<filter>]``."""
    name, _, args = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "fd":
            return diffmod.FiniteDifference(order=int(args) if args else 2)
        if name == "sg":
            window, poly = args.split(",")
            return diffmod.SavitzkyGolay(window=int(window), poly_order=int(poly))
        if name == "spectral":
            return diffmod.Spectral(filter_strength=float(args) if args else 0.0)
    except ValueError as exc:
        raise SpecError(f"cannot parse diff flag {text!r}: {exc}") from exc
    raise SpecError(f"unknown diff flag {text!r}")


# ---------------------------------------------------------------------------
# LibrarySpec
# ---------------------------------------------------------------------------


def library_to_json(spec: libmod.LibrarySpec) -> dict:
    if isinstance(spec, libmod.Polynomial):
        return {
            "type": "polynomial",
            "degree": spec.degree,
            "include_bias": spec.include_bias,
            "include_interactions": spec.include_interactions,
        }
    if isinstance(spec, libmod.Fourier):
        return {
            "type": "fourier",
            "n_frequencies": spec.n_frequencies,
            "include_sin": spec.include_sin,
            "include_cos": spec.include_cos,
        }
    if isinstance(spec, libmod.Custom):
        names = []
        for fname, fn in spec.functions:
            if libmod.CUSTOM_REGISTRY.get(fname) is not fn:
                raise SpecError(
                    f"custom function {fname!r} is not from the registry and "
                    "cannot be serialized"
                )
            names.append(fname)
        return {"type": "custom", "functions": names}
    if isinstance(spec, libmod.PDE):
        return {
            "type": "pde",
            "derivative_order": spec.derivative_order,
            "axes": list(spec.axes),
            "multiply_by": (
                None if spec.multiply_by is None else library_to_json(spec.multiply_by)
            ),
            "diff": None if spec.diff is None else diff_to_json(spec.diff),
        }
    if isinstance(spec, libmod.WeakPDE):
        size = spec.subdomain_size
        return {
            "type": "weak",
            "inner": library_to_json(spec.inner),
            "n_subdomains": spec.n_subdomains,
            "test_poly_order": spec.test_poly_order,
            "subdomain_size": size if isinstance(size, int) else list(size),
            "seed": spec.seed,
        }
    if isinstance(spec, libmod.Concat):
        return {"type": "concat", "parts": [library_to_json(p) for p in spec.parts]}
    if isinstance(spec, libmod.Tensor):
        return {
            "type": "tensor",
            "left": library_to_json(spec.left),
            "right": library_to_json(spec.right),
        }
    if isinstance(spec, libmod.InputSubset):
        return {
            "type": "subset",
            "inner": library_to_json(spec.inner),
            "indices": list(spec.indices),
        }
    raise SpecError(f"unknown library spec {spec!r}")


def library_from_json(obj: dict) -> libmod.LibrarySpec:
    if not isinstance(obj, dict):
        raise SpecError(f"library spec must be an object, got {type(obj).__name__}")
    kind = _require(obj, "type", "library spec")
    if kind == "polynomial":
        return libmod.Polynomial(
            degree=int(obj.get("degree", 2)),
            include_bias=bool(obj.get("include_bias", True)),
            include_interactions=bool(obj.get("include_interactions", True)),
        )
    if kind == "fourier":
        return libmod.Fourier(
            n_frequencies=int(obj.get("n_frequencies", 1)),
            include_sin=bool(obj.get("include_sin", True)),
            include_cos=bool(obj.get("include_cos", True)),
        )
    if kind == "custom":
        functions = []
        for fname in _require(obj, "functions", "custom library"):
            if fname not in libmod.CUSTOM_REGISTRY:
                raise SpecError(
                    f"unknown custom function {fname!r}; available: "
                    f"{sorted(libmod.CUSTOM_REGISTRY)}"
                )
            functions.append((fname, libmod.CUSTOM_REGISTRY[fname]))
        return libmod.Custom(functions=tuple(functions))
    if kind == "pde":
        multiply = obj.get("multiply_by")
        diff = obj.get("diff")
        return libmod.PDE(
            derivative_order=int(obj.get("derivative_order", 1)),
            axes=tuple(obj.get("axes", ["x"])),
            multiply_by=None if multiply is None else library_from_json(multiply),
            diff=None if diff is None else diff_from_json(diff),
        )
    if kind == "weak":
        size = _require(obj, "subdomain_size", "weak library")
        return libmod.WeakPDE(
            inner=library_from_json(_require(obj, "inner", "weak library")),
            n_subdomains=int(obj.get("n_subdomains", 100)),
            test_poly_order=int(obj.get("test_poly_order", 4)),
            subdomain_size=size if isinstance(size, int) else tuple(int(s) for s in size),
            seed=int(obj.get("seed", 0)),
        )
    if kind == "concat":
        return libmod.Concat(
            parts=tuple(library_from_json(p) for p in _require(obj, "parts", "concat"))
        )
    if kind == "tensor":
        return libmod.Tensor(
            left=library_from_json(_require(obj, "left", "tensor")),
            right=library_from_json(_require(obj, "right", "tensor")),
        )
    if kind == "subset":
        return libmod.InputSubset(
            inner=library_from_json(_require(obj, "inner", "subset")),
            indices=tuple(int(i) for i in _require(obj, "indices", "subset")),
        )
    raise SpecError(f"unknown library type {kind!r}")


# ---------------------------------------------------------------------------
# OptimizerSpec
# ---------------------------------------------------------------------------


def optimizer_to_json(spec: optmod.OptimizerSpec) -> dict:
    if isinstance(spec, optmod.STLSQ):
        return {
            "type": "stlsq",
            "threshold": spec.threshold,
            "ridge": spec.ridge,
            "max_iter": spec.max_iter,
        }
    if isinstance(spec, optmod.SR3):
        out = {
            "type": "sr3",
            "threshold": spec.threshold,
            "relaxation": spec.relaxation,
            "regularizer": spec.regularizer,
            "max_iter": spec.max_iter,
            "tol": spec.tol,
        }
        if spec.constraints is not None:
            C, d = spec.constraints
            out["constraints"] = {
                "matrix": np.asarray(C, dtype=float).tolist(),
                "rhs": np.asarray(d, dtype=float).tolist(),
            }
        return out
    if isinstance(spec, optmod.SSR):
        return {"type": "ssr", "min_terms": spec.min_terms, "selection": spec.selection}
    if isinstance(spec, optmod.FROLS):
        return {"type": "frols", "max_terms": spec.max_terms, "err_tol": spec.err_tol}
    raise SpecError(f"unknown optimizer spec {spec!r}")


def optimizer_from_json(obj) -> optmod.OptimizerSpec:
    if isinstance(obj, str):
        return parse_optimizer_flag(obj)
    if not isinstance(obj, dict):
        raise SpecError(
            f"optimizer spec must be an object or string, got {type(obj).__name__}"
        )
    kind = _require(obj, "type", "optimizer spec")
    if kind == "stlsq":
        return optmod.STLSQ(
            threshold=float(obj.get("threshold", 0.1)),
            ridge=float(obj.get("ridge", 0.05)),
            max_iter=int(obj.get("max_iter", 20)),
        )
    if kind == "sr3":
        constraints = None
        if obj.get("constraints") is not None:
            block = obj["constraints"]
            constraints = (
                np.asarray(_require(block, "matrix", "constraints"), dtype=float),
                np.asarray(_require(block, "rhs", "constraints"), dtype=float),
            )
        return optmod.SR3(
            threshold=float(obj.get("threshold", 0.1)),
            relaxation=float(obj.get("relaxation", 1.0)),
            regularizer=obj.get("regularizer", "l0"),
            max_iter=int(obj.get("max_iter", 30)),
            tol=float(obj.get("tol", 1e-5)),
            constraints=constraints,
        )
    if kind == "ssr":
        return optmod.SSR(
            min_terms=int(obj.get("min_terms", 1)),
            selection=obj.get("selection", "holdout"),
        )
    if kind == "frols":
        max_terms = obj.get("max_terms")
        return optmod.FROLS(
            max_terms=None if max_terms is None else int(max_terms),
            err_tol=float(obj.get("err_tol", 1e-6)),
        )
    raise SpecError(f"unknown optimizer type {kind!r}")


def parse_optimizer_flag(text: str) -> optmod.OptimizerSpec:
    """Parse ``stlsq:l,a | sr3:l,nu,l0|l1 | ssr | frols``."""
    name, _, args = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "stlsq":
            if not args:
                return optmod.STLSQ()
            lam, alpha = args.split(",")
            return optmod.STLSQ(threshold=float(lam), ridge=float(alpha))
        if name == "sr3":
            if not args:
                return optmod.SR3()
            lam, nu, reg = args.split(",")
            return optmod.SR3(
                threshold=float(lam), relaxation=float(nu), regularizer=reg.strip()
            )
        if name == "ssr":
            return optmod.SSR()
        if name == "frols":
            return optmod.FROLS()
    except ValueError as exc:
        raise SpecError(f"cannot parse optimizer flag {text!r}: {exc}") from exc
    raise SpecError(f"unknown optimizer flag {text!r}")


# ---------------------------------------------------------------------------
# EnsembleSpec
# ---------------------------------------------------------------------------


def ensemble_to_json(spec: EnsembleSpec) -> dict:
    return {
        "n_models": spec.n_models,
        "row_fraction": spec.row_fraction,
        "replace": spec.replace,
        "n_library_drop": spec.n_library_drop,
        "aggregator": spec.aggregator,
        "support_threshold": spec.support_threshold,
        "seed": spec.seed,
    }


def ensemble_from_json(obj) -> EnsembleSpec:
    if isinstance(obj, str):
        return parse_ensemble_flag(obj)
    if not isinstance(obj, dict):
        raise SpecError(
            f"ensemble spec must be an object or string, got {type(obj).__name__}"
        )
    return EnsembleSpec(
        n_models=int(obj.get("n_models", 20)),
        row_fraction=float(obj.get("row_fraction", 0.6)),
        replace=bool(obj.get("replace", True)),
        n_library_drop=int(obj.get("n_library_drop", 0)),
        aggregator=obj.get("aggregator", "median"),
        support_threshold=float(obj.get("support_threshold", 0.5)),
        seed=int(obj.get("seed", 0)),
    )


def parse_ensemble_flag(text: str) -> EnsembleSpec:
    """Parse ``n=20,rows=0.6,drop=0,agg=median,seed=0[,norepl]``."""
    kwargs: dict = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "norepl":
            kwargs["replace"] = False
            continue
        key, _, value = item.partition("=")
        try:
            if key == "n":
                kwargs["n_models"] = int(value)
            elif key == "rows":
                kwargs["row_fraction"] = float(value)
            elif key == "drop":
                kwargs["n_library_drop"] = int(value)
            elif key == "agg":
                kwargs["aggregator"] = value
            elif key == "seed":
                kwargs["seed"] = int(value)
            else:
                raise SpecError(f"unknown ensemble flag key {key!r}")
        except ValueError as exc:
            raise SpecError(f"cannot parse ensemble flag {item!r}: {exc}") from exc
    return EnsembleSpec(**kwargs)


# ---------------------------------------------------------------------------
# BenchmarkSpec
# ---------------------------------------------------------------------------


def benchmark_to_json(spec: BenchmarkSpec) -> dict:
    system = spec.system
    if isinstance(system, Lorenz):
        sys_obj = {
            "name": "lorenz",
            "sigma": system.sigma,
            "rho": system.rho,
            "beta": system.beta,
            "initial_state": list(system.initial_state),
            "t_span": system.t_span,
            "dt": system.dt,
        }
    else:
        sys_obj = {
            "name": "ks",
            "length": system.length,
            "n_grid": system.n_grid,
            "t_span": system.t_span,
            "dt_save": system.dt_save,
            "dt": system.dt,
            "burn_in": system.burn_in,
            "n_init_modes": system.n_init_modes,
            "init_amplitude": system.init_amplitude,
        }
    return {"system": sys_obj, "noise_level": spec.noise_level, "seed": spec.seed}


def benchmark_from_json(obj: dict) -> BenchmarkSpec:
    if not isinstance(obj, dict):
        raise SpecError("benchmark spec must be an object")
    check_schema(obj, "benchmark spec")
    sys_obj = _require(obj, "system", "benchmark spec")
    name = _require(sys_obj, "name", "benchmark system")
    if name == "lorenz":
        system = Lorenz(
            sigma=float(sys_obj.get("sigma", 10.0)),
            rho=float(sys_obj.get("rho", 28.0)),
            beta=float(sys_obj.get("beta", 8.0 / 3.0)),
            initial_state=tuple(sys_obj.get("initial_state", (-8.0, 8.0, 27.0))),
            t_span=float(sys_obj.get("t_span", 10.0)),
            dt=float(sys_obj.get("dt", 0.002)),
        )
    elif name == "ks":
        system = KS(
            length=float(sys_obj.get("length", 100.0)),
            n_grid=int(sys_obj.get("n_grid", 1024)),
            t_span=float(sys_obj.get("t_span", 100.0)),
            dt_save=float(sys_obj.get("dt_save", 0.4)),
            dt=float(sys_obj.get("dt", 0.05)),
            burn_in=float(sys_obj.get("burn_in", 50.0)),
            n_init_modes=int(sys_obj.get("n_init_modes", 4)),
            init_amplitude=float(sys_obj.get("init_amplitude", 0.5)),
        )
    else:
        raise SpecError(f"unknown benchmark system {name!r}")
    return BenchmarkSpec(
        system=system,
        noise_level=float(obj.get("noise_level", 0.0)),
        seed=int(obj.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# DiscoveryConfig
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscoveryConfig:
    """Declarative description of one discovery run."""

    data_path: str | None
    benchmark: BenchmarkSpec | None
    train_fraction: float
    diff: diffmod.DiffMethod
    library: libmod.LibrarySpec
    optimizer: optmod.OptimizerSpec
    ensemble: EnsembleSpec | None
    output_dir: str
    seed: int
    precision: int
    normalize_columns: bool = False

    def validate(self) -> None:
        if (self.data_path is None) == (self.benchmark is None):
            raise SpecError("config needs exactly one of data.path or data.benchmark")
        if not 0.0 < self.train_fraction < 1.0:
            raise SpecError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.precision < 1:
            raise SpecError(f"precision must be >= 1, got {self.precision}")
        libmod.validate(self.library)
        self.optimizer.validate()
        if self.ensemble is not None:
            self.ensemble.validate()
        if self.benchmark is not None:
            self.benchmark.validate()


def config_from_json(obj: dict) -> DiscoveryConfig:
    if not isinstance(obj, dict):
        raise SpecError("config must be a JSON object")
    check_schema(obj, "config")
    data = _require(obj, "data", "config")
    data_path = data.get("path")
    benchmark = data.get("benchmark")
    cfg = DiscoveryConfig(
        data_path=data_path,
        benchmark=None if benchmark is None else benchmark_from_json(benchmark),
        train_fraction=float(obj.get("train_fraction", 0.6)),
        diff=diff_from_json(obj.get("diff", {"method": "fd", "order": 2})),
        library=library_from_json(_require(obj, "library", "config")),
        optimizer=optimizer_from_json(obj.get("optimizer", {"type": "stlsq"})),
        ensemble=(
            None
            if obj.get("ensemble") is None
            else ensemble_from_json(obj["ensemble"])
        ),
        output_dir=obj.get("output_dir", "."),
        seed=int(obj.get("seed", 0)),
        precision=int(obj.get("precision", 3)),
        normalize_columns=bool(obj.get("normalize_columns", False)),
    )
    cfg.validate()
    return cfg


def config_to_json(cfg: DiscoveryConfig) -> dict:
    data = (
        {"path": cfg.data_path}
        if cfg.data_path is not None
        else {"benchmark": benchmark_to_json(cfg.benchmark)}
    )
    return {
        "schema": SCHEMA_VERSION,
        "data": data,
        "train_fraction": cfg.train_fraction,
        "diff": diff_to_json(cfg.diff),
        "library": library_to_json(cfg.library),
        "optimizer": optimizer_to_json(cfg.optimizer),
        "ensemble": None if cfg.ensemble is None else ensemble_to_json(cfg.ensemble),
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
        "precision": cfg.precision,
        "normalize_columns": cfg.normalize_columns,
    }


def load_config(path: str | Path) -> DiscoveryConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise SpecError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"config is not valid JSON: {exc}") from exc
    return config_from_json(obj)


def jsonable(value):
    """Recursively convert numpy containers for deterministic JSON output."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value
