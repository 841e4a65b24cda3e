"""Run configuration: a single JSON document with materialized defaults.

Every run artifact embeds the fully resolved configuration as provenance, so
defaults are expanded here, unknown keys are rejected, and cross-field
validity (weight exponent against the kernel exponent, recipe parameters) is
checked before any compute module is touched.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from .collision import KernelParams
from .evolve import StepConfig
from .phase import DistributionField, SpatialGrid, VelocityGrid, equilibrium_field, maxwellian

DEFAULTS = {
    "velocity": {"v_max": 6.0, "n_per_axis": 24},
    "spatial": {"dimension": 0, "period": 1.0, "n_cells": 1},
    "kernel": {"gamma": 1.0, "cb": 1.0, "eps_rel": 0.0},
    "step": {
        "dt": 0.05,
        "t_end": 1.0,
        "picard_tol": 1e-9,
        "picard_max": 40,
        "c4_tilde": 1.0,
        "substeps": 4,
        "beta": 4.5,
        "n_cos": 4,
        "n_az": 8,
        "energy_cut_factor": 1.5,
        "stepper": "ks",
        "report_every": 1,
        "checkpoint_every": 0,
    },
    "initial": {"recipe": "equilibrium"},
    "certify": {"epsilon0": 0.1, "m_bar": 10.0},
    "seed": 0,
}

RECIPE_DEFAULTS = {
    "equilibrium": {},
    "density-profile": {
        "kind": "constant",  # constant | cosine | step
        "rho0": 1.0,
        "mean": 1.0,
        "amplitude": 0.0,
        "mode": 1,
        "inside": 0.0,
        "outside": 1.0,
        "window": [0.25, 0.75],
    },
    "bump": {
        "amplitude": 0.5,
        "center": [1.2, 0.0, 0.0],
        "width": 1.0,
        "pair": True,
    },
    "file": {"path": ""},
}


class ConfigError(ValueError):
    pass


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path}{key} must be an object")
            out[key] = _merge(defaults[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


class RunConfig:
    """Validated, fully resolved run configuration."""

    def __init__(self, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        doc = dict(doc)
        initial_given = doc.get("initial", {})
        if not isinstance(initial_given, dict):
            raise ConfigError("config key initial must be an object")
        recipe = initial_given.get("recipe", DEFAULTS["initial"]["recipe"])
        if recipe not in RECIPE_DEFAULTS:
            raise ConfigError(
                f"unknown initial recipe: {recipe!r} (choose from {sorted(RECIPE_DEFAULTS)})"
            )
        base = copy.deepcopy(DEFAULTS)
        base["initial"] = {"recipe": recipe, **RECIPE_DEFAULTS[recipe]}
        self.resolved = _merge(base, doc, "")
        try:
            self.vgrid = VelocityGrid(**self.resolved["velocity"])
            self.sgrid = SpatialGrid(**self.resolved["spatial"])
            self.params = KernelParams(**self.resolved["kernel"])
            self.step = StepConfig(**self.resolved["step"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        beta = self.step.beta
        if beta <= max(3.0, 3.0 + self.params.gamma):
            raise ConfigError(
                f"weight exponent beta={beta} must exceed max(3, 3+gamma)="
                f"{max(3.0, 3.0 + self.params.gamma)}"
            )
        if not isinstance(self.resolved["seed"], int):
            raise ConfigError("seed must be an integer")
        ini = self.resolved["initial"]
        if recipe == "file" and not ini["path"]:
            raise ConfigError("initial recipe 'file' requires a path")
        if recipe == "density-profile" and ini["kind"] not in ("constant", "cosine", "step"):
            raise ConfigError("density-profile kind must be constant, cosine, or step")

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls(doc)

    def provenance(self):
        return copy.deepcopy(self.resolved)

    def build_initial(self):
        """Construct the initial DistributionField for the configured recipe."""
        ini = self.resolved["initial"]
        recipe = ini["recipe"]
        vg, sg = self.vgrid, self.sgrid
        if recipe == "equilibrium":
            return equilibrium_field(vg, sg)
        if recipe == "file":
            from .fieldio import load_field

            field, _ = load_field(ini["path"])
            if field.vgrid != vg or field.sgrid != sg:
                raise ConfigError("field file grids do not match the configured grids")
            return field
        mu = maxwellian(vg)
        if recipe == "density-profile":
            rho = self._density_profile(ini, sg)
            if np.any(rho < 0.0):
                raise ConfigError("density profile must be nonnegative")
            return DistributionField(vg, sg, rho[:, None] * mu[None, :])
        nodes = vg.nodes()
        c = np.asarray(ini["center"], dtype=float)
        s = float(ini["width"])
        if s <= 0:
            raise ConfigError("bump width must be positive")
        bump = np.exp(-np.sum((nodes - c) ** 2, axis=1) / (2.0 * s * s))
        if ini["pair"]:
            bump = bump + np.exp(-np.sum((nodes + c) ** 2, axis=1) / (2.0 * s * s))
        vals = mu + float(ini["amplitude"]) * bump
        return DistributionField(vg, sg, np.tile(vals, (sg.n_cells, 1)))

    @staticmethod
    def _density_profile(ini, sg):
        x = sg.axis
        kind = ini["kind"]
        if kind == "constant":
            return np.full(sg.n_cells, float(ini["rho0"]))
        if kind == "cosine":
            return float(ini["mean"]) + float(ini["amplitude"]) * np.cos(
                2.0 * np.pi * int(ini["mode"]) * x / sg.period
            )
        lo, hi = (float(w) for w in ini["window"])
        inside = (x >= lo * sg.period) & (x < hi * sg.period)
        return np.where(inside, float(ini["inside"]), float(ini["outside"]))
