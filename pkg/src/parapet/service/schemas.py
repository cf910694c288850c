"""Request and response models for the HTTP service.

Requests carry overrides on top of the text-config defaults, so the config
module stays the single source of truth for parameter names and defaults.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class FinalState(BaseModel):
    """Spectral coefficients of the last recorded state, split into parts."""

    d: int
    n: int
    ncomp: int
    s: float
    re: list
    im: list


class RunResponse(BaseModel):
    mode: str
    report: dict
    trace: Optional[list] = None
    final_state: Optional[FinalState] = None


class RunRequest(BaseModel):
    """Raw run: a config text plus flat key overrides."""

    config: str = ""
    overrides: dict = Field(default_factory=dict)
    mode: Optional[str] = None


class PetrovskiiCheckRequest(BaseModel):
    matrix: list  # rows of the coefficient matrix
    delta: float = 0.5
    t_points: int = 50

    def to_overrides(self):
        rows = "; ".join(" ".join(str(x) for x in row) for row in self.matrix)
        return {
            "mode": "check-petrovskii",
            "petrovskii.matrix": rows,
            "petrovskii.delta": str(self.delta),
            "petrovskii.t_points": str(self.t_points),
        }


class LinearSolveRequest(BaseModel):
    matrix: list
    horizon: float = 1.0
    dt: float = 1e-3
    n: int = 64
    d: int = 1
    s: float = 2.0
    base: list = Field(default_factory=lambda: [1.0, 1.0])
    amplitude: float = 0.1
    delta: Optional[float] = None  # set to also run the energy certificate

    def to_overrides(self):
        rows = "; ".join(" ".join(str(x) for x in row) for row in self.matrix)
        out = {
            "mode": "solve-linear",
            "linear.matrix": rows,
            "time.horizon": str(self.horizon),
            "time.dt": str(self.dt),
            "grid.n": str(self.n),
            "grid.d": str(self.d),
            "s": str(self.s),
            "init.base": " ".join(str(x) for x in self.base),
            "init.amplitude": str(self.amplitude),
        }
        if self.delta is not None:
            out["linear.delta"] = str(self.delta)
        return out


class NonlinearSolveRequest(BaseModel):
    """Cross-diffusion run through the iteration engine."""

    horizon: float = 1.0
    dt: float = 1e-3
    t_init: Optional[float] = None
    n: int = 64
    d: int = 1
    s: float = 2.0
    base: list = Field(default_factory=lambda: [1.0, 1.0])
    amplitude: float = 0.1
    skt: dict = Field(default_factory=dict)  # SKTConfig field overrides
    tol: float = 1e-9

    def to_overrides(self, mode="solve-nonlinear"):
        out = {
            "mode": mode,
            "time.horizon": str(self.horizon),
            "time.dt": str(self.dt),
            "grid.n": str(self.n),
            "grid.d": str(self.d),
            "s": str(self.s),
            "init.base": " ".join(str(x) for x in self.base),
            "init.amplitude": str(self.amplitude),
            "picard.tol": str(self.tol),
        }
        if self.t_init is not None:
            out["time.t_init"] = str(self.t_init)
        for key, val in self.skt.items():
            out[f"skt.{key}"] = str(val)
        return out


class SKTStructureRequest(NonlinearSolveRequest):
    """Same knobs as a nonlinear solve, dispatched to the skt mode."""

    def to_overrides(self, mode="skt"):
        return super().to_overrides(mode=mode)


class LPCalibrateRequest(BaseModel):
    n: int = 64
    d: int = 1
    s: float = 2.0
    n_fields: int = 30

    def to_overrides(self):
        return {
            "mode": "lp-calibrate",
            "grid.n": str(self.n),
            "grid.d": str(self.d),
            "lp.s": str(self.s),
            "lp.n_fields": str(self.n_fields),
        }


class ErrorBody(BaseModel):
    message: str
    kind: str
    exit_code: int
