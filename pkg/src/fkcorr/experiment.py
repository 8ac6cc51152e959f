"""Experiment configuration: JSON schema, validation and observable construction.

Example config::

    {
      "domain": {"shape": "box", "mesh": 1.0, "corners": [[-32, -32], [32, 32]]},
      "boundary": {"kind": "wired"},
      "observables": [
        {"name": "one_arm", "kind": "one_arm", "points": [[0, 0]], "radii": [4, 8, 16]}
      ],
      "sweeps": 2000,
      "seed": 7
    }
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from fkcorr.connectivity import (
    ArmEvent,
    BoundaryConnectionEvent,
    EdgeOpenEvent,
    InnerCrossingEvent,
    LargestClusterObservable,
    LinkEvent,
    OneArmEvent,
    SpinProductObservable,
    TwoPointEvent,
)
from fkcorr.core.exceptions import ConfigurationError, FkcorrError
from fkcorr.lattice import BoundarySpec, LatticeDomain, Vertex, check_compatible, domain_from_json
from fkcorr.patterns import LinkPattern
from fkcorr.sampler import ModelParams


Observable = Union[
    ArmEvent,
    BoundaryConnectionEvent,
    EdgeOpenEvent,
    InnerCrossingEvent,
    LargestClusterObservable,
    LinkEvent,
    OneArmEvent,
    SpinProductObservable,
    TwoPointEvent,
]

ObservableKind = Literal[
    "one_arm",
    "arm",
    "two_point",
    "boundary_one_arm",
    "boundary_two_point",
    "link",
    "boundary_connection",
    "edge_open",
    "inner_crossing",
    "spin_product",
    "largest_cluster",
]

_LADDER_KINDS = {"one_arm", "arm", "two_point", "boundary_one_arm", "boundary_two_point"}
_BOUNDARY_KINDS = {"boundary_one_arm", "boundary_two_point"}
_CIRCLE_KINDS = {"one_arm", "arm", "boundary_one_arm"}
_POINT_COUNTS = {
    "one_arm": 1,
    "boundary_one_arm": 1,
    "boundary_connection": 1,
    "edge_open": 2,
    "inner_crossing": 2,
}

IntPoint = tuple[int, int]


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    shape: Literal["box", "half_plane_strip", "custom"] = "box"
    mesh: float = Field(default=1.0, gt=0)
    corners: tuple[tuple[float, float], tuple[float, float]] | None = None
    points: list[IntPoint] | None = None

    @model_validator(mode="after")
    def _geometry_present(self) -> DomainConfig:
        if self.shape == "custom" and not self.points:
            msg = "custom domain needs 'points'"
            raise ValueError(msg)
        if self.shape != "custom" and self.corners is None:
            msg = f"{self.shape} domain needs 'corners'"
            raise ValueError(msg)
        return self

    def bounds(self) -> tuple[float, float, float, float] | None:
        """``(x0, y0, x1, y1)`` in physical units, or None for custom shapes."""
        if self.corners is None:
            return None
        (xa, ya), (xb, yb) = self.corners
        return min(xa, xb), min(ya, yb), max(xa, xb), max(ya, yb)

    def build(self) -> LatticeDomain:
        doc: dict[str, Any] = {"shape": self.shape, "mesh": self.mesh}
        if self.corners is not None:
            doc["corners"] = [list(c) for c in self.corners]
        if self.points is not None:
            doc["points"] = [list(p) for p in self.points]
        return domain_from_json(doc)


class BoundaryConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["free", "wired", "dobrushin", "mixed_free_plus"] = "free"
    marked_points: list[IntPoint] = Field(default_factory=list)
    arcs: list[list[IntPoint]] | None = None
    arc_start: IntPoint | None = None
    arc_end: IntPoint | None = None

    @model_validator(mode="after")
    def _marks_present(self) -> BoundaryConfig:
        if self.kind == "dobrushin" and len(self.marked_points) != 2:
            msg = "dobrushin boundary needs exactly two marked_points"
            raise ValueError(msg)
        if self.kind == "mixed_free_plus" and (self.arc_start is None or self.arc_end is None):
            msg = "mixed_free_plus boundary needs arc_start and arc_end"
            raise ValueError(msg)
        return self

    def build(self, domain: LatticeDomain) -> BoundarySpec:
        if self.kind == "free":
            return BoundarySpec.free()
        if self.kind == "wired":
            return BoundarySpec.wired(domain, self.arcs)
        if self.kind == "dobrushin":
            return BoundarySpec.dobrushin(domain, self.marked_points[0], self.marked_points[1])
        assert self.arc_start is not None and self.arc_end is not None
        return BoundarySpec.mixed_free_plus(domain, self.marked_points, self.arc_start, self.arc_end)


class ObservableConfig(BaseModel):
    """One measured quantity, or a family of them over a radius/separation ladder.

    Ladder members get ids ``<name>@<scale>``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_\-]+$")
    kind: ObservableKind
    points: list[IntPoint] = Field(default_factory=list)
    center: tuple[float, float] | None = None
    radii: list[float] = Field(default_factory=list)
    inner_radius: float | None = Field(default=None, gt=0)
    direction: IntPoint = (1, 0)
    pattern: list[list[int]] | None = None
    permissive: bool = False

    @field_validator("radii")
    @classmethod
    def _geometric(cls, radii: list[float]) -> list[float]:
        if any(r <= 0 for r in radii):
            msg = "radii must be positive"
            raise ValueError(msg)
        if len(radii) >= 2:
            ratio = radii[1] / radii[0]
            if ratio <= 1 or any(
                not math.isclose(b / a, ratio, rel_tol=1e-9) for a, b in zip(radii, radii[1:])
            ):
                msg = f"radii must form an increasing geometric ladder, got {radii}"
                raise ValueError(msg)
        return radii

    @model_validator(mode="after")
    def _shape_of_inputs(self) -> ObservableConfig:
        need = _POINT_COUNTS.get(self.kind)
        if need is not None and len(self.points) != need:
            msg = f"{self.kind} needs {need} point(s), got {len(self.points)}"
            raise ValueError(msg)
        if self.kind == "arm":
            if self.center is None or self.inner_radius is None or not self.radii:
                msg = "arm needs center, inner_radius and radii"
                raise ValueError(msg)
            if self.inner_radius >= self.radii[0]:
                msg = "arm inner_radius must be below every radius"
                raise ValueError(msg)
        if self.kind in {"one_arm", "boundary_one_arm"} and not self.radii:
            msg = f"{self.kind} needs radii"
            raise ValueError(msg)
        if self.kind in {"two_point", "boundary_two_point"}:
            if self.radii and len(self.points) != 1:
                msg = f"{self.kind} with a separation ladder needs one anchor point"
                raise ValueError(msg)
            if not self.radii and len(self.points) != 2:
                msg = f"{self.kind} needs two points or one point and radii"
                raise ValueError(msg)
        if self.kind == "link":
            if self.pattern is None or len(self.points) < 2:
                msg = "link needs a pattern and at least two points"
                raise ValueError(msg)
            try:
                size = LinkPattern.from_blocks(self.pattern).n
            except ConfigurationError as exc:
                raise ValueError(str(exc)) from exc
            if size != len(self.points):
                msg = f"pattern {self.pattern} does not cover {len(self.points)} points"
                raise ValueError(msg)
        if self.kind == "spin_product" and not self.points:
            msg = "spin_product needs points"
            raise ValueError(msg)
        if self.kind not in _LADDER_KINDS and self.radii:
            msg = f"{self.kind} takes no radii"
            raise ValueError(msg)
        return self

    def anchor(self, mesh: float) -> tuple[float, float] | None:
        """Physical point the ladder is measured from."""
        if self.kind == "arm":
            return self.center
        if self.kind in _LADDER_KINDS and self.points:
            x, y = self.points[0]
            return (x * mesh, y * mesh)
        return None

    def build(self, domain: LatticeDomain) -> dict[str, Observable]:
        """Observables keyed by their output id."""
        pts: list[Vertex] = [(int(x), int(y)) for x, y in self.points]
        if self.kind in _BOUNDARY_KINDS and pts[0] not in domain.boundary:
            msg = f"observable {self.name}: {pts[0]} is not a boundary vertex"
            raise ConfigurationError(msg)
        if self.kind in {"one_arm", "boundary_one_arm"}:
            return {f"{self.name}@{r:g}": OneArmEvent(pts[0], r) for r in self.radii}
        if self.kind == "arm":
            assert self.center is not None and self.inner_radius is not None
            center = (float(self.center[0]), float(self.center[1]))
            return {f"{self.name}@{r:g}": ArmEvent(center, self.inner_radius, r) for r in self.radii}
        if self.kind in {"two_point", "boundary_two_point"}:
            if not self.radii:
                return {self.name: TwoPointEvent(pts[0], pts[1])}
            out: dict[str, Observable] = {}
            dx, dy = self.direction
            for r in self.radii:
                steps = round(r / domain.mesh)
                other = (pts[0][0] + steps * dx, pts[0][1] + steps * dy)
                if other not in domain:
                    msg = f"observable {self.name}: separation {r:g} leaves the domain at {other}"
                    raise ConfigurationError(msg)
                out[f"{self.name}@{r:g}"] = TwoPointEvent(pts[0], other)
            return out
        if self.kind == "link":
            assert self.pattern is not None
            pattern = LinkPattern.from_blocks(self.pattern)
            return {self.name: LinkEvent(tuple(pts), pattern, self.permissive)}
        if self.kind == "boundary_connection":
            return {self.name: BoundaryConnectionEvent(pts[0])}
        if self.kind == "edge_open":
            return {self.name: EdgeOpenEvent(pts[0], pts[1])}
        if self.kind == "inner_crossing":
            return {self.name: InnerCrossingEvent(pts[0], pts[1])}
        if self.kind == "spin_product":
            return {self.name: SpinProductObservable(tuple(pts))}
        return {self.name: LargestClusterObservable()}


class ExperimentConfig(BaseModel):
    """A sampling campaign: geometry, boundary condition, observables and chain settings.

    ``p`` defaults to the self-dual point ``2 - sqrt2``. ``burn_in`` of None
    means "estimate from a pilot chain".
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "experiment"
    domain: DomainConfig
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    p: float | None = Field(default=None, ge=0.0, le=1.0)
    observables: list[ObservableConfig] = Field(min_length=1)
    sweeps: int = Field(gt=0)
    burn_in: int | None = Field(default=None, ge=0)
    thinning: int = Field(default=1, ge=1)
    seed: int = Field(ge=0, lt=2**64)
    chains: int = Field(default=1, ge=1)
    n_batches: int = Field(default=20, ge=20)
    pilot_sweeps: int = Field(default=500, ge=50)

    @field_validator("observables")
    @classmethod
    def _circles_nonempty(cls, observables: list[ObservableConfig], info: ValidationInfo) -> list[ObservableConfig]:
        """Discrete circles need a radius above the mesh."""
        domain = info.data.get("domain")
        if domain is None:
            return observables
        for obs in observables:
            if obs.kind not in _CIRCLE_KINDS:
                continue
            radii = [*obs.radii, *([obs.inner_radius] if obs.inner_radius is not None else [])]
            small = [r for r in radii if r <= domain.mesh]
            if small:
                msg = (
                    f"observable {obs.name}: discrete circle of radius {min(small):g} is empty "
                    f"at mesh {domain.mesh:g}; radii must exceed the mesh"
                )
                raise ValueError(msg)
        return observables

    @model_validator(mode="after")
    def _consistent(self) -> ExperimentConfig:
        names = [o.name for o in self.observables]
        if len(set(names)) != len(names):
            msg = f"observable names must be unique, got {names}"
            raise ValueError(msg)
        if self.sweeps // self.thinning < self.n_batches:
            msg = f"{self.sweeps // self.thinning} retained sweeps per chain, need at least n_batches={self.n_batches}"
            raise ValueError(msg)
        bounds = self.domain.bounds()
        if bounds is None:
            return self
        x0, y0, x1, y1 = bounds
        for obs in self.observables:
            anchor = obs.anchor(self.domain.mesh)
            if anchor is None or not obs.radii:
                continue
            gaps = [anchor[0] - x0, x1 - anchor[0], anchor[1] - y0, y1 - anchor[1]]
            if obs.kind in _BOUNDARY_KINDS:
                gaps = [g for g in gaps if g > 1e-9]
            margin = 2 * max(obs.radii)
            if any(g < margin for g in gaps):
                msg = (
                    f"observable {obs.name}: ladder up to {max(obs.radii):g} needs a margin of "
                    f"{margin:g} around {anchor}, domain leaves {min(gaps):g}"
                )
                raise ValueError(msg)
        return self

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def model_params(self) -> ModelParams:
        return ModelParams.critical_point() if self.p is None else ModelParams.from_p(self.p)

    def build(self) -> tuple[LatticeDomain, BoundarySpec, dict[str, Observable]]:
        """Domain, boundary condition and observables keyed by output id.

        Raises:
            ConfigurationError: Geometry, marks or observables do not fit together.
        """
        try:
            domain = self.domain.build()
            bc = self.boundary.build(domain)
            check_compatible(domain, bc)
            observables: dict[str, Observable] = {}
            for obs in self.observables:
                observables.update(obs.build(domain))
        except ConfigurationError:
            raise
        except FkcorrError as exc:
            raise ConfigurationError(str(exc)) from exc
        return domain, bc, observables


def _locate(lines: list[str], loc: tuple[int | str, ...]) -> int:
    """Best-effort JSON line of a pydantic error location (1-based)."""
    line = 0
    for part in loc:
        if not isinstance(part, str):
            continue
        needle = f'"{part}"'
        for k in range(line, len(lines)):
            if needle in lines[k]:
                line = k
                break
    return line + 1


def format_validation_error(path: Path | str, text: str, error: ValidationError) -> str:
    """``path:line: field.path: message`` per error."""
    lines = text.splitlines()
    out = []
    for err in error.errors():
        loc = tuple(err["loc"])
        field_path = ".".join(str(p) for p in loc) or "<root>"
        out.append(f"{path}:{_locate(lines, loc)}: {field_path}: {err['msg']}")
    return "\n".join(out)


def parse_experiment(text: str, source: Path | str = "<config>") -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        msg = f"{source}:{exc.lineno}: invalid JSON: {exc.msg}"
        raise ConfigurationError(msg) from exc
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(source, text, exc)) from exc


def load_experiment(path: Path | str) -> ExperimentConfig:
    """Read and validate an experiment config.

    Raises:
        ConfigurationError: Unreadable file, invalid JSON or schema violations,
            with ``path:line:`` anchors.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        msg = f"{path}: cannot read config: {exc.strerror}"
        raise ConfigurationError(msg) from exc
    return parse_experiment(text, path)
