"""Joint architecture + training-recipe search space.

A space file (YAML) declares a stack of stages plus a block of recipe
ranges.  Every searchable parameter is a finite grid; fixed parameters are
single-value grids.  Range values are kept in the file's own units (e.g.
learning rate stored as 26 with ``unit: 1e-3``), which keeps grids exact
and makes min-max encoding an integer ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import yaml

from .errors import SpaceParseError, ValidationError
from ._util import canonical_json, sha256_hex

BLOCK_KINDS = ("conv", "mbconv", "mbpool", "fc", "skip")
OPTIMIZERS = ("rmsprop", "sgd")

# Recipe fields with numeric grids, in canonical order, with default units.
RECIPE_NUMERIC_FIELDS = (
    ("lr", 1e-3),
    ("dropout", 1e-2),
    ("stochastic_depth", 1e-1),
    ("mixup", 1e-1),
    ("weight_decay", 1e-6),
)


@dataclass(frozen=True)
class StageSpec:
    """Grids for one stage of the network stack.

    ``expansion_shared`` means a single searched expansion applies to every
    block in the stage; otherwise ``expansion_first`` is used by the first
    block and ``expansion_rest`` by the remaining ones.
    """

    index: int
    block: str
    kernel: tuple[int, ...]
    expansion_first: tuple[float, ...]
    expansion_rest: tuple[float, ...]
    expansion_shared: bool
    channels: tuple[int, ...]
    depth: tuple[int, ...]
    stride: int
    se: bool
    activation: str
    shared_first: str | None = None
    shared_rest: str | None = None

    @property
    def has_expansion(self) -> bool:
        return len(self.expansion_first) > 0


@dataclass(frozen=True)
class RecipeRanges:
    """Numeric recipe grids (file units) plus categorical choices."""

    lr: tuple[float, ...]
    dropout: tuple[float, ...]
    stochastic_depth: tuple[float, ...]
    mixup: tuple[float, ...]
    weight_decay: tuple[float, ...]
    optimizer: tuple[str, ...]
    ema: tuple[bool, ...]
    units: Mapping[str, float] = field(default_factory=dict)

    def grid(self, name: str) -> tuple:
        return getattr(self, name)


@dataclass(frozen=True)
class SearchSpaceDef:
    name: str
    resolution: tuple[int, ...]
    stages: tuple[StageSpec, ...]
    recipe: RecipeRanges
    sgd_lr_multiplier: float = 4.0

    def fingerprint(self) -> str:
        return sha256_hex(canonical_json(space_to_dict(self)))


@dataclass(frozen=True)
class StageConfig:
    block: str
    kernel: int | None
    expansion_first: float | None
    expansion_rest: float | None
    channels: int
    depth: int
    stride: int
    se: bool
    activation: str


@dataclass(frozen=True)
class ArchConfig:
    resolution: int
    stages: tuple[StageConfig, ...]


@dataclass(frozen=True)
class RecipeConfig:
    """Training-recipe settings, numeric fields in the space's file units."""

    lr: float
    optimizer: str
    ema: bool
    dropout: float
    stochastic_depth: float
    mixup: float
    weight_decay: float


@dataclass(frozen=True)
class Candidate:
    arch: ArchConfig
    recipe: RecipeConfig

    def key(self) -> str:
        return canonical_json(candidate_to_dict(self))


# ---------------------------------------------------------------------------
# Free parameters (genes)


@dataclass(frozen=True)
class FreeParam:
    """One independently searched parameter.

    ``kind`` is "onehot" for categorical choices and "minmax" for numeric
    grids.  A shared group is represented by a single FreeParam owned by
    the first stage referencing it; ``targets`` lists every
    (stage_index, field) the value is written to.
    """

    key: str
    kind: str
    values: tuple
    targets: tuple[tuple[Any, str], ...]


# Keyed by id() with the space held in the value, so a live entry pins the
# id and lookups can verify identity.
_FREE_PARAM_CACHE: dict[int, tuple["SearchSpaceDef", tuple["FreeParam", ...]]] = {}


def free_params(space: SearchSpaceDef) -> tuple[FreeParam, ...]:
    """Free parameters in canonical (encoding/sampling) order."""
    cached = _FREE_PARAM_CACHE.get(id(space))
    if cached is not None and cached[0] is space:
        return cached[1]
    params: list[FreeParam] = []
    shared_targets: dict[str, list[tuple[Any, str]]] = {}
    shared_order: dict[str, int] = {}

    if len(space.resolution) > 1:
        params.append(FreeParam("resolution", "minmax", space.resolution, (("arch", "resolution"),)))

    for st in space.stages:
        entries: list[tuple[str, str, tuple, str | None]] = []
        if len(st.kernel) > 1:
            entries.append(("kernel", "onehot", st.kernel, None))
        if st.has_expansion:
            if st.expansion_shared:
                if len(st.expansion_first) > 1:
                    entries.append(("expansion", "minmax", st.expansion_first, st.shared_first))
            else:
                if len(st.expansion_first) > 1:
                    entries.append(("expansion_first", "minmax", st.expansion_first, st.shared_first))
                if len(st.expansion_rest) > 1:
                    entries.append(("expansion_rest", "minmax", st.expansion_rest, st.shared_rest))
        if len(st.channels) > 1:
            entries.append(("channels", "minmax", st.channels, None))
        if len(st.depth) > 1:
            entries.append(("depth", "minmax", st.depth, None))

        for fname, kind, values, group in entries:
            target = (st.index, fname)
            if group is not None:
                if group in shared_targets:
                    shared_targets[group].append(target)
                    continue
                shared_targets[group] = [target]
                shared_order[group] = len(params)
                params.append(FreeParam(f"stage{st.index}.{fname}", kind, values, (target,)))
            else:
                params.append(FreeParam(f"stage{st.index}.{fname}", kind, values, (target,)))

    # Rewrite shared params with their full target lists.
    for group, targets in shared_targets.items():
        i = shared_order[group]
        params[i] = replace(params[i], targets=tuple(targets))

    if len(space.recipe.optimizer) > 1:
        params.append(FreeParam("recipe.optimizer", "onehot", space.recipe.optimizer, (("recipe", "optimizer"),)))
    if len(space.recipe.ema) > 1:
        params.append(FreeParam("recipe.ema", "onehot", space.recipe.ema, (("recipe", "ema"),)))
    for fname, _ in RECIPE_NUMERIC_FIELDS:
        grid = space.recipe.grid(fname)
        if len(grid) > 1:
            params.append(FreeParam(f"recipe.{fname}", "minmax", grid, (("recipe", fname),)))

    # Keep categorical recipe params between lr and the regularizers, matching
    # the file layout (lr, optimizer, ema, dropout, ...).
    ordered = [p for p in params if not p.key.startswith("recipe.")]
    rec = {p.key: p for p in params if p.key.startswith("recipe.")}
    for key in ("recipe.lr", "recipe.optimizer", "recipe.ema", "recipe.dropout",
                "recipe.stochastic_depth", "recipe.mixup", "recipe.weight_decay"):
        if key in rec:
            ordered.append(rec[key])
    result = tuple(ordered)
    if len(_FREE_PARAM_CACHE) > 64:
        _FREE_PARAM_CACHE.clear()
    _FREE_PARAM_CACHE[id(space)] = (space, result)
    return result


def build_candidate(space: SearchSpaceDef, gene_values: Mapping[str, Any]) -> Candidate:
    """Assemble a Candidate from per-FreeParam values plus space constants."""
    params = {p.key: p for p in free_params(space)}
    missing = set(params) - set(gene_values)
    if missing:
        raise ValidationError(sorted(missing)[0], "no value supplied for free parameter")

    resolution = space.resolution[0]
    stage_fields: dict[int, dict[str, Any]] = {st.index: {} for st in space.stages}
    recipe_fields: dict[str, Any] = {}
    for key, value in gene_values.items():
        if key not in params:
            raise ValidationError(key, "unknown free parameter")
        for target, fname in params[key].targets:
            if target == "arch":
                resolution = value
            elif target == "recipe":
                recipe_fields[fname] = value
            else:
                stage_fields[target][fname] = value

    stages = []
    for st in space.stages:
        got = stage_fields[st.index]
        kernel = got.get("kernel", st.kernel[0] if st.kernel else None)
        if st.has_expansion:
            if st.expansion_shared:
                e = got.get("expansion", st.expansion_first[0])
                e_first, e_rest = e, e
            else:
                e_first = got.get("expansion_first", st.expansion_first[0])
                e_rest = got.get("expansion_rest", st.expansion_rest[0])
        else:
            e_first, e_rest = None, None
        stages.append(StageConfig(
            block=st.block,
            kernel=kernel,
            expansion_first=e_first,
            expansion_rest=e_rest,
            channels=got.get("channels", st.channels[0]),
            depth=got.get("depth", st.depth[0]),
            stride=st.stride,
            se=st.se,
            activation=st.activation,
        ))

    recipe = RecipeConfig(
        lr=recipe_fields.get("lr", space.recipe.lr[0]),
        optimizer=recipe_fields.get("optimizer", space.recipe.optimizer[0]),
        ema=recipe_fields.get("ema", space.recipe.ema[0]),
        dropout=recipe_fields.get("dropout", space.recipe.dropout[0]),
        stochastic_depth=recipe_fields.get("stochastic_depth", space.recipe.stochastic_depth[0]),
        mixup=recipe_fields.get("mixup", space.recipe.mixup[0]),
        weight_decay=recipe_fields.get("weight_decay", space.recipe.weight_decay[0]),
    )
    return Candidate(arch=ArchConfig(resolution=resolution, stages=tuple(stages)), recipe=recipe)


def extract_genes(space: SearchSpaceDef, candidate: Candidate) -> dict[str, Any]:
    """Inverse of build_candidate for the free parameters."""
    genes: dict[str, Any] = {}
    for p in free_params(space):
        target, fname = p.targets[0]
        if target == "arch":
            genes[p.key] = candidate.arch.resolution
        elif target == "recipe":
            genes[p.key] = getattr(candidate.recipe, fname)
        else:
            st = candidate.arch.stages[target]
            genes[p.key] = getattr(st, "expansion_first" if fname == "expansion" else fname)
    return genes


def validate_candidate(space: SearchSpaceDef, candidate: Candidate) -> None:
    """Raise ValidationError naming the first off-grid or malformed field."""
    if len(candidate.arch.stages) != len(space.stages):
        raise ValidationError("arch.stages", f"expected {len(space.stages)} stages, got {len(candidate.arch.stages)}")
    if candidate.arch.resolution not in space.resolution:
        raise ValidationError("resolution", f"{candidate.arch.resolution} not in grid {space.resolution}")
    for st, cfg in zip(space.stages, candidate.arch.stages):
        where = f"stage{st.index}"
        if cfg.block != st.block:
            raise ValidationError(f"{where}.block", f"{cfg.block!r} != {st.block!r}")
        if st.kernel:
            if cfg.kernel not in st.kernel:
                raise ValidationError(f"{where}.kernel", f"{cfg.kernel} not in {st.kernel}")
        elif cfg.kernel is not None:
            raise ValidationError(f"{where}.kernel", "block takes no kernel")
        if st.has_expansion:
            if cfg.expansion_first not in st.expansion_first:
                raise ValidationError(f"{where}.expansion_first", f"{cfg.expansion_first} not in {st.expansion_first}")
            if cfg.expansion_rest not in st.expansion_rest:
                raise ValidationError(f"{where}.expansion_rest", f"{cfg.expansion_rest} not in {st.expansion_rest}")
            if st.expansion_shared and cfg.expansion_first != cfg.expansion_rest:
                raise ValidationError(f"{where}.expansion", "stage uses one expansion for all blocks")
        if cfg.channels not in st.channels:
            raise ValidationError(f"{where}.channels", f"{cfg.channels} not in grid {st.channels}")
        if cfg.depth not in st.depth:
            raise ValidationError(f"{where}.depth", f"{cfg.depth} not in grid {st.depth}")
        if cfg.stride != st.stride or cfg.se != st.se or cfg.activation != st.activation:
            raise ValidationError(f"{where}", "fixed stage constants do not match the space")

    # Shared groups must agree across stages.
    for p in free_params(space):
        if len(p.targets) > 1:
            vals = set()
            for idx, fname in p.targets:
                st = candidate.arch.stages[idx]
                vals.add(getattr(st, "expansion_first" if fname == "expansion" else fname))
            if len(vals) > 1:
                raise ValidationError(p.key, f"shared group disagrees: {sorted(vals)}")

    r = candidate.recipe
    for fname, _ in RECIPE_NUMERIC_FIELDS:
        if getattr(r, fname) not in space.recipe.grid(fname):
            raise ValidationError(f"recipe.{fname}", f"{getattr(r, fname)} not in grid")
    if r.optimizer not in space.recipe.optimizer:
        raise ValidationError("recipe.optimizer", f"{r.optimizer!r} not in {space.recipe.optimizer}")
    if r.ema not in space.recipe.ema:
        raise ValidationError("recipe.ema", f"{r.ema!r} not in {space.recipe.ema}")


# ---------------------------------------------------------------------------
# Cardinality


def cardinality_counts(space: SearchSpaceDef) -> tuple[int, int]:
    """Exact (architecture, recipe) candidate counts.

    Counting is per stage: one kernel and one expansion value per stage
    regardless of depth, shared groups counted once.  Resolution is counted
    on the architecture side.
    """
    arch = 1
    recipe = 1
    for p in free_params(space):
        if p.key.startswith("recipe."):
            recipe *= len(p.values)
        else:
            arch *= len(p.values)
    return arch, recipe


def cardinality(space: SearchSpaceDef) -> tuple[float, float]:
    """log10 of the architecture and recipe counts."""
    arch = 0.0
    recipe = 0.0
    for p in free_params(space):
        if p.key.startswith("recipe."):
            recipe += math.log10(len(p.values))
        else:
            arch += math.log10(len(p.values))
    return arch, recipe


# ---------------------------------------------------------------------------
# Compound scaling


def _snap_to_grid(value: float, grid: Sequence) -> Any:
    """Nearest on-grid value, ties toward the larger entry."""
    best = grid[0]
    best_err = abs(value - grid[0])
    for g in grid[1:]:
        err = abs(value - g)
        if err < best_err or (err == best_err and g > best):
            best, best_err = g, err
    return best


def compound_scale(space: SearchSpaceDef, arch: ArchConfig,
                   depth_mult: float, width_mult: float, res_mult: float) -> ArchConfig:
    """Scale depth/width/resolution jointly, snapping back onto the space grids."""
    if depth_mult <= 0 or width_mult <= 0 or res_mult <= 0:
        raise ValueError("multipliers must be positive")
    stages = []
    for st, cfg in zip(space.stages, arch.stages):
        new_depth = int(math.floor(cfg.depth * depth_mult + 0.5))
        if new_depth < 1:
            raise ValidationError(f"stage{st.index}.depth", f"scaled depth {new_depth} < 1")
        new_depth = min(max(new_depth, st.depth[0]), st.depth[-1])
        new_channels = _snap_to_grid(cfg.channels * width_mult, st.channels)
        stages.append(replace(cfg, depth=new_depth, channels=new_channels))
    new_res = _snap_to_grid(arch.resolution * res_mult, space.resolution)
    return ArchConfig(resolution=new_res, stages=tuple(stages))


# ---------------------------------------------------------------------------
# Parsing


def _parse_grid(raw: Any, where: str, *, integer: bool = True) -> tuple[tuple, str | None, float | None]:
    """Parse a fixed scalar or {low, high, step?, shared?, unit?} mapping.

    Returns (grid values, shared group id, unit).
    """
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return ((int(raw) if integer and float(raw).is_integer() else float(raw)),), None, None
    if not isinstance(raw, Mapping):
        raise SpaceParseError(where, f"expected number or low/high mapping, got {raw!r}")
    unknown = set(raw) - {"low", "high", "step", "shared", "unit"}
    if unknown:
        raise SpaceParseError(where, f"unknown keys {sorted(unknown)}")
    try:
        low, high = raw["low"], raw["high"]
    except KeyError as e:
        raise SpaceParseError(where, f"missing {e.args[0]!r}") from None
    step = raw.get("step", 1)
    if step <= 0:
        raise SpaceParseError(where, f"step must be positive, got {step}")
    if low > high:
        raise SpaceParseError(where, f"range inverted: low ({low}) > high ({high})")
    if (high - low) % step != 0:
        raise SpaceParseError(where, f"span {high - low} is not a multiple of step {step}")
    n = int((high - low) // step) + 1
    if integer:
        values = tuple(int(low + i * step) for i in range(n))
    else:
        values = tuple(float(low + i * step) for i in range(n))
    return values, raw.get("shared"), raw.get("unit")


def _parse_stage(i: int, raw: Mapping, where: str) -> StageSpec:
    block = raw.get("block")
    if block not in BLOCK_KINDS:
        raise SpaceParseError(f"{where}.block", f"unknown block kind {block!r}")

    kernel: tuple[int, ...] = ()
    if "kernel" in raw and raw["kernel"] is not None:
        ks = raw["kernel"]
        if not isinstance(ks, list) or not ks:
            raise SpaceParseError(f"{where}.kernel", "expected a non-empty list of choices")
        if len(set(ks)) != len(ks):
            raise SpaceParseError(f"{where}.kernel", f"duplicate choices in {ks}")
        if any(not isinstance(k, int) or k % 2 == 0 for k in ks):
            raise SpaceParseError(f"{where}.kernel", f"kernel choices must be odd integers, got {ks}")
        kernel = tuple(ks)

    shared_first = shared_rest = None
    expansion_shared = False
    e_first: tuple[float, ...] = ()
    e_rest: tuple[float, ...] = ()
    if block == "mbconv" or (block == "mbpool" and "expansion" in raw):
        if "expansion" in raw:
            if "expansion_first" in raw or "expansion_rest" in raw:
                raise SpaceParseError(f"{where}.expansion", "give either expansion or expansion_first/expansion_rest")
            e_first, shared_first, _ = _parse_grid(raw["expansion"], f"{where}.expansion", integer=False)
            e_rest, expansion_shared = e_first, True
        else:
            if "expansion_first" not in raw or "expansion_rest" not in raw:
                raise SpaceParseError(f"{where}", "mbconv stage needs expansion or expansion_first + expansion_rest")
            e_first, shared_first, _ = _parse_grid(raw["expansion_first"], f"{where}.expansion_first", integer=False)
            e_rest, shared_rest, _ = _parse_grid(raw["expansion_rest"], f"{where}.expansion_rest", integer=False)
    elif block == "mbpool":
        raise SpaceParseError(f"{where}.expansion", "mbpool stage needs an expansion")

    channels, _, _ = _parse_grid(raw.get("channels"), f"{where}.channels") if raw.get("channels") is not None \
        else ((), None, None)
    if not channels:
        raise SpaceParseError(f"{where}.channels", "stage needs channels")
    depth, _, _ = _parse_grid(raw.get("depth", 1), f"{where}.depth")
    if depth[0] < 1:
        raise SpaceParseError(f"{where}.depth", f"depth must be >= 1, got {depth[0]}")

    stride = raw.get("stride", 1)
    if stride not in (1, 2):
        raise SpaceParseError(f"{where}.stride", f"stride must be 1 or 2, got {stride}")
    se = bool(raw.get("se", False))
    activation = raw.get("activation", "none")
    return StageSpec(
        index=i, block=block, kernel=kernel,
        expansion_first=e_first, expansion_rest=e_rest, expansion_shared=expansion_shared,
        channels=channels, depth=depth, stride=stride, se=se, activation=activation,
        shared_first=shared_first, shared_rest=shared_rest,
    )


def _parse_recipe(raw: Mapping, where: str) -> RecipeRanges:
    grids: dict[str, tuple] = {}
    units: dict[str, float] = {}
    for fname, default_unit in RECIPE_NUMERIC_FIELDS:
        if fname not in raw:
            raise SpaceParseError(f"{where}.{fname}", "missing recipe range")
        values, _, unit = _parse_grid(raw[fname], f"{where}.{fname}")
        grids[fname] = values
        units[fname] = float(unit) if unit is not None else default_unit

    optim = raw.get("optimizer", list(OPTIMIZERS))
    if not isinstance(optim, list) or not optim or len(set(optim)) != len(optim):
        raise SpaceParseError(f"{where}.optimizer", f"expected non-empty duplicate-free list, got {optim!r}")
    for o in optim:
        if o not in OPTIMIZERS:
            raise SpaceParseError(f"{where}.optimizer", f"unknown optimizer {o!r}")

    ema = raw.get("ema", [True, False])
    if not isinstance(ema, list) or not ema or len(set(ema)) != len(ema) or any(not isinstance(e, bool) for e in ema):
        raise SpaceParseError(f"{where}.ema", f"expected non-empty duplicate-free list of booleans, got {ema!r}")

    return RecipeRanges(
        lr=grids["lr"], dropout=grids["dropout"], stochastic_depth=grids["stochastic_depth"],
        mixup=grids["mixup"], weight_decay=grids["weight_decay"],
        optimizer=tuple(optim), ema=tuple(ema), units=units,
    )


def load_space(source: str | Path) -> SearchSpaceDef:
    """Parse a space definition from YAML text or a file path."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith((".yaml", ".yml"))):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as e:
            raise SpaceParseError(str(source), f"cannot read space file: {e}") from e
    else:
        text = source
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise SpaceParseError("<yaml>", str(e)) from e
    if not isinstance(raw, Mapping):
        raise SpaceParseError("<root>", "space file must be a mapping")
    if raw.get("version") != 1:
        raise SpaceParseError("version", f"unsupported version {raw.get('version')!r}")

    resolution, _, _ = _parse_grid(raw.get("resolution"), "resolution") if raw.get("resolution") is not None \
        else ((), None, None)
    if not resolution:
        raise SpaceParseError("resolution", "missing resolution")

    stages_raw = raw.get("stages")
    if not isinstance(stages_raw, list) or not stages_raw:
        raise SpaceParseError("stages", "space needs at least one stage")
    stages = tuple(_parse_stage(i, s, f"stages[{i}]") for i, s in enumerate(stages_raw))

    if "recipe" not in raw:
        raise SpaceParseError("recipe", "missing recipe block")
    recipe = _parse_recipe(raw["recipe"], "recipe")

    space = SearchSpaceDef(
        name=str(raw.get("name", "unnamed")),
        resolution=resolution,
        stages=stages,
        recipe=recipe,
        sgd_lr_multiplier=float(raw.get("sgd_lr_multiplier", 4.0)),
    )

    # Shared groups must reference identical grids.
    groups: dict[str, tuple] = {}
    for st in stages:
        for gid, grid in ((st.shared_first, st.expansion_first), (st.shared_rest, st.expansion_rest)):
            if gid is None:
                continue
            if gid in groups and groups[gid] != grid:
                raise SpaceParseError(f"stages[{st.index}]", f"shared group {gid!r} grids differ")
            groups[gid] = grid
    return space


def builtin_space_path(name: str) -> Path:
    """Path of a space file shipped with the package."""
    return Path(__file__).parent / "spaces" / f"{name}.yaml"


def fixed_arch(space: SearchSpaceDef) -> ArchConfig:
    """The single architecture of a space whose arch grids are all fixed."""
    for p in free_params(space):
        if not p.key.startswith("recipe."):
            raise ValidationError(p.key, "architecture is not fully fixed")
    stages = tuple(
        StageConfig(
            block=st.block,
            kernel=st.kernel[0] if st.kernel else None,
            expansion_first=st.expansion_first[0] if st.has_expansion else None,
            expansion_rest=st.expansion_rest[0] if st.has_expansion else None,
            channels=st.channels[0],
            depth=st.depth[0],
            stride=st.stride,
            se=st.se,
            activation=st.activation,
        )
        for st in space.stages
    )
    return ArchConfig(resolution=space.resolution[0], stages=stages)


# ---------------------------------------------------------------------------
# Serialization (candidate files round-trip losslessly)


def space_to_dict(space: SearchSpaceDef) -> dict:
    return {
        "name": space.name,
        "resolution": list(space.resolution),
        "sgd_lr_multiplier": space.sgd_lr_multiplier,
        "stages": [
            {
                "block": st.block,
                "kernel": list(st.kernel),
                "expansion_first": list(st.expansion_first),
                "expansion_rest": list(st.expansion_rest),
                "expansion_shared": st.expansion_shared,
                "channels": list(st.channels),
                "depth": list(st.depth),
                "stride": st.stride,
                "se": st.se,
                "activation": st.activation,
                "shared_first": st.shared_first,
                "shared_rest": st.shared_rest,
            }
            for st in space.stages
        ],
        "recipe": {
            "lr": list(space.recipe.lr),
            "dropout": list(space.recipe.dropout),
            "stochastic_depth": list(space.recipe.stochastic_depth),
            "mixup": list(space.recipe.mixup),
            "weight_decay": list(space.recipe.weight_decay),
            "optimizer": list(space.recipe.optimizer),
            "ema": list(space.recipe.ema),
            "units": dict(space.recipe.units),
        },
    }


def candidate_to_dict(candidate: Candidate) -> dict:
    a, r = candidate.arch, candidate.recipe
    return {
        "arch": {
            "resolution": a.resolution,
            "stages": [
                {
                    "block": s.block,
                    "kernel": s.kernel,
                    "expansion_first": s.expansion_first,
                    "expansion_rest": s.expansion_rest,
                    "channels": s.channels,
                    "depth": s.depth,
                    "stride": s.stride,
                    "se": s.se,
                    "activation": s.activation,
                }
                for s in a.stages
            ],
        },
        "recipe": {
            "lr": r.lr,
            "optimizer": r.optimizer,
            "ema": r.ema,
            "dropout": r.dropout,
            "stochastic_depth": r.stochastic_depth,
            "mixup": r.mixup,
            "weight_decay": r.weight_decay,
        },
    }


def candidate_from_dict(data: Mapping) -> Candidate:
    a = data["arch"]
    stages = tuple(
        StageConfig(
            block=s["block"], kernel=s["kernel"],
            expansion_first=s["expansion_first"], expansion_rest=s["expansion_rest"],
            channels=s["channels"], depth=s["depth"], stride=s["stride"],
            se=s["se"], activation=s["activation"],
        )
        for s in a["stages"]
    )
    r = data["recipe"]
    return Candidate(
        arch=ArchConfig(resolution=a["resolution"], stages=stages),
        recipe=RecipeConfig(
            lr=r["lr"], optimizer=r["optimizer"], ema=r["ema"], dropout=r["dropout"],
            stochastic_depth=r["stochastic_depth"], mixup=r["mixup"], weight_decay=r["weight_decay"],
        ),
    )


def enumerate_candidates(space: SearchSpaceDef) -> Iterator[Candidate]:
    """Exhaustive enumeration in canonical gene order (small spaces only)."""
    params = free_params(space)

    def rec(i: int, genes: dict) -> Iterator[Candidate]:
        if i == len(params):
            yield build_candidate(space, genes)
            return
        for v in params[i].values:
            genes[params[i].key] = v
            yield from rec(i + 1, genes)
        del genes[params[i].key]

    yield from rec(0, {})
