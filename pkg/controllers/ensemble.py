"""
Seeded random 3-SAT ensembles: generation, satisfiability labelling and the
JSON manifest that lists members with their seeds and labels.
"""

import logging
import os
from dataclasses import replace
from functools import partial
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from controllers.cnf import (
    GENERATOR_NAME,
    RNG_NAME,
    GeneratorSpec,
    generate_random_3sat,
    write_dimacs,
)
from controllers.errors import DatasetError, HeaderVersionError
from controllers.runs import parallel_map
from controllers.settings import stable_fingerprint
from controllers.solver import SolverConfig, Verdict, solve

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
# candidates tried per requested member before giving up on --keep
MAX_ATTEMPTS_PER_MEMBER = 50

Keep = Literal["any", "sat", "unsat"]


class EnsembleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_vars: int = Field(..., ge=3)
    ratio: float = Field(..., gt=0)
    count: int = Field(..., ge=1)
    seed: int = Field(default=0, ge=0)
    keep: Keep = "any"
    prefix: str = "rand3"


class ManifestMember(BaseModel):
    instance_id: str
    file: str
    seed: int
    label: Optional[Literal["sat", "unsat", "unknown"]] = None
    conflicts: Optional[int] = None


class EnsembleManifest(BaseModel):
    schema_version: int = MANIFEST_SCHEMA_VERSION
    generator: str = GENERATOR_NAME
    rng: str = RNG_NAME
    numpy_version: str = np.__version__
    spec: EnsembleSpec
    labelled_with: Optional[SolverConfig] = None
    fingerprint: str = ""
    members: list[ManifestMember] = []

    def instances(self, directory: str) -> list[tuple[str, str]]:
        """(instance_id, path) pairs, paths resolved against the manifest directory."""
        return [(m.instance_id, os.path.join(directory, m.file)) for m in self.members]

    def labels(self) -> dict[str, Optional[str]]:
        return {m.instance_id: m.label for m in self.members}


def member_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for ensemble member `index`."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def member_id(prefix: str, index: int) -> str:
    return f"{prefix}_{index:05d}"


def _label_formula(task: tuple[int, int], spec: EnsembleSpec, solver_config: SolverConfig):
    index, seed = task
    formula = generate_random_3sat(GeneratorSpec(num_vars=spec.num_vars, ratio=spec.ratio, seed=seed))
    result = solve(formula, solver_config)
    label = {Verdict.SAT: "sat", Verdict.UNSAT: "unsat"}.get(result.verdict, "unknown")
    return index, seed, formula, label, result.total_conflicts


def generate_ensemble(spec: EnsembleSpec, out_dir: str, solver_config: Optional[SolverConfig] = None,
                      jobs: int = 1) -> EnsembleManifest:
    """
    Write `spec.count` members plus the manifest into out_dir. Members are
    labelled by solving when a solver config is given (required for keep
    sat/unsat); candidates whose label does not match are skipped.
    """
    if spec.keep != "any" and solver_config is None:
        raise ValueError("keeping only sat or unsat members needs a solver to label them")
    os.makedirs(out_dir, exist_ok=True)
    fingerprint = stable_fingerprint(spec, solver_config)

    members: list[ManifestMember] = []
    next_index = 0
    limit = spec.count * (MAX_ATTEMPTS_PER_MEMBER if spec.keep != "any" else 1)
    while len(members) < spec.count and next_index < limit:
        batch = range(next_index, min(limit, next_index + (spec.count - len(members))))
        next_index = batch.stop
        tasks = [(i, member_seed(spec.seed, i)) for i in batch]
        if solver_config is None:
            generated = [
                (i, s, generate_random_3sat(GeneratorSpec(num_vars=spec.num_vars, ratio=spec.ratio, seed=s)),
                 None, None)
                for i, s in tasks
            ]
        else:
            worker = partial(_label_formula, spec=spec, solver_config=solver_config)
            generated = parallel_map(worker, tasks, jobs=jobs, desc="gen")
        for index, seed, formula, label, conflicts in generated:
            if spec.keep != "any" and label != spec.keep:
                continue
            if label == "unknown":
                logger.warning("%s hit the conflict budget while labelling", member_id(spec.prefix, index))
            name = member_id(spec.prefix, index)
            stamped = replace(formula, comments=formula.comments + (f"fingerprint: {fingerprint}",))
            write_dimacs(os.path.join(out_dir, f"{name}.cnf"), stamped)
            members.append(ManifestMember(instance_id=name, file=f"{name}.cnf", seed=seed,
                                          label=label, conflicts=conflicts))
            if len(members) == spec.count:
                break

    if len(members) < spec.count:
        logger.warning("kept %d of %d requested %s members after %d candidates",
                       len(members), spec.count, spec.keep, next_index)
    manifest = EnsembleManifest(
        spec=spec,
        labelled_with=solver_config,
        fingerprint=fingerprint,
        members=members,
    )
    write_manifest(os.path.join(out_dir, MANIFEST_NAME), manifest)
    logger.info("generated %d members in %s", len(members), out_dir)
    return manifest


def write_manifest(path: str, manifest: EnsembleManifest) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json(indent=2))
        f.write("\n")
    return path


def read_manifest(path: str) -> EnsembleManifest:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = EnsembleManifest.model_validate_json(f.read())
    except FileNotFoundError:
        raise DatasetError(f"no ensemble manifest at {path}") from None
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION:
        raise HeaderVersionError(f"{path}: unsupported manifest schema {manifest.schema_version}")
    return manifest


def load_instances(path: str) -> tuple[list[tuple[str, str]], dict[str, Optional[str]]]:
    """
    Instances from a manifest (file or directory holding one), a single .cnf
    file, or a directory of .cnf files. Returns (instances, known labels).
    """
    if os.path.isdir(path) and not os.path.exists(os.path.join(path, MANIFEST_NAME)):
        names = sorted(n for n in os.listdir(path) if n.endswith(".cnf"))
        if not names:
            raise DatasetError(f"no .cnf files in {path}")
        return [(os.path.splitext(n)[0], os.path.join(path, n)) for n in names], {}
    if path.endswith(".cnf"):
        return [(os.path.splitext(os.path.basename(path))[0], path)], {}
    manifest = read_manifest(path)
    directory = path if os.path.isdir(path) else os.path.dirname(path)
    return manifest.instances(directory), manifest.labels()
