"""End-to-end orchestration of the three-stage segmentation.

Stage 1 clusters the cube into superpixels and, when map data is supplied,
merges superpixels overlapping common polygons. Stage 2 unmixes the cube
with the (merged) superpixels as documents and polygon class tags as
partial labels. Stage 3 clusters the proportion vectors, relabels spatial
components and folds undersized segments away.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .errors import InputError
from .finalseg import cleanup, connected_components, kmeans
from .hsio import ControlPoints, HsiCube, PipelineConfig, PolygonSet
from .hslic import HslicParams, LabelMap, run_hslic
from .mapalign import fit_affine, merge_by_polygon, rasterize
from .spmlda import PartialLabelSet, ProportionMap, SamplerParams, run_spmlda


@dataclass
class PipelineArtifacts:
    hslic_labels: LabelMap
    merged_labels: LabelMap | None
    merged_tags: dict                 # merged superpixel label -> class tag
    tag_to_endmember: dict            # class tag -> endmember index
    proportions: ProportionMap
    endmembers: list
    final_labels: LabelMap
    seed: int
    timings: dict = field(default_factory=dict)

    @property
    def superpixels(self) -> LabelMap:
        """Stage-2 input: merged superpixels when map-guided, else stage 1."""
        return self.merged_labels if self.merged_labels is not None else self.hslic_labels


def derive_partial_labels(merged_tags: dict, M: int):
    """Map class tags to endmember indices (sorted tag order) and build the
    per-superpixel allowed sets."""
    tags = sorted(set(merged_tags.values()))
    if len(tags) > M:
        raise InputError(
            f"{len(tags)} distinct class tags need at least M={len(tags)} endmembers, "
            f"got M={M}")
    tag_to_endmember = {tag: i for i, tag in enumerate(tags)}
    allowed = {sp: {tag_to_endmember[tag]} for sp, tag in merged_tags.items()}
    return PartialLabelSet(allowed), tag_to_endmember


def run_pipeline(cube: HsiCube, config: PipelineConfig,
                 polygons: PolygonSet | None = None,
                 control_points: ControlPoints | None = None,
                 seed: int | None = None) -> PipelineArtifacts:
    """Run all three stages and return every intermediate artifact."""
    config.validate()
    seed = config.seed if seed is None else seed
    if polygons is not None and len(polygons) and control_points is None:
        raise InputError("polygons were supplied without control points; "
                         "alignment needs both")
    timings = {}

    t0 = time.perf_counter()
    params = HslicParams.for_image(
        cube.height, cube.width, config.K, config.m, n=config.n,
        max_iters=config.max_iters, residual_tol=config.residual_tol,
        normalize_bands=config.normalize_bands,
        enforce_connectivity=config.enforce_connectivity)
    hslic_labels, _ = run_hslic(cube, params, seed=seed)
    timings["hslic"] = time.perf_counter() - t0

    merged_labels = None
    merged_tags: dict = {}
    t0 = time.perf_counter()
    if polygons is not None and len(polygons):
        transform = fit_affine(control_points)
        mask = rasterize(polygons, transform, cube.height, cube.width)
        merged_labels, merged_tags = merge_by_polygon(
            hslic_labels, mask, config.min_overlap)
    timings["mapalign"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    partial, tag_to_endmember = derive_partial_labels(merged_tags, config.M)
    sampler = SamplerParams(
        M=config.M, alpha=config.alpha, lambda_pm=config.lambda_pm,
        epsilon=config.epsilon, T=config.T, seed=seed, burn_in=config.burn_in)
    superpixels = merged_labels if merged_labels is not None else hslic_labels
    proportions, endmembers = run_spmlda(cube, superpixels, partial, sampler)
    for tag, k in tag_to_endmember.items():
        endmembers[k].tag = tag
    timings["spmlda"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    km = kmeans(proportions, config.K_final, seed=seed, restarts=config.restarts)
    components = connected_components(km.assignments, cube.height, cube.width)
    final_labels = cleanup(components, config.min_segment)
    timings["finalseg"] = time.perf_counter() - t0

    return PipelineArtifacts(
        hslic_labels=hslic_labels,
        merged_labels=merged_labels,
        merged_tags=merged_tags,
        tag_to_endmember=tag_to_endmember,
        proportions=proportions,
        endmembers=endmembers,
        final_labels=final_labels,
        seed=seed,
        timings=timings,
    )
