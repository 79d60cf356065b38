"""Map-guided hyperspectral superpixel segmentation toolkit."""

from .errors import DegeneracyError, InputError
from .hsio import (ControlPoints, HsiCube, PipelineConfig, PolygonSet,
                   read_control_points, read_cube, read_polygons, write_cube,
                   write_label_map)
from .hslic import HslicParams, LabelMap, run_hslic
from .mapalign import AffineTransform, fit_affine, merge_by_polygon, rasterize
from .spmlda import (Endmember, PartialLabelSet, ProportionMap, SamplerParams,
                     init_endmembers, log_likelihood, run_spmlda)
from .finalseg import cleanup, connected_components, kmeans
from .validity import (ValidityReport, davies_bouldin, dunn_index,
                       evaluate_runs, silhouette)
from .pipeline import PipelineArtifacts, run_pipeline

__version__ = "0.1.0"
