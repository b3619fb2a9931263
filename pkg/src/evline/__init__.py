"""evline: real-time line segment detection and tracking on event streams."""

from .detector import (DetectParams, LatticeState, LineSegment, LineStatus,
                       detect_block, detection_pass)
from .events import (Event, EventArray, GroundTruthSegment, SceneSpec,
                     SegmentSpec, SensorGeometry, generate_scene,
                     read_event_array, read_events, read_ground_truth,
                     write_events, write_ground_truth)
from .evaluation import (LifetimeStats, PRPoint, lifetime_stats, pr_at,
                         pr_series, rasterize)
from .lattice import BlockCoord, LatticeGeometry
from .linefit import (Candidate, DegenerateLineError, Line, ScoreParams,
                      clip_to_rect, distances, effective_ratio, fit_line,
                      fitting_score, occupancy_ratio, point_distances)
from .pipeline import (PipelineConfig, PipelineMetrics, PipelineRun,
                       run_lockstep, run_pipeline, run_threaded)
from .scarf import ScarfStorage, Snapshot, StoredEvent, read_pgm, write_pgm
from .trace import TraceRow, read_trace, write_trace
from .tracker import (TrackParams, hypotheses, track_segment, tracking_pass,
                      transfer_admin, update_suppression)

__version__ = "0.1.0"
