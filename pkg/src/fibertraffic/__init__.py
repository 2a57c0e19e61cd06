"""Vehicle detection, tracking, and weigh-in-motion from roadside
distributed acoustic sensing strain records, with a ground-truthed simulator
and driving-test calibration."""

__version__ = "0.1.0"

from .types import (CalibrationTable, ChannelCalibration, ChannelMatrix, Detection,
                    Pattern, Polarity, classify_pattern)
from .filters import highpass_wheel, loess_smooth, lowpass_quasistatic
from .kernel import gauge_average, gauge_averaged_kernel, kernel_peak, quasistatic_kernel
from .scene import (Direction, GroundTruth, SceneConfig, Trajectory, VehicleSpec,
                    build_sensor_layout)
from .simulate import synthesize
from .calibrate import (GpsTrack, TapEvent, build_calibration_table, estimate_transmissibility,
                        extrapolate_lane, geolocate_channels, sync_clocks)
from .detection import DetectorConfig, DetectionSet, detect_matrix, per_sensor_detect, prominence_scan
from .tracking import MotionModel, StateEstimate, associate, predict, rts_smooth, update
from .tracker import TrackerConfig, VehicleTrack, track_multi, track_single
from .characterize import VehicleCharacter, characterize_track, estimate_weight, estimate_wheelbase
