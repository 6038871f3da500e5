"""Lane-level positioning from phone sensors."""

from ._lanequest import (
    AnchorStore,
    DomainError,
    DriveTrace,
    Error,
    IoError,
    ParseError,
    RoadMap,
    Scenario,
    SimTrip,
    TripEvents,
    ValidationError,
    build_map,
    complement_distribution,
    config_keys,
    default_config,
    estimate_curve_radius,
    estimate_sigma_mad,
    estimate_trip,
    evaluate,
    extract_events,
    generate_fleet,
    init_belief,
    learn_fleet,
    motion_update,
    perception_update,
    simulate,
    subsample_events,
    trip_seed,
)

__all__ = [name for name in dir() if not name.startswith("_")]
