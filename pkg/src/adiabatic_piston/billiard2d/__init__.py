"""Two-dimensional containers: geometry, exact piston dynamics and billiard statistics."""

from .dynamics import (Billiard2DEngine, FullState2D, Particle2D, collide_piston_2d, is_clean_collision,
                       next_boundary_hit, sample_state_2d, simulate_2d)
from .geometry import (PRESETS, Arc, BilliardDomain, GeometryError, Segment, SingularTrajectory, Table, box,
                       get_domain, reflect, sinai, stadium_ends, trace_many)
from .measures import (Estimate, flux_time_average, hemisphere_mean_cos, induced_piston_stats, inducing_check,
                       mean_free_flight, sample_angles, sample_collision_measure, santalo_prediction)
