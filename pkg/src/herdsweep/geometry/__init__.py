"""Set representations, tubes, quadrature and metric computations."""

from .curves import Circle, ClosedCurve, Ellipse, SplineCurve, SurfaceQuadrature, curve_quadrature, refine_near
from .sets import (
    SetState,
    disk,
    distance_to_boundary,
    distance_to_set,
    ellipse,
    grid_samples,
    hausdorff_distance,
    hausdorff_points,
    polygon,
    set_volume,
    square,
)
from .tube import (
    BallFamily,
    EllipseFamily,
    LevelSetFamily,
    LevelSetGrid,
    MovingTube,
    ball_tube,
    ellipse_tube,
    levelset_tube,
    project_ball,
    project_onto,
    quadrature_of_boundary,
    signed_distance_grid,
    signed_distance_profile,
)
