"""Mobius reflection groups on S^3 and quasiregular maps of the unit 3-ball."""

from qrball.inversive import (
    INFINITY,
    InversiveSphere,
    MobiusMap,
    Circle3,
    sphere_make,
    plane_make,
    reflect_in,
    intersection_angle,
    classify_and_fix,
    hyperbolic_distance,
    r_of_R,
    R_of_r,
    elliptic_about_circle,
)

__all__ = [
    "INFINITY",
    "InversiveSphere",
    "MobiusMap",
    "Circle3",
    "sphere_make",
    "plane_make",
    "reflect_in",
    "intersection_angle",
    "classify_and_fix",
    "hyperbolic_distance",
    "r_of_R",
    "R_of_r",
    "elliptic_about_circle",
]
