"""Numerical laboratory for sprays with prescribed geodesic curvature on surfaces."""
