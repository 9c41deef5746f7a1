"""polyvem: nonconforming virtual element solver for fourth-order
semilinear parabolic problems on polygonal meshes."""

__version__ = "0.1.0"
