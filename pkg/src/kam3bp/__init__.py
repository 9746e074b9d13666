"""kam3bp: desk-scale numerics for two-scale KAM estimates and the planetary
three-body problem near the co-planar, co-circular, outer-retrograde
configuration."""

__version__ = "0.1.0"
