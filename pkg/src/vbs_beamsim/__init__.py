"""Virtual-base-station beam alignment simulator.

Builds VBSs (mirror images of the BS) from a simulated LiDAR scan,
reconstructs coarse channels from them, and runs top-S partial beam
training against an image-method ground-truth oracle.
"""

__version__ = "0.1.0"
