"""Dense-crowd pedestrian tracking toolkit.

Ships an elliptical velocity-obstacle motion model, sparse segmented-box
appearance features, Hungarian data association, a track lifecycle manager,
CLEAR-MOT evaluation, and a synthetic dense-crowd generator used in place
of a neural detector.
"""

__version__ = "0.1.0"
